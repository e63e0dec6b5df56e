import numpy as np
import pytest

from rrstitch.embeddings import EmbeddingTable


def write_vec(path, rows, header=None):
    """Write `rows` [(token, [floats])] as a .vec file; returns the path."""
    dim = len(rows[0][1]) if rows else 0
    lines = [header or f"{len(rows)} {dim}"]
    lines += [tok + " " + " ".join(repr(float(x)) for x in vec) for tok, vec in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def orthogonal(dim, seed):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_table(rng):
    tokens = [f"t{i}" for i in range(40)]
    return EmbeddingTable(tokens, rng.standard_normal((40, 6)))


# One PASS/FAIL line per acceptance criterion in the terminal summary.

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion check")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when not in ("setup", "call"):
        return
    number, title = marker.args
    ok = call.excinfo is None
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "tests": []})
    entry["ok"] &= ok
    if call.when == "call" or not ok:
        entry["tests"].append((item.name, ok))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {entry['title']}")
        for name, ok in entry["tests"]:
            if not ok:
                terminalreporter.write_line(f"         failed: {name}")
