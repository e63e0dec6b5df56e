"""Synthetic language pairs (rotation plus noise) and classification tasks.

A rotated copy of a random embedding table is the simplest "second
language" on which both the relative-representation construction and the
least-squares map are exactly solvable, so stitching can be checked end to end.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from ._util import substream
from .classifier import LabeledDataset, TrainConfig, evaluate_macro_f1, stitch, train
from .embeddings import EmbeddingTable, unit_rows
from .lexicon import AnchorSet
from .mapping import anchor_embeddings, ls_fit, ls_project, map_table
from .relrep import SCHEMES, WeightingScheme

METHODS = SCHEMES + ("ls",)
REPORT_COLUMNS = (
    "method", "scheme", "k", "tau", "sigma", "anchors", "source_f1", "zero_shot_f1", "seed",
)


@dataclass(frozen=True)
class SynthScenario:
    vocab_size: int = 500
    dim: int = 16
    sigma: float = 0.3
    n_anchors: int = 250
    n_classes: int = 3
    n_examples: int = 600
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "dim", "n_anchors", "n_classes", "n_examples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_anchors > self.vocab_size:
            raise ValueError("more anchors than vocabulary entries")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError("sigma must be finite and non-negative")


@dataclass(frozen=True, eq=False)
class SynthPair:
    source: EmbeddingTable
    target: EmbeddingTable
    anchors: AnchorSet
    rotation: np.ndarray


def random_rotation(dim, rng):
    """Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def generate_pair(scenario):
    """Source table, rotated-and-noised target table, and identity gold anchors.

    Source rows are unit Gaussian directions; target rows are
    ``source @ Q + sigma * noise``. Anchors pair w_i with v_i for the first
    ``n_anchors`` indices.
    """
    s = scenario
    src = unit_rows(substream(s.seed, "synth-source").standard_normal((s.vocab_size, s.dim)))
    src = src.astype(np.float32).astype(np.float64)
    q = random_rotation(s.dim, substream(s.seed, "synth-rotation"))
    tgt = src @ q
    if s.sigma > 0:
        tgt = tgt + s.sigma * substream(s.seed, "synth-noise").standard_normal(tgt.shape)
    src_tokens = [f"w{i}" for i in range(s.vocab_size)]
    tgt_tokens = [f"v{i}" for i in range(s.vocab_size)]
    idx = np.arange(s.n_anchors)
    anchors = AnchorSet(src_tokens[: s.n_anchors], tgt_tokens[: s.n_anchors], idx, idx)
    return SynthPair(EmbeddingTable(src_tokens, src), EmbeddingTable(tgt_tokens, tgt), anchors, q)


def pick_centroids(table, n_classes):
    """Farthest-point selection by cosine, starting from row 0 (no randomness)."""
    if n_classes > len(table):
        raise ValueError("more classes than vocabulary entries")
    x = unit_rows(table.matrix)
    chosen = [0]
    closest = x @ x[0]
    for _ in range(1, n_classes):
        nxt = int(np.argmin(closest))
        chosen.append(nxt)
        closest = np.maximum(closest, x @ x[nxt])
    return chosen


def class_pools(table, centroids, pool_size=None):
    """Disjoint token pools: each token goes to its nearest centroid, and a
    class keeps its `pool_size` members closest to the centroid."""
    x = unit_rows(table.matrix)
    sims = x @ x[centroids].T
    owner = np.argmax(sims, axis=1)
    pool_size = pool_size or max(5, len(table) // (4 * len(centroids)))
    pools = []
    for c in range(len(centroids)):
        members = np.flatnonzero(owner == c)
        order = members[np.argsort(-sims[members, c], kind="stable")]
        pools.append(order[:pool_size])
    return pools


def generate_task(table, n_classes, n, seed, length=(5, 12), pool_size=None):
    """Bag-of-token examples drawn around well-separated centroid tokens."""
    if n < 1:
        raise ValueError("n must be positive")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    pools = class_pools(table, pick_centroids(table, n_classes), pool_size)
    rng = np.random.default_rng(seed)
    labels = rng.integers(n_classes, size=n)
    lengths = rng.integers(length[0], length[1] + 1, size=n)
    sequences = []
    for y, m in zip(labels, lengths):
        rows = rng.choice(pools[y], size=m, replace=True)
        sequences.append([table.tokens[r] for r in rows])
    return LabeledDataset(sequences, labels, n_classes)


def translate_dataset(dataset, src_table, tgt_table):
    """Replace each token by the target token at the same row index."""
    tr = {s: t for s, t in zip(src_table.tokens, tgt_table.tokens)}
    return LabeledDataset(
        [[tr[t] for t in seq] for seq in dataset.sequences],
        dataset.labels.copy(),
        dataset.n_classes,
        dataset.label_names,
    )


def run_end_to_end(scenario, methods=METHODS, k=50, tau=1.0, train_config=None, threads=1):
    """Train on the source language, stitch, evaluate zero-shot on the target.

    Returns one report row (dict keyed by REPORT_COLUMNS) per method. RR
    methods train on the mapped source table and stitch in the mapped
    target table; LS trains on the raw source table and stitches in the
    least-squares projection of the target table.
    """
    s = scenario
    pair = generate_pair(s)
    train_set = generate_task(pair.source, s.n_classes, s.n_examples, substream(s.seed, "task-train"))
    test_set = generate_task(pair.source, s.n_classes, s.n_examples, substream(s.seed, "task-test"))
    test_tgt = translate_dataset(test_set, pair.source, pair.target)
    cfg = train_config or TrainConfig(seed=int(substream(s.seed, "train").integers(2**31)))
    src_anchor_emb = anchor_embeddings(pair.source, pair.anchors)

    rows = []
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
        if method == "ls":
            transform = ls_fit(pair.target.rows(pair.anchors.tgt_indices), src_anchor_emb)
            train_table = pair.source
            target_table = ls_project(pair.target, transform).table
            row_k, row_tau, scheme_name = "", "", ""
        else:
            scheme = WeightingScheme(method, tau, min(k, len(pair.anchors)))
            train_table = map_table(pair.source, pair.anchors, src_anchor_emb, scheme, "source", threads).table
            target_table = map_table(pair.target, pair.anchors, src_anchor_emb, scheme, "target", threads).table
            row_k, row_tau, scheme_name = scheme.k, scheme.temperature, method
        clf = train(train_set, train_table, cfg)
        source_f1 = evaluate_macro_f1(clf, test_set).macro_f1
        zero_shot_f1 = evaluate_macro_f1(stitch(clf, target_table), test_tgt).macro_f1
        rows.append({
            "method": "ls" if method == "ls" else "rr",
            "scheme": scheme_name,
            "k": row_k,
            "tau": row_tau,
            "sigma": s.sigma,
            "anchors": len(pair.anchors),
            "source_f1": source_f1,
            "zero_shot_f1": zero_shot_f1,
            "seed": s.seed,
        })
    return rows


def report_tsv(rows):
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append("\t".join(_cell(r[c]) for c in REPORT_COLUMNS))
    return "\n".join(lines) + "\n"


def report_json(rows, scenario=None):
    payload = {"rows": rows}
    if scenario is not None:
        payload["scenario"] = asdict(scenario)
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)
