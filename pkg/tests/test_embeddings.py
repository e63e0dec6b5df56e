import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rrstitch.embeddings import (
    EmbeddingTable,
    VecFormatError,
    Vocabulary,
    cosine_matrix,
    cosine_similarity,
    load_vec_file,
    save_vec_file,
)

from conftest import write_vec


class TestLoadVecFile:
    def test_basic_parse(self, tmp_path):
        p = write_vec(tmp_path / "a.vec", [("a", [1, 0, 0]), ("b", [0, 1, 0])], header="2 3")
        t = load_vec_file(p)
        assert len(t) == 2 and t.dim == 3
        assert t.tokens == ("a", "b")
        np.testing.assert_array_equal(t.matrix, [[1, 0, 0], [0, 1, 0]])
        assert t.matrix.dtype == np.float32
        assert t.skipped == 0

    def test_duplicate_keeps_first(self, tmp_path):
        p = write_vec(tmp_path / "d.vec", [("a", [1, 2]), ("a", [3, 4])])
        t = load_vec_file(p)
        assert len(t) == 1
        np.testing.assert_array_equal(t.vector("a"), [1, 2])
        assert t.skipped == 1

    def test_zero_norm_row_skipped(self, tmp_path):
        # the cosine kernel has no defined value for a zero vector
        assert cosine_similarity([0, 0, 0], [1, 0, 0]) == 0.0
        p = write_vec(tmp_path / "z.vec", [("a", [1, 0, 0]), ("z", [0, 0, 0])])
        t = load_vec_file(p)
        assert "z" not in t and len(t) == 1
        assert t.skipped == 1

    def test_malformed_rows_skipped(self, tmp_path):
        p = tmp_path / "m.vec"
        p.write_text("4 2\na 1 2\nb 1\nc x 2\nd 3 4 5\n", encoding="utf-8")
        t = load_vec_file(p)
        assert t.tokens == ("a",)
        assert t.skipped == 3

    def test_non_finite_skipped(self, tmp_path):
        p = tmp_path / "n.vec"
        p.write_text("2 2\na 1 nan\nb 1 2\n", encoding="utf-8")
        assert load_vec_file(p).tokens == ("b",)

    def test_trailing_space_tolerated(self, tmp_path):
        p = tmp_path / "s.vec"
        p.write_text("1 2\na 0.5 -0.25 \n", encoding="utf-8")
        np.testing.assert_array_equal(load_vec_file(p).vector("a"), [0.5, -0.25])

    @pytest.mark.parametrize("header", ["", "3", "x 3", "2 0", "1 2 3"])
    def test_bad_header(self, tmp_path, header):
        p = tmp_path / "h.vec"
        p.write_text(header + "\na 1 2\n", encoding="utf-8")
        with pytest.raises(VecFormatError):
            load_vec_file(p)

    def test_expected_dim_mismatch(self, tmp_path):
        p = write_vec(tmp_path / "a.vec", [("a", [1, 2])])
        with pytest.raises(VecFormatError, match="expected 3"):
            load_vec_file(p, expected_dim=3)
        assert load_vec_file(p, expected_dim=2).dim == 2

    def test_no_rows(self, tmp_path):
        p = tmp_path / "e.vec"
        p.write_text("1 2\nz 0 0\n", encoding="utf-8")
        with pytest.raises(VecFormatError, match="no well-formed rows"):
            load_vec_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_vec_file(tmp_path / "nope.vec")


class TestSaveVecFile:
    def test_round_trip(self, tmp_path):
        t = EmbeddingTable(["a", "b"], [[1, 0, 0], [0, 1, 0]])
        save_vec_file(t, tmp_path / "o.vec")
        u = load_vec_file(tmp_path / "o.vec")
        assert u.tokens == t.tokens
        np.testing.assert_array_equal(u.matrix, t.matrix)

    def test_header_and_layout(self, tmp_path):
        t = EmbeddingTable(["a", "b"], [[1, 0.5], [-2, 0.25]])
        save_vec_file(t, tmp_path / "o.vec")
        assert (tmp_path / "o.vec").read_text() == "2 2\na 1 0.5\nb -2 0.25\n"

    def test_empty_table_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            save_vec_file(EmbeddingTable([], np.zeros((0, 3))), tmp_path / "o.vec")

    def test_negative_components_preserved(self, tmp_path, rng):
        m = -np.abs(rng.standard_normal((20, 5))) * 3
        t = EmbeddingTable([f"w{i}" for i in range(20)], m)
        save_vec_file(t, tmp_path / "o.vec")
        reparsed = np.array(
            [[float(x) for x in line.split()[1:]] for line in (tmp_path / "o.vec").read_text().splitlines()[1:]]
        )
        assert np.all(reparsed < 0)
        np.testing.assert_array_equal(reparsed.astype(np.float32), t.matrix)

    def test_six_digit_precision(self, tmp_path):
        t = EmbeddingTable(["a"], [[0.123456789, -0.5]])
        save_vec_file(t, tmp_path / "o.vec", precision=6)
        assert (tmp_path / "o.vec").read_text().splitlines()[1] == "a 0.123457 -0.5"
        u = load_vec_file(tmp_path / "o.vec")
        np.testing.assert_allclose(u.matrix, t.matrix, atol=1e-6)

    def test_unwritable_path(self, tmp_path):
        t = EmbeddingTable(["a"], [[1.0]])
        with pytest.raises(OSError):
            save_vec_file(t, tmp_path / "missing-dir" / "o.vec")

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float32, (7, 4), elements=st.floats(-1e4, 1e4, width=32)))
    def test_round_trip_property(self, tmp_path_factory, m):
        # loader rejects (near-)zero rows by design
        m[np.abs(m).max(axis=1) < 1e-3, 0] = 1.0
        t = EmbeddingTable([f"w{i}" for i in range(7)], m)
        path = tmp_path_factory.mktemp("rt") / "t.vec"
        save_vec_file(t, path)
        u = load_vec_file(path)
        assert u.tokens == t.tokens
        assert np.max(np.abs(u.matrix - t.matrix)) <= 1e-6


class TestVocabulary:
    def test_bijective(self):
        v = Vocabulary(["a", "b", "c"])
        assert [v.index[t] for t in v] == [0, 1, 2]
        assert "b" in v and "z" not in v

    @pytest.mark.parametrize("tokens", [["a", "a"], ["a b"], [""], ["a\tb"]])
    def test_rejects_invalid(self, tokens):
        with pytest.raises(ValueError):
            Vocabulary(tokens)

    def test_table_shape_checked(self):
        with pytest.raises(ValueError):
            EmbeddingTable(["a", "b"], np.ones((3, 2)))

    def test_table_immutable(self, small_table):
        with pytest.raises(ValueError):
            small_table.matrix[0, 0] = 1.0


class TestCosine:
    @pytest.mark.parametrize(
        "u, v, expected",
        [
            ([1, 2, 3], [1, 2, 3], 1.0),
            ([1, 0], [0, 1], 0.0),
            ([1, 2], [2, 4], 1.0),
            ([1, 0], [-1, 0], -1.0),
        ],
    )
    def test_examples(self, u, v, expected):
        assert cosine_similarity(u, v) == pytest.approx(expected, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity([1, 2], [1, 2, 3])

    def test_zero_norm_is_zero(self):
        assert cosine_similarity([0, 0], [0, 0]) == 0.0
        assert cosine_similarity([1e-14, 0], [1, 0]) == 0.0

    vec = arrays(np.float64, 5, elements=st.floats(-1e3, 1e3))

    @given(vec, vec)
    def test_symmetric_exactly(self, u, v):
        assert cosine_similarity(u, v) == cosine_similarity(v, u)

    @given(vec, vec, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, u, v, a, b):
        if np.linalg.norm(u) < 1e-6 or np.linalg.norm(v) < 1e-6:
            return
        assert abs(cosine_similarity(a * u, b * v) - cosine_similarity(u, v)) <= 1e-6

    @given(vec, vec)
    def test_bounded(self, u, v):
        assert abs(cosine_similarity(u, v)) <= 1.0

    def test_matrix_agrees_with_scalar(self, rng):
        x, y = rng.standard_normal((6, 4)), rng.standard_normal((3, 4))
        c = cosine_matrix(x, y)
        for i in range(6):
            for j in range(3):
                assert math.isclose(c[i, j], cosine_similarity(x[i], y[j]), abs_tol=1e-12)
