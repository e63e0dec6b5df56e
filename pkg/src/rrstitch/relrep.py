"""Relative representations against an ordered anchor set, and mixing weights.

A token's relative representation is its vector of cosines to the anchors,
computed inside its own language's table. The top-k entries of that vector
are turned into mixing weights by one of three schemes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import cosine_matrix, cosine_similarity

SCHEMES = ("standard", "softmax", "sparsemax")
DEFAULT_K = 50
# Below this |sum of similarities| the standard scheme falls back to one-hot.
STANDARD_MIN_SUM = 1e-8


@dataclass(frozen=True)
class WeightingScheme:
    kind: str = "standard"
    temperature: float = 1.0
    k: int = DEFAULT_K
    exclude_self: bool = False

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {SCHEMES}")
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError(f"temperature must be finite and positive, got {self.temperature}")
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class TopKRow:
    """Anchor positions sorted by similarity (descending, ties to lower index)."""

    indices: np.ndarray
    sims: np.ndarray

    def __len__(self):
        return len(self.indices)


def relative_representation(table, anchor_indices, token_row):
    """Cosines between row `token_row` and each anchor row, in anchor order."""
    n = len(table)
    idx = np.asarray(anchor_indices, dtype=np.intp)
    if not 0 <= token_row < n:
        raise IndexError(f"token row {token_row} out of range for {n} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("anchor index out of range")
    u = table.matrix[token_row]
    return np.array([cosine_similarity(u, table.matrix[j]) for j in idx])


def relative_matrix(table, anchor_indices, rows=None):
    """Relative representations for many rows at once (float64, |rows| x |A|)."""
    idx = np.asarray(anchor_indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= len(table)):
        raise IndexError("anchor index out of range")
    x = table.matrix if rows is None else table.matrix[rows]
    return cosine_matrix(x, table.matrix[idx])


def top_k(row, k, exclude=()):
    """The `k` most similar anchors of a relative-representation row.

    Positions listed in `exclude` are never selected.
    """
    row = np.asarray(row, dtype=np.float64)
    n_avail = row.size - len(set(exclude))
    if not 1 <= k <= n_avail:
        raise ValueError(f"k={k} out of range for {n_avail} candidate anchors")
    if len(exclude):
        row = row.copy()
        row[list(exclude)] = -np.inf
    kth = np.partition(row, row.size - k)[row.size - k]
    cand = np.flatnonzero(row >= kth)
    order = cand[np.argsort(-row[cand], kind="stable")][:k]
    return TopKRow(order, row[order])


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def sparsemax(z):
    """Euclidean projection of `z` onto the probability simplex.

    Sort descending, find the largest support size j with
    1 + j * z_(j) > sum_{i<=j} z_(i), then shift by the threshold and clip.
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    zs = np.sort(z)[::-1]
    cumsum = np.cumsum(zs)
    j = np.arange(1, z.size + 1)
    support = np.flatnonzero(1.0 + j * zs > cumsum)
    kappa = j[support[-1]]
    threshold = (cumsum[kappa - 1] - 1.0) / kappa
    return np.maximum(z - threshold, 0.0)


def weights(topk, scheme):
    """Mixing weights (summing to 1) for a TopKRow under `scheme`.

    The standard scheme normalises the raw similarities; the temperature
    cancels there and only acts in softmax and sparsemax. If the similarity
    sum is too close to zero, all weight goes to the nearest anchor.
    """
    sims = np.asarray(topk.sims if isinstance(topk, TopKRow) else topk, dtype=np.float64)
    if scheme.kind == "standard":
        total = sims.sum()
        if abs(total) < STANDARD_MIN_SUM:
            w = np.zeros_like(sims)
            w[0] = 1.0
            return w
        return sims / total
    z = sims / scheme.temperature
    if scheme.kind == "softmax":
        return softmax(z)
    return sparsemax(z)


def topk_rows(table, anchor_indices, scheme, rows=None):
    """Top-k rows for each requested table row, honouring ``exclude_self``."""
    idx = np.asarray(anchor_indices, dtype=np.intp)
    rows = np.arange(len(table)) if rows is None else np.asarray(rows, dtype=np.intp)
    if scheme.k > idx.size:
        raise ValueError(f"k={scheme.k} exceeds the {idx.size} anchors")
    rel = relative_matrix(table, idx, rows)
    self_pos = _self_positions(idx) if scheme.exclude_self else {}
    return [top_k(r, scheme.k, self_pos.get(int(t), ())) for r, t in zip(rel, rows)]


def _self_positions(anchor_indices):
    pos = {}
    for p, t in enumerate(anchor_indices.tolist()):
        pos.setdefault(t, []).append(p)
    return pos


def write_topk_tsv(path, tokens, rows):
    """Dump ``token<TAB>anchor:sim,...`` lines for inspection."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for tok, r in zip(tokens, rows):
            cells = ",".join(f"{int(i)}:{s:.6f}" for i, s in zip(r.indices, r.sims))
            f.write(f"{tok}\t{cells}\n")
