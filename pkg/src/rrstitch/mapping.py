"""Transformed embedding tables: anchor-weighted sums and least-squares projection."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ._util import chunked_rows
from .embeddings import EmbeddingTable, save_vec_file, unit_rows
from .relrep import _self_positions, top_k, weights

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MappedTable:
    """An EmbeddingTable in the source dimension plus where it came from."""

    table: EmbeddingTable
    provenance: dict = field(default_factory=dict)

    @property
    def zero_rows(self):
        return int(self.provenance.get("zero_rows", 0))

    def save(self, path, precision=9):
        save_vec_file(self.table, path, precision=precision)
        write_metadata(str(path) + ".meta", self.provenance)


def write_metadata(path, meta):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in meta.items():
            f.write(f"{key}={value}\n")


def read_metadata(path):
    meta = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\r\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}: malformed metadata line {line!r}")
            meta[key] = value
    return meta


def anchor_embeddings(src_table, anchors):
    """Source-language anchor rows (|A| x D, float64) in anchor order."""
    return src_table.rows(anchors.src_indices)


def map_table(table, anchors, source_anchor_embeddings, scheme, side="source", threads=1):
    """Re-express every row of `table` as a weighted sum of source anchor embeddings.

    Similarities are computed within `table` against the anchors on `side`;
    the mixed vectors are always the source-language anchor embeddings.
    """
    anchor_rows = anchors.indices(side)
    emb = np.asarray(source_anchor_embeddings, dtype=np.float64)
    n_anchor = len(anchors)
    if n_anchor == 0:
        raise ValueError("empty anchor set")
    if emb.shape[0] != n_anchor:
        raise ValueError(f"{emb.shape[0]} anchor embeddings for {n_anchor} anchors")
    if scheme.k > n_anchor:
        raise ValueError(f"k={scheme.k} exceeds the {n_anchor} anchors")
    if anchor_rows.min() < 0 or anchor_rows.max() >= len(table):
        raise IndexError("anchor index out of range for table")

    anchor_unit = unit_rows(table.matrix[anchor_rows]).T
    self_pos = _self_positions(anchor_rows) if scheme.exclude_self else {}

    def chunk(start, stop):
        rel = np.clip(unit_rows(table.matrix[start:stop]) @ anchor_unit, -1.0, 1.0)
        mix = np.zeros((stop - start, n_anchor))
        for r in range(stop - start):
            tk = top_k(rel[r], scheme.k, self_pos.get(start + r, ()))
            mix[r, tk.indices] = weights(tk, scheme)
        return mix @ emb

    out = np.vstack(chunked_rows(chunk, len(table), threads))
    zero = int(np.count_nonzero(~out.any(axis=1)))
    if zero:
        logger.warning("%d mapped rows are all-zero", zero)
    provenance = {
        "method": "rr",
        "side": side,
        "scheme": scheme.kind,
        "k": scheme.k,
        "tau": repr(float(scheme.temperature)),
        "exclude_self": str(scheme.exclude_self).lower(),
        "anchors": n_anchor,
        "dim": emb.shape[1],
        "anchor_checksum": anchors.checksum(),
        "zero_rows": zero,
    }
    return MappedTable(EmbeddingTable(table.vocab, out), provenance)


@dataclass(frozen=True)
class LSTransform:
    """W (D_t x D) minimising ||A_t W - A_s||_F, with fit diagnostics."""

    matrix: np.ndarray
    residual: float
    rank: int
    l2: float = 0.0

    @property
    def shape(self):
        return self.matrix.shape


def ls_fit(anchor_tgt, anchor_src, l2=0.0):
    """Least-squares map from target anchor rows onto source anchor rows.

    Solved by SVD (minimum-norm for rank-deficient inputs). With ``l2 > 0``
    a ridge penalty l2 * ||W||_F^2 is added; the reported residual never
    includes the penalty.
    """
    at = np.asarray(anchor_tgt, dtype=np.float64)
    as_ = np.asarray(anchor_src, dtype=np.float64)
    if at.ndim != 2 or as_.ndim != 2 or at.shape[0] != as_.shape[0]:
        raise ValueError(f"incompatible anchor matrices {at.shape} and {as_.shape}")
    if at.shape[0] < 1:
        raise ValueError("need at least one anchor")
    if not (np.all(np.isfinite(at)) and np.all(np.isfinite(as_))):
        raise ValueError("non-finite anchor embeddings")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    if l2 > 0:
        d_t = at.shape[1]
        a = np.vstack([at, np.sqrt(l2) * np.eye(d_t)])
        b = np.vstack([as_, np.zeros((d_t, as_.shape[1]))])
    else:
        a, b = at, as_
    w, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(at @ w - as_))
    return LSTransform(w, residual, int(rank), float(l2))


def ls_project(table, transform, anchors=None):
    """Multiply every row of `table` by W."""
    w = transform.matrix
    if table.dim != w.shape[0]:
        raise ValueError(f"table dimension {table.dim} does not match W rows {w.shape[0]}")
    out = table.matrix.astype(np.float64) @ w
    zero = int(np.count_nonzero(~out.any(axis=1)))
    if zero:
        logger.warning("%d projected rows are all-zero", zero)
    provenance = {
        "method": "ls",
        "l2": repr(transform.l2),
        "residual": repr(transform.residual),
        "rank": transform.rank,
        "dim": w.shape[1],
        "zero_rows": zero,
    }
    if anchors is not None:
        provenance["anchors"] = len(anchors)
        provenance["anchor_checksum"] = anchors.checksum()
    return MappedTable(EmbeddingTable(table.vocab, out), provenance)
