"""Embedding tables in the fastText ``.vec`` text format and the cosine kernel."""

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12


class VecFormatError(ValueError):
    """A ``.vec`` file could not be parsed into a usable table."""


class Vocabulary:
    """Bijective token <-> row-index map with contiguous indices from 0."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        self.index = {}
        for i, tok in enumerate(self.tokens):
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"invalid token {tok!r} at row {i}")
            if tok in self.index:
                raise ValueError(f"duplicate token {tok!r}")
            self.index[tok] = i

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self):
        return f"Vocabulary({len(self)} tokens)"

    def get(self, token, default=None):
        return self.index.get(token, default)


class EmbeddingTable:
    """A vocabulary plus a |V| x D float32 matrix.

    The matrix is stored read-only; tables are treated as immutable values.
    ``skipped`` counts rows rejected while loading.
    """

    def __init__(self, vocab, matrix, skipped=0):
        if not isinstance(vocab, Vocabulary):
            vocab = Vocabulary(vocab)
        matrix = np.array(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {matrix.shape}")
        if matrix.shape[0] != len(vocab):
            raise ValueError(
                f"{matrix.shape[0]} rows for a vocabulary of {len(vocab)} tokens"
            )
        if len(vocab) and matrix.shape[1] < 1:
            raise ValueError("dimension must be positive")
        matrix.setflags(write=False)
        self.vocab = vocab
        self.matrix = matrix
        self.skipped = skipped

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def tokens(self):
        return self.vocab.tokens

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def __repr__(self):
        return f"EmbeddingTable(|V|={len(self)}, D={self.dim})"

    def vector(self, token):
        return self.matrix[self.vocab.index[token]]

    def rows(self, indices):
        """Rows at `indices` as float64, in the given order."""
        return self.matrix[np.asarray(indices, dtype=np.intp)].astype(np.float64)


def load_vec_file(path, expected_dim=None):
    """Read a fastText ``.vec`` file.

    Malformed rows, zero-norm rows and repeated tokens are skipped; the
    number skipped is stored on the returned table as ``skipped``.
    """
    with open(path, encoding="utf-8", errors="strict") as f:
        header = f.readline().split()
        try:
            count, dim = (int(x) for x in header)
        except ValueError:
            raise VecFormatError(f"{path}: bad header {header!r}") from None
        if count < 0 or dim < 1:
            raise VecFormatError(f"{path}: bad header {header!r}")
        if expected_dim is not None and dim != expected_dim:
            raise VecFormatError(f"{path}: dimension {dim}, expected {expected_dim}")

        tokens, rows, seen = [], [], set()
        skipped = 0
        for lineno, line in enumerate(f, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                logger.warning("%s:%d: expected %d values, got %d", path, lineno, dim, len(parts) - 1)
                skipped += 1
                continue
            token = parts[0]
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                logger.warning("%s:%d: non-numeric value", path, lineno)
                skipped += 1
                continue
            if not np.all(np.isfinite(vec)):
                logger.warning("%s:%d: non-finite value", path, lineno)
                skipped += 1
                continue
            if token in seen:
                logger.warning("%s:%d: duplicate token %r", path, lineno, token)
                skipped += 1
                continue
            if np.sqrt(vec @ vec) < ZERO_NORM:
                logger.warning("%s:%d: zero-norm vector for %r", path, lineno, token)
                skipped += 1
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(vec)

    if not rows:
        raise VecFormatError(f"{path}: no well-formed rows")
    if len(rows) + skipped != count:
        logger.info("%s: header announced %d rows, read %d", path, count, len(rows) + skipped)
    return EmbeddingTable(tokens, np.vstack(rows), skipped=skipped)


def save_vec_file(table, path, precision=9):
    """Write `table` as ``.vec``.

    The default of 9 significant digits reproduces every float32 value
    exactly; pass ``precision=6`` for fastText's usual output.
    """
    if len(table) == 0:
        raise ValueError("cannot save an empty table")
    fmt = f"%.{precision}g"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for token, row in zip(table.tokens, table.matrix.tolist()):
            f.write(token)
            f.write(" ")
            f.write(" ".join([fmt % x for x in row]))
            f.write("\n")


def cosine_similarity(u, v):
    """Cosine of two vectors, accumulated in float64 and clamped to [-1, 1].

    Returns 0 when either vector has (near-)zero norm.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu < ZERO_NORM or nv < ZERO_NORM:
        return 0.0
    c = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, c))


def unit_rows(matrix):
    """Rows scaled to unit norm in float64; zero-norm rows stay zero."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    out = np.zeros_like(m)
    ok = norms >= ZERO_NORM
    out[ok] = m[ok] / norms[ok, None]
    return out


def cosine_matrix(x, y):
    """Pairwise cosines between rows of `x` and rows of `y`, clamped."""
    c = unit_rows(x) @ unit_rows(y).T
    return np.clip(c, -1.0, 1.0, out=c)
