"""Bilingual lexicon ingestion, filtering, and parallel anchor extraction."""

import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

SIDES = ("source", "target", "both")


@dataclass(frozen=True)
class LexiconEntry:
    source_token: str
    target_token: str
    score: Optional[float] = None

    def __post_init__(self):
        for tok in (self.source_token, self.target_token):
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"invalid lexicon token {tok!r}")
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError(f"non-finite score {self.score!r}")


class Lexicon(list):
    """List of LexiconEntry that also remembers how many lines were skipped."""

    def __init__(self, entries=(), skipped=0):
        super().__init__(entries)
        self.skipped = skipped


def _parse_line(line):
    if "\t" in line:
        fields = line.split("\t")
        if len(fields) == 2:
            return LexiconEntry(fields[0].strip(), fields[1].strip())
        if len(fields) == 3:
            return LexiconEntry(fields[0].strip(), fields[1].strip(), float(fields[2]))
        raise ValueError(f"{len(fields)} tab-separated fields")
    fields = line.split()
    if len(fields) != 2:
        raise ValueError(f"{len(fields)} fields")
    return LexiconEntry(fields[0], fields[1])


def load_lexicon(path, lowercase=False):
    """Read ``src tgt`` or ``src<TAB>tgt<TAB>score`` lines in file order."""
    entries, skipped, nonblank = [], 0, 0
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            nonblank += 1
            try:
                entry = _parse_line(line)
            except ValueError as exc:
                logger.warning("%s:%d: skipped (%s)", path, lineno, exc)
                skipped += 1
                continue
            if lowercase:
                entry = LexiconEntry(entry.source_token.lower(), entry.target_token.lower(), entry.score)
            entries.append(entry)
    if nonblank == 0:
        raise ValueError(f"{path}: empty lexicon")
    return Lexicon(entries, skipped)


def filter_by_score(entries, threshold):
    """Keep entries scoring at least `threshold`; unscored entries always pass."""
    return [e for e in entries if e.score is None or e.score >= threshold]


def remove_stopwords(entries, stopwords, side="both"):
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")
    stop = set(stopwords)
    check_src = side in ("source", "both")
    check_tgt = side in ("target", "both")
    return [
        e for e in entries
        if not ((check_src and e.source_token in stop) or (check_tgt and e.target_token in stop))
    ]


def load_stopwords(path):
    with open(path, encoding="utf-8") as f:
        return {w for line in f for w in line.split()}


class AnchorSet:
    """Ordered (source index, target index) pairs with their tokens.

    The order is part of the value: relative representations computed
    against two differently ordered anchor sets are not comparable.
    """

    def __init__(self, src_tokens, tgt_tokens, src_indices, tgt_indices):
        self.src_tokens = tuple(src_tokens)
        self.tgt_tokens = tuple(tgt_tokens)
        self.src_indices = np.asarray(src_indices, dtype=np.intp)
        self.tgt_indices = np.asarray(tgt_indices, dtype=np.intp)
        n = len(self.src_tokens)
        if not (len(self.tgt_tokens) == len(self.src_indices) == len(self.tgt_indices) == n):
            raise ValueError("anchor columns differ in length")
        if len(set(self.tgt_indices.tolist())) != n:
            raise ValueError("repeated target index in anchor set")
        self.src_indices.setflags(write=False)
        self.tgt_indices.setflags(write=False)

    def __len__(self):
        return len(self.src_tokens)

    def __eq__(self, other):
        return (
            isinstance(other, AnchorSet)
            and self.src_tokens == other.src_tokens
            and self.tgt_tokens == other.tgt_tokens
            and np.array_equal(self.src_indices, other.src_indices)
            and np.array_equal(self.tgt_indices, other.tgt_indices)
        )

    def __repr__(self):
        return f"AnchorSet(|A|={len(self)}, checksum={self.checksum()})"

    def pairs(self):
        return list(zip(self.src_tokens, self.tgt_tokens))

    def indices(self, side):
        if side == "source":
            return self.src_indices
        if side == "target":
            return self.tgt_indices
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")

    def subset(self, positions):
        positions = list(positions)
        return AnchorSet(
            [self.src_tokens[p] for p in positions],
            [self.tgt_tokens[p] for p in positions],
            self.src_indices[positions],
            self.tgt_indices[positions],
        )

    def checksum(self):
        """Hash of size and exact order; identifies artifacts built on this set."""
        h = hashlib.sha256(f"{len(self)}\n".encode())
        for s, t, i, j in zip(self.src_tokens, self.tgt_tokens, self.src_indices, self.tgt_indices):
            h.update(f"{s}\t{t}\t{i}\t{j}\n".encode("utf-8"))
        return h.hexdigest()[:16]

    def validate(self, src_table, tgt_table):
        """Raise unless every index resolves to the recorded token."""
        for s, t, i, j in zip(self.src_tokens, self.tgt_tokens, self.src_indices, self.tgt_indices):
            if not (0 <= i < len(src_table) and src_table.tokens[i] == s):
                raise ValueError(f"anchor source {s!r} does not match row {i}")
            if not (0 <= j < len(tgt_table) and tgt_table.tokens[j] == t):
                raise ValueError(f"anchor target {t!r} does not match row {j}")


def build_anchor_set(entries, src_table, tgt_table):
    """Entries present in both vocabularies, one per target token, file order."""
    src_tok, tgt_tok, src_idx, tgt_idx = [], [], [], []
    used_targets = set()
    for e in entries:
        i = src_table.vocab.get(e.source_token)
        j = tgt_table.vocab.get(e.target_token)
        if i is None or j is None or j in used_targets:
            continue
        used_targets.add(j)
        src_tok.append(e.source_token)
        tgt_tok.append(e.target_token)
        src_idx.append(i)
        tgt_idx.append(j)
    if not src_tok:
        raise ValueError("no lexicon entry has both tokens in the embedding vocabularies")
    return AnchorSet(src_tok, tgt_tok, src_idx, tgt_idx)


def sample_anchors(anchors, n, seed):
    """Uniform sample of `n` anchors without replacement, original order kept."""
    if n < 1 or n > len(anchors):
        raise ValueError(f"cannot sample {n} of {len(anchors)} anchors")
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(len(anchors), size=n, replace=False))
    return anchors.subset(picked.tolist())


def write_anchor_tsv(anchors, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s, t, i, j in zip(anchors.src_tokens, anchors.tgt_tokens, anchors.src_indices, anchors.tgt_indices):
            f.write(f"{s}\t{t}\t{i}\t{j}\n")


def read_anchor_tsv(path):
    src_tok, tgt_tok, src_idx, tgt_idx = [], [], [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            s, t, i, j = fields
            src_tok.append(s)
            tgt_tok.append(t)
            src_idx.append(int(i))
            tgt_idx.append(int(j))
    if not src_tok:
        raise ValueError(f"{path}: empty anchor file")
    return AnchorSet(src_tok, tgt_tok, src_idx, tgt_idx)
