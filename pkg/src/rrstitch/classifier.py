"""Mean-pooled linear text classifier, embedding-table stitching, macro-F1.

The classifier never owns its embeddings: it is bound to a table, and
``stitch`` rebinds the same weights to another table of equal dimension.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MODEL_FORMAT = "rrstitch-linear"
MODEL_VERSION = 1
STAR_CLASSES = ("negative", "neutral", "positive")


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(eq=False)
class LabeledDataset:
    sequences: list
    labels: np.ndarray
    n_classes: int
    label_names: Optional[tuple] = None

    def __post_init__(self):
        self.sequences = [tuple(s) for s in self.sequences]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if len(self.sequences) != len(self.labels):
            raise ValueError("sequences and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in 0..{self.n_classes - 1}")
        if any(len(s) == 0 for s in self.sequences):
            raise ValueError("empty token sequence")
        if self.label_names is not None and len(self.label_names) != self.n_classes:
            raise ValueError("label_names must name every class")

    def __len__(self):
        return len(self.sequences)


def tokenize(text, lowercase=False):
    return (text.lower() if lowercase else text).split()


def aggregate_star_labels(star):
    """Map a 1-5 star rating onto negative (1-2), neutral (3), positive (4-5)."""
    star = int(star)
    if not 1 <= star <= 5:
        raise ValueError(f"star rating must be in 1..5, got {star}")
    if star <= 2:
        return "negative"
    if star == 3:
        return "neutral"
    return "positive"


def read_label_map(path):
    """Sidecar mapping ``name<TAB>id`` per line."""
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\r\n")
            if not line:
                continue
            name, _, idx = line.rpartition("\t")
            mapping[name] = int(idx)
    return mapping


def load_dataset(path, label_map=None, lowercase=False, n_classes=None, stars=False):
    """Read a ``label<TAB>text`` TSV.

    Labels are integers unless `label_map` (name -> id) is given; with
    ``stars=True`` they are 1-5 ratings folded into three classes.
    Lines with no tokens are skipped.
    """
    sequences, labels = [], []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}:{lineno}: missing tab")
            tokens = tokenize(text, lowercase)
            if not tokens:
                logger.warning("%s:%d: empty text skipped", path, lineno)
                continue
            if stars:
                y = STAR_CLASSES.index(aggregate_star_labels(label))
            elif label_map is not None:
                y = label_map[label]
            else:
                y = int(label)
            sequences.append(tokens)
            labels.append(y)
    if not sequences:
        raise ValueError(f"{path}: no examples")
    names = None
    if stars:
        names, n_classes = STAR_CLASSES, 3
    elif label_map is not None:
        inv = {v: k for k, v in label_map.items()}
        n_classes = n_classes or max(inv) + 1
        names = tuple(inv.get(i, str(i)) for i in range(n_classes))
    elif n_classes is None:
        n_classes = max(2, max(labels) + 1)
    return LabeledDataset(sequences, labels, n_classes, names)


def pool(tokens, table):
    """Mean of the in-vocabulary token embeddings (float64).

    Returns ``(vector, oov)``; an all-OOV sequence pools to zeros with oov=True.
    """
    rows = [table.vocab.index[t] for t in tokens if t in table.vocab.index]
    if not rows:
        return np.zeros(table.dim), True
    return table.matrix[rows].astype(np.float64).mean(axis=0), False


def pool_dataset(sequences, table):
    """Pooled matrix (n x D) and the number of all-OOV sequences."""
    x = np.zeros((len(sequences), table.dim))
    oov = 0
    for i, seq in enumerate(sequences):
        x[i], missing = pool(seq, table)
        oov += missing
    return x, oov


def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(weight, bias, x, y, l2=0.0):
    """Mean cross-entropy of softmax(xW^T + b) plus (l2/2)||W||^2, and gradients."""
    n = x.shape[0]
    logits = x @ weight.T + bias
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), y])) + 0.5 * l2 * float(np.sum(weight * weight))
    p = np.exp(z - log_norm[:, None])
    p[np.arange(n), y] -= 1.0
    p /= n
    return loss, p.T @ x + l2 * weight, p.sum(axis=0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    l2: float = 1e-4
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    weight: np.ndarray
    bias: np.ndarray
    table: object = field(repr=False)
    label_names: Optional[tuple] = None
    final_loss: float = math.nan

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("weight must be C x D and bias length C")
        if self.table is not None and self.table.dim != self.weight.shape[1]:
            raise ValueError(f"classifier dim {self.weight.shape[1]} != table dim {self.table.dim}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite classifier parameters")

    @property
    def n_classes(self):
        return self.weight.shape[0]

    @property
    def dim(self):
        return self.weight.shape[1]

    def features(self, sequences):
        return pool_dataset(sequences, self.table)

    def predict_proba(self, sequences):
        x, _ = self.features(sequences)
        return softmax_rows(x @ self.weight.T + self.bias)

    def predict(self, sequences):
        x, _ = self.features(sequences)
        return np.argmax(x @ self.weight.T + self.bias, axis=1)


def train(dataset, table, config=TrainConfig()):
    """Fit a softmax-regression head on mean-pooled embeddings.

    Mini-batch proximal gradient descent: a gradient step on the mean
    cross-entropy followed by the closed-form shrinkage for the L2 term,
    which stays stable for any penalty strength. Batch order comes from
    ``config.seed``.
    """
    x, oov = pool_dataset(dataset.sequences, table)
    if oov:
        logger.warning("%d training sequences have no in-vocabulary token", oov)
    y = dataset.labels
    n, d = x.shape
    c = dataset.n_classes
    weight = np.zeros((c, d))
    bias = np.zeros(c)
    rng = np.random.default_rng(config.seed)
    shrink = 1.0 / (1.0 + config.learning_rate * config.l2)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                _, gw, gb = loss_and_grad(weight, bias, x[idx], y[idx])
                weight = (weight - config.learning_rate * gw) * shrink
                bias = bias - config.learning_rate * gb
            loss, _, _ = loss_and_grad(weight, bias, x, y, config.l2)
        if not math.isfinite(loss):
            raise TrainingError(
                f"loss became {loss} at epoch {epoch + 1}; "
                f"learning rate {config.learning_rate} is likely too large"
            )
    return LinearClassifier(weight, bias, table, dataset.label_names, loss)


def stitch(classifier, new_table):
    """Same weights, new embedding table. No retraining."""
    if new_table.dim != classifier.dim:
        raise ValueError(f"table dim {new_table.dim} != classifier dim {classifier.dim}")
    return replace(classifier, table=new_table)


@dataclass(eq=False)
class F1Report:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    confusion: np.ndarray
    n: int
    oov_sequences: int = 0
    label_names: Optional[Sequence] = None

    def to_json(self):
        names = self.label_names or [str(i) for i in range(len(self.f1))]
        return {
            "macro_f1": self.macro_f1,
            "per_class": [
                {
                    "label": str(names[i]),
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "support": int(self.confusion[i].sum()),
                }
                for i in range(len(self.f1))
            ],
            "confusion": self.confusion.tolist(),
            "n": self.n,
            "oov_sequences": self.oov_sequences,
        }

    def to_tsv(self):
        names = self.label_names or [str(i) for i in range(len(self.f1))]
        lines = ["label\tprecision\trecall\tf1\tsupport"]
        for i, name in enumerate(names):
            lines.append(
                f"{name}\t{self.precision[i]!r}\t{self.recall[i]!r}\t{self.f1[i]!r}\t{int(self.confusion[i].sum())}"
            )
        lines.append(f"macro\t\t\t{self.macro_f1!r}\t{self.n}")
        return "\n".join(lines) + "\n"


def _safe_ratio(num, den):
    out = np.zeros(len(num))
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def macro_f1(gold, pred, n_classes):
    """Per-class precision/recall/F1 and their unweighted mean over all classes.

    A class with P + R = 0 (including one absent from gold and predictions)
    scores F1 = 0 and still counts in the mean.
    """
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.size == 0:
        raise ValueError("empty evaluation set")
    if gold.shape != pred.shape:
        raise ValueError("gold and predictions differ in length")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (gold, pred), 1)
    tp = np.diag(conf).astype(np.float64)
    precision = _safe_ratio(tp, conf.sum(axis=0).astype(np.float64))
    recall = _safe_ratio(tp, conf.sum(axis=1).astype(np.float64))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    return F1Report(precision, recall, f1, float(f1.mean()), conf, int(gold.size))


def evaluate_macro_f1(classifier, dataset):
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    x, oov = pool_dataset(dataset.sequences, classifier.table)
    pred = np.argmax(x @ classifier.weight.T + classifier.bias, axis=1)
    report = macro_f1(dataset.labels, pred, classifier.n_classes)
    report.oov_sequences = oov
    report.label_names = classifier.label_names or dataset.label_names
    return report


def save_model(classifier, path, extra=None):
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_classes": classifier.n_classes,
        "dim": classifier.dim,
        "label_names": list(classifier.label_names) if classifier.label_names else None,
        "weight": classifier.weight.tolist(),
        "bias": classifier.bias.tolist(),
        "final_loss": classifier.final_loss,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def load_model(path, table=None):
    """Read a model file; returns ``(classifier, payload)``."""
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} model file")
    if payload.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {payload.get('version')}")
    weight = np.array(payload["weight"], dtype=np.float64).reshape(payload["n_classes"], payload["dim"])
    bias = np.array(payload["bias"], dtype=np.float64)
    names = tuple(payload["label_names"]) if payload.get("label_names") else None
    clf = LinearClassifier(weight, bias, table, names, payload.get("final_loss", math.nan))
    return clf, payload
