"""Probability averaging and the stacked linear model over base-system outputs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .data import BAD, OK, START, STOP, UNALIGNED, QESample, read_lines, write_lines

STREAMS = ("mt", "gap", "source")
STACKABLE = ("mt",)
DEFAULT_TEMPLATES = ("word", "context", "bigram", "aligned", "system")


class ShapeMismatchError(ValueError):
    pass


@dataclass
class SystemPrediction:
    """BAD probabilities per stream (one array per sentence) and optional sentence scores."""

    system_id: str
    probs: dict[str, list[np.ndarray]] = field(default_factory=dict)
    scores: np.ndarray | None = None

    def __post_init__(self):
        for stream, rows in self.probs.items():
            self.probs[stream] = [np.asarray(r, dtype=np.float64) for r in rows]
            for r in self.probs[stream]:
                if r.size and (r.min() < 0.0 or r.max() > 1.0):
                    raise ValueError(f"{self.system_id}/{stream}: probabilities must lie in [0, 1]")
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)

    def tags(self, stream: str, threshold: float = 0.5) -> list[list[str]]:
        return [[BAD if p > threshold else OK for p in row] for row in self.probs[stream]]


def _shape(pred: SystemPrediction) -> tuple:
    return (
        tuple(sorted((s, tuple(len(r) for r in rows)) for s, rows in pred.probs.items())),
        None if pred.scores is None else len(pred.scores),
    )


def average_predictions(systems: Sequence[SystemPrediction], system_id: str = "average") -> SystemPrediction:
    """Arithmetic mean of BAD probabilities (and sentence scores) across systems."""
    if not systems:
        raise ValueError("need at least one system to average")
    reference = _shape(systems[0])
    for other in systems[1:]:
        if _shape(other) != reference:
            raise ShapeMismatchError(f"system {other.system_id!r} does not match {systems[0].system_id!r} in shape")
    probs = {
        stream: [mean_arrays([s.probs[stream][i] for s in systems]) for i in range(len(rows))]
        for stream, rows in systems[0].probs.items()
    }
    scores = None
    if systems[0].scores is not None:
        scores = mean_arrays([s.scores for s in systems])
    return SystemPrediction(system_id, probs, scores)


def mean_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    # shifted by the first system so that k identical inputs average to
    # themselves bit for bit (k * x / k can be off by one ulp)
    base = arrays[0]
    offset = np.zeros_like(base)
    for a in arrays[1:]:
        offset = offset + (a - base)
    return np.clip(base + offset / len(arrays), 0.0, 1.0) if base.size else base.copy()


# ---------------------------------------------------------------------------
# prediction files


def format_probs(row: Iterable[float]) -> str:
    return " ".join(f"{p:.6f}" for p in row)


def write_probs(path: str | Path, rows: Iterable[Iterable[float]]) -> None:
    write_lines(path, (format_probs(r) for r in rows))


def read_probs(path: str | Path) -> list[np.ndarray]:
    rows = []
    for lineno, line in enumerate(read_lines(path), 1):
        try:
            rows.append(np.array([float(x) for x in line.split()], dtype=np.float64))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected whitespace-separated probabilities") from None
    return rows


def write_scores(path: str | Path, scores: Iterable[float]) -> None:
    write_lines(path, (f"{s:.6f}" for s in scores))


def read_scores(path: str | Path) -> np.ndarray:
    return np.array([float(line) for line in read_lines(path)], dtype=np.float64)


# ---------------------------------------------------------------------------
# stacked linear model


def probability_bin(p: float, width: float = 0.1) -> str:
    n_bins = int(round(1.0 / width))
    k = min(int(math.floor(round(p / width, 9))), n_bins - 1)
    return f"{k * width:.1f}-{(k + 1) * width:.1f}"


def extract_features(
    sample: QESample,
    index: int,
    system_probs: Mapping[str, Sequence[float]] | None = None,
    templates: Sequence[str] = DEFAULT_TEMPLATES,
) -> dict[str, float]:
    """Sparse features for MT word ``index`` of ``sample``.

    ``system_probs`` maps a system id to that sentence's MT BAD probabilities.
    """
    words = sample.target
    if not 0 <= index < len(words):
        raise IndexError(f"token index {index} outside MT sentence of length {len(words)}")
    w = words[index]
    left = words[index - 1] if index > 0 else START
    right = words[index + 1] if index + 1 < len(words) else STOP
    feats: dict[str, float] = {}
    if "word" in templates:
        feats[f"w={w}"] = 1.0
    if "context" in templates:
        feats[f"w-1={left}"] = 1.0
        feats[f"w+1={right}"] = 1.0
    if "bigram" in templates:
        feats[f"w-1,w={left}|{w}"] = 1.0
        feats[f"w,w+1={w}|{right}"] = 1.0
    if "aligned" in templates:
        linked = sorted(s for s, t in sample.alignments if t == index)
        if linked:
            k = linked[0]
            src = sample.source
            a, a_left, a_right = src[k], src[k - 1] if k > 0 else START, src[k + 1] if k + 1 < len(src) else STOP
        else:
            a = a_left = a_right = UNALIGNED
        feats[f"a={a}"] = 1.0
        feats[f"a-1={a_left}"] = 1.0
        feats[f"a+1={a_right}"] = 1.0
        feats[f"w,a={w}|{a}"] = 1.0
    if "system" in templates and system_probs:
        for name, row in sorted(system_probs.items()):
            p = float(row[index])
            feats[f"sys[{name}]"] = p
            feats[f"sys[{name}]bin={probability_bin(p)}"] = 1.0
    return feats


class FeatureIndex:
    """Feature name -> column map, frozen after the training pass."""

    def __init__(self):
        self.names: list[str] = []
        self.columns: dict[str, int] = {}
        self.frozen = False

    def __len__(self) -> int:
        return len(self.names)

    def matrix(self, rows: Sequence[Mapping[str, float]]) -> sp.csr_matrix:
        data, cols, ptr = [], [], [0]
        for feats in rows:
            for name in sorted(feats):
                col = self.columns.get(name)
                if col is None:
                    if self.frozen:
                        continue
                    col = self.columns[name] = len(self.names)
                    self.names.append(name)
                cols.append(col)
                data.append(feats[name])
            ptr.append(len(cols))
        self.frozen = True
        return sp.csr_matrix((np.array(data, dtype=np.float64), np.array(cols, dtype=np.int64), np.array(ptr)), shape=(len(rows), len(self.names)))


def _log1pexp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


class LinearStacker:
    """L2-regularized logistic regression fit by gradient descent with backtracking.

    Objective: mean logistic loss + ``l2 / 2 * ||w||^2`` (the bias is not
    penalized).  Labels are 1 for BAD.
    """

    def __init__(self, l2: float = 1e-3, tol: float = 1e-6, max_iter: int = 5000, templates: Sequence[str] = DEFAULT_TEMPLATES):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.templates = tuple(templates)
        self.weights: np.ndarray | None = None
        self.bias = 0.0
        self.history: list[float] = []
        self.converged = False

    def objective(self, X, y, w: np.ndarray, b: float) -> float:
        z = X @ w + b
        loss = np.mean(_log1pexp(z) - y * z)
        return float(loss + 0.5 * self.l2 * np.dot(w, w))

    def gradient(self, X, y, w: np.ndarray, b: float) -> tuple[np.ndarray, float]:
        r = (_sigmoid(X @ w + b) - y) / len(y)
        return X.T @ r + self.l2 * w, float(r.sum())

    def fit(self, X, y, step: float | None = None) -> "LinearStacker":
        """Minimize the objective until the gradient norm drops below ``tol``.

        With ``step`` given, plain fixed-step descent is used instead of the
        line search (handy for checking monotone decrease).
        """
        y = np.asarray(y, dtype=np.float64)
        if X.shape[1] == 0:
            raise ValueError("empty feature set")
        if len(np.unique(y)) < 2:
            raise ValueError("training labels contain a single class")
        w = np.zeros(X.shape[1])
        b = 0.0
        f = self.objective(X, y, w, b)
        self.history = [f]
        lr = 1.0
        self.converged = False
        for _ in range(self.max_iter):
            gw, gb = self.gradient(X, y, w, b)
            sq = float(np.dot(gw, gw) + gb * gb)
            if math.sqrt(sq) <= self.tol:
                self.converged = True
                break
            if step is not None:
                w, b = w - step * gw, b - step * gb
                f = self.objective(X, y, w, b)
            else:
                lr = min(lr * 2.0, 1e6)
                while True:
                    w_new, b_new = w - lr * gw, b - lr * gb
                    f_new = self.objective(X, y, w_new, b_new)
                    if f_new <= f - 0.5 * lr * sq or lr < 1e-12:
                        break
                    lr *= 0.5
                w, b, f = w_new, b_new, f_new
            self.history.append(f)
        self.weights, self.bias = w, b
        return self

    def decision(self, X) -> np.ndarray:
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision(X))

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) > threshold).astype(np.int64)


def _system_rows(systems: Sequence[SystemPrediction], i: int) -> dict[str, np.ndarray]:
    return {s.system_id: s.probs["mt"][i] for s in systems}


class StackedEnsemble:
    """Linear stacker over lexical features plus base-system MT probabilities."""

    def __init__(self, l2: float = 1e-3, tol: float = 1e-6, max_iter: int = 5000, templates: Sequence[str] = DEFAULT_TEMPLATES, stream: str = "mt"):
        if stream not in STACKABLE:
            raise ValueError(f"the stacked model only tags MT words, not {stream!r}")
        self.index = FeatureIndex()
        self.model = LinearStacker(l2, tol, max_iter, templates)

    def _rows(self, samples: Sequence[QESample], systems: Sequence[SystemPrediction]) -> list[dict[str, float]]:
        rows = []
        for i, sample in enumerate(samples):
            probs = _system_rows(systems, i)
            for j in range(len(sample.target)):
                rows.append(extract_features(sample, j, probs, self.model.templates))
        return rows

    def fit(self, samples: Sequence[QESample], systems: Sequence[SystemPrediction]) -> "StackedEnsemble":
        if any(s.target_tags is None for s in samples):
            raise ValueError("stacker training needs gold MT tags")
        X = self.index.matrix(self._rows(samples, systems))
        y = np.array([t == BAD for s in samples for t in s.target_tags], dtype=np.float64)
        self.model.fit(X, y)
        return self

    def predict(self, samples: Sequence[QESample], systems: Sequence[SystemPrediction], system_id: str = "stacked") -> SystemPrediction:
        X = self.index.matrix(self._rows(samples, systems))
        p = self.model.predict_proba(X)
        rows, pos = [], 0
        for s in samples:
            rows.append(p[pos : pos + len(s.target)])
            pos += len(s.target)
        return SystemPrediction(system_id, {"mt": rows})


def jackknife(n: int, fit_predict: Callable[[np.ndarray, np.ndarray], Sequence], folds: int = 5) -> list:
    """Held-out predictions for every item: fit on all folds but one, predict that one.

    ``fit_predict(train_idx, heldout_idx)`` returns one prediction per held-out
    index, in order.  Folds are contiguous blocks.
    """
    if folds < 2:
        raise ValueError("jackknifing needs at least two folds")
    out: list = [None] * n
    for held in np.array_split(np.arange(n), folds):
        if len(held) == 0:
            continue
        train = np.setdiff1d(np.arange(n), held)
        preds = fit_predict(train, held)
        if len(preds) != len(held):
            raise ValueError("fit_predict returned the wrong number of predictions")
        for i, p in zip(held, preds):
            out[i] = p
    return out
