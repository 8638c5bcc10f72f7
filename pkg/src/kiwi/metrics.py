"""Word-level F1-mult and sentence-level correlation scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import BAD, OK


class UndefinedCorrelationError(ValueError):
    """A correlation was requested for a vector without variance."""


@dataclass(frozen=True)
class WordMetricReport:
    f1_ok: float
    f1_bad: float
    f1_mult: float


@dataclass(frozen=True)
class SentenceMetricReport:
    pearson_r: float
    spearman_rho: float


def flatten(tags: Iterable) -> list:
    """Concatenate per-sentence tag lists; flat lists pass through unchanged."""
    out = []
    for item in tags:
        if isinstance(item, (list, tuple, np.ndarray)):
            out.extend(item)
        else:
            out.append(item)
    return out


def _as_labels(tags: Sequence, what: str) -> np.ndarray:
    arr = np.asarray(tags, dtype=object)
    bad = np.zeros(len(arr), dtype=bool)
    for i, t in enumerate(arr):
        if t == BAD or t == 1:
            bad[i] = True
        elif not (t == OK or t == 0):
            raise ValueError(f"{what}: invalid label {t!r} at position {i} (expected OK or BAD)")
    return bad


def _f1(tp: int, n_pred: int, n_gold: int) -> float:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def f1_mult(gold: Sequence, predicted: Sequence) -> WordMetricReport:
    """Micro-averaged F1 of OK and BAD and their product.

    Inputs may be flat tag lists or lists of per-sentence lists; nested input
    is concatenated.  Labels are ``"OK"``/``"BAD"`` or 0/1.
    """
    gold, predicted = flatten(gold), flatten(predicted)
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted tags")
    g = _as_labels(gold, "gold")
    p = _as_labels(predicted, "predicted")
    tp_bad = int(np.sum(g & p))
    tp_ok = int(np.sum(~g & ~p))
    f1_bad = _f1(tp_bad, int(p.sum()), int(g.sum()))
    f1_ok = _f1(tp_ok, int((~p).sum()), int((~g).sum()))
    return WordMetricReport(f1_ok, f1_bad, f1_ok * f1_bad)


def _vectors(gold, predicted) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(gold, dtype=np.float64).reshape(-1)
    y = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} gold vs {len(y)} predicted scores")
    if len(x) < 2:
        raise UndefinedCorrelationError("correlation needs at least two scores")
    return x, y


def pearson(gold, predicted) -> float:
    x, y = _vectors(gold, predicted)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("Pearson correlation undefined: a score vector has zero variance")
    r = float(np.dot(dx, dy) / (sx * sy))
    return max(-1.0, min(1.0, r))


def rankdata(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of their ranks."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v), dtype=np.float64)
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(gold, predicted) -> float:
    x, y = _vectors(gold, predicted)
    try:
        return pearson(rankdata(x), rankdata(y))
    except UndefinedCorrelationError:
        raise UndefinedCorrelationError("Spearman correlation undefined: all values are equal") from None


def sentence_report(gold, predicted) -> SentenceMetricReport:
    return SentenceMetricReport(pearson(gold, predicted), spearman(gold, predicted))


def tags_from_probs(probs: Iterable, threshold: float = 0.5) -> list:
    """BAD where the BAD probability exceeds ``threshold``; keeps nesting."""
    out = []
    for item in probs:
        if isinstance(item, (list, tuple, np.ndarray)):
            out.append([BAD if p > threshold else OK for p in item])
        else:
            out.append(BAD if item > threshold else OK)
    return out
