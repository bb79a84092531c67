"""Confusion-based metrics and window-to-session prediction merging.

Anomaly is the positive class throughout.  Zero denominators never raise:
the affected metric becomes 0.0 and the result carries a ``degenerate`` flag
so such cells cannot be mistaken for honest zeros downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import EvalError
from .models import Prediction

RESULT_COLUMNS = [
    "dataset",
    "model",
    "representation",
    "aggregation",
    "parsing",
    "precision",
    "recall",
    "f1",
    "degenerate",
]


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    degenerate: bool


def confusion(predicted: Sequence[int], actual: Sequence[int]) -> Confusion:
    """Tally a confusion matrix from aligned 0/1 label sequences."""
    if len(predicted) != len(actual):
        raise EvalError(
            f"prediction/truth length mismatch: {len(predicted)} vs {len(actual)}"
        )
    c = Confusion()
    for p, a in zip(predicted, actual):
        if a == 1:
            if p == 1:
                c.tp += 1
            else:
                c.fn += 1
        else:
            if p == 1:
                c.fp += 1
            else:
                c.tn += 1
    return c


def confusion_from_predictions(
    predictions: Sequence[Prediction], truth: Mapping[object, int]
) -> Confusion:
    """Tally against a truth mapping keyed by unit id; ids must align exactly."""
    if len(predictions) != len(truth):
        raise EvalError(
            f"got {len(predictions)} predictions for {len(truth)} labelled units"
        )
    predicted = []
    actual = []
    for pred in predictions:
        if pred.unit_id not in truth:
            raise EvalError(f"prediction for unknown unit {pred.unit_id!r}")
        predicted.append(pred.label)
        actual.append(truth[pred.unit_id])
    return confusion(predicted, actual)


def prf1(c: Confusion) -> Metrics:
    """Precision, recall, F1 with the zero-denominator-to-zero convention."""
    degenerate = False
    if c.tp + c.fp > 0:
        precision = c.tp / (c.tp + c.fp)
    else:
        precision, degenerate = 0.0, True
    if c.tp + c.fn > 0:
        recall = c.tp / (c.tp + c.fn)
    else:
        recall, degenerate = 0.0, True
    if 2 * c.tp + c.fp + c.fn > 0:
        f1 = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    else:
        f1, degenerate = 0.0, True
    return Metrics(precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def merge_window_predictions(
    window_predictions: Sequence[Prediction],
    session_labels: Mapping[str, int],
) -> tuple[list[Prediction], list[int]]:
    """Collapse per-window predictions onto their sessions.

    A session is predicted anomalous iff any of its windows is; its score is
    the max window score.  Window unit ids are (session_id, offset) pairs.
    Returns session predictions (in first-appearance order) aligned with the
    true labels pulled from ``session_labels``.
    """
    by_session: dict[str, list[Prediction]] = {}
    order: list[str] = []
    for pred in window_predictions:
        if not isinstance(pred.unit_id, tuple) or len(pred.unit_id) != 2:
            raise EvalError(
                f"window prediction carries unit id {pred.unit_id!r}, "
                "expected a (session_id, offset) pair"
            )
        sid = pred.unit_id[0]
        if sid not in by_session:
            by_session[sid] = []
            order.append(sid)
        by_session[sid].append(pred)

    missing = [sid for sid in session_labels if sid not in by_session]
    if missing:
        raise EvalError(f"sessions with zero windows: {missing[:5]}")

    merged: list[Prediction] = []
    truth: list[int] = []
    for sid in order:
        if sid not in session_labels:
            raise EvalError(f"no truth label for session {sid!r}")
        members = by_session[sid]
        score = max(p.score for p in members)
        label = 1 if any(p.label == 1 for p in members) else 0
        merged.append(Prediction(unit_id=sid, score=score, label=label))
        truth.append(session_labels[sid])
    return merged, truth


def gap(f1_values: Sequence[float]) -> float:
    """Spread (max minus min) of F1 across techniques for one model+dataset."""
    if len(f1_values) < 2:
        raise EvalError(f"gap needs at least 2 values, got {len(f1_values)}")
    return max(f1_values) - min(f1_values)
