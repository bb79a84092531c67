import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logrep.errors import EvalError
from logrep.evaluate import (
    Confusion,
    Metrics,
    confusion,
    confusion_from_predictions,
    gap,
    merge_window_predictions,
    prf1,
)
from logrep.models import Prediction

# ---------------------------------------------------------------------------
# oracle: arithmetic straight from the definitions


def oracle_tally(predicted, actual):
    tp = sum(1 for p, a in zip(predicted, actual) if p == 1 and a == 1)
    fp = sum(1 for p, a in zip(predicted, actual) if p == 1 and a == 0)
    tn = sum(1 for p, a in zip(predicted, actual) if p == 0 and a == 0)
    fn = sum(1 for p, a in zip(predicted, actual) if p == 0 and a == 1)
    return tp, fp, tn, fn


def oracle_session_merge(window_preds):
    """OR-fold of window labels per session, keeping max score."""
    out = {}
    for p in window_preds:
        sid = p.unit_id[0]
        prev = out.get(sid)
        if prev is None:
            out[sid] = (p.score, p.label)
        else:
            out[sid] = (max(prev[0], p.score), max(prev[1], p.label))
    return out


# ---------------------------------------------------------------------------
# confusion tallies


def test_confusion_counts_each_quadrant():
    c = confusion([1, 1, 0, 0], [1, 0, 1, 0])
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)
    assert c.total == 4


def test_confusion_rejects_length_mismatch():
    with pytest.raises(EvalError, match="mismatch"):
        confusion([1], [1, 0])


def test_confusion_matches_tally_oracle_on_random_labels():
    rng = np.random.RandomState(6)
    for _ in range(200):
        n = int(rng.randint(1, 40))
        predicted = rng.randint(0, 2, size=n).tolist()
        actual = rng.randint(0, 2, size=n).tolist()
        c = confusion(predicted, actual)
        assert (c.tp, c.fp, c.tn, c.fn) == oracle_tally(predicted, actual)


def test_confusion_from_predictions_uses_unit_ids():
    preds = [
        Prediction(unit_id="b", score=0.9, label=1),
        Prediction(unit_id="a", score=0.1, label=0),
    ]
    c = confusion_from_predictions(preds, {"a": 0, "b": 1})
    assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)


def test_confusion_from_predictions_rejects_unknown_unit():
    preds = [Prediction(unit_id="ghost", score=0.5, label=1)]
    with pytest.raises(EvalError, match="unknown unit"):
        confusion_from_predictions(preds, {"a": 1})


def test_confusion_from_predictions_rejects_count_mismatch():
    preds = [Prediction(unit_id="a", score=0.5, label=1)]
    with pytest.raises(EvalError, match="1 predictions for 2"):
        confusion_from_predictions(preds, {"a": 1, "b": 0})


# ---------------------------------------------------------------------------
# precision / recall / F1


def test_prf1_textbook_values():
    m = prf1(Confusion(tp=2, fp=1, fn=2, tn=5))
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(1 / 2)
    assert m.f1 == pytest.approx(4 / 7)
    assert not m.degenerate


def test_prf1_perfect_prediction():
    m = prf1(Confusion(tp=10, tn=20))
    assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)


def test_prf1_no_positive_predictions_is_degenerate():
    m = prf1(Confusion(tn=5, fn=3))
    assert m.precision == 0.0
    assert m.degenerate


def test_prf1_no_positive_truth_is_degenerate():
    m = prf1(Confusion(tn=5, fp=2))
    assert m.recall == 0.0
    assert m.degenerate


def test_prf1_all_negative_everything_is_degenerate():
    m = prf1(Confusion(tn=9))
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)
    assert m.degenerate


@given(
    tp=st.integers(0, 50),
    fp=st.integers(0, 50),
    fn=st.integers(0, 50),
    tn=st.integers(0, 50),
)
@settings(max_examples=200)
def test_prf1_matches_direct_formulas(tp, fp, fn, tn):
    m = prf1(Confusion(tp=tp, fp=fp, fn=fn, tn=tn))
    if tp + fp > 0:
        assert abs(m.precision - tp / (tp + fp)) <= 1e-12
    if tp + fn > 0:
        assert abs(m.recall - tp / (tp + fn)) <= 1e-12
    if 2 * tp + fp + fn > 0:
        assert abs(m.f1 - 2 * tp / (2 * tp + fp + fn)) <= 1e-12
    # F1 is the harmonic mean whenever precision+recall is nonzero
    if m.precision + m.recall > 0 and not m.degenerate:
        harmonic = 2 * m.precision * m.recall / (m.precision + m.recall)
        assert abs(m.f1 - harmonic) <= 1e-12


@given(tp=st.integers(0, 30), fp=st.integers(0, 30), fn=st.integers(0, 30))
@settings(max_examples=100)
def test_prf1_ignores_true_negative_count(tp, fp, fn):
    a = prf1(Confusion(tp=tp, fp=fp, fn=fn, tn=0))
    b = prf1(Confusion(tp=tp, fp=fp, fn=fn, tn=1000))
    assert (a.precision, a.recall, a.f1) == (b.precision, b.recall, b.f1)


# ---------------------------------------------------------------------------
# window-to-session merging


def wp(sid, offset, score, label):
    return Prediction(unit_id=(sid, offset), score=score, label=label)


def test_merge_or_folds_labels_and_takes_max_score():
    preds = [
        wp("s1", 0, 0.2, 0),
        wp("s1", 5, 0.8, 1),
        wp("s2", 0, 0.3, 0),
    ]
    merged, truth = merge_window_predictions(preds, {"s1": 1, "s2": 0})
    assert [(p.unit_id, p.score, p.label) for p in merged] == [
        ("s1", 0.8, 1),
        ("s2", 0.3, 0),
    ]
    assert truth == [1, 0]


def test_merge_keeps_first_appearance_order():
    preds = [wp("z", 0, 0.1, 0), wp("a", 0, 0.1, 0), wp("z", 5, 0.2, 0)]
    merged, _ = merge_window_predictions(preds, {"z": 0, "a": 0})
    assert [p.unit_id for p in merged] == ["z", "a"]


def test_merge_rejects_session_without_windows():
    preds = [wp("s1", 0, 0.5, 1)]
    with pytest.raises(EvalError, match="zero windows"):
        merge_window_predictions(preds, {"s1": 1, "s2": 0})


def test_merge_rejects_window_without_truth():
    preds = [wp("s1", 0, 0.5, 1)]
    with pytest.raises(EvalError, match="no truth label"):
        merge_window_predictions(preds, {})


def test_merge_rejects_plain_unit_ids():
    preds = [Prediction(unit_id="s1", score=0.5, label=1)]
    with pytest.raises(EvalError, match="pair"):
        merge_window_predictions(preds, {"s1": 1})


def test_merge_matches_or_fold_oracle_on_random_windows():
    rng = np.random.RandomState(7)
    preds = []
    labels = {}
    for i in range(10):
        sid = f"s{i}"
        labels[sid] = int(rng.randint(0, 2))
        for w in range(int(rng.randint(1, 6))):
            preds.append(wp(sid, w * 5, float(rng.rand()), int(rng.randint(0, 2))))
    merged, truth = merge_window_predictions(preds, labels)
    expected = oracle_session_merge(preds)
    assert len(merged) == 10
    for pred in merged:
        want_score, want_label = expected[pred.unit_id]
        assert pred.score == want_score
        assert pred.label == want_label
    assert truth == [labels[p.unit_id] for p in merged]


def test_merged_confusion_feeds_prf1():
    preds = [wp("s1", 0, 0.9, 1), wp("s2", 0, 0.1, 0), wp("s3", 0, 0.7, 1)]
    merged, truth = merge_window_predictions(preds, {"s1": 1, "s2": 0, "s3": 0})
    m = prf1(confusion([p.label for p in merged], truth))
    assert m.precision == pytest.approx(0.5)
    assert m.recall == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# spread across techniques


def test_gap_is_max_minus_min():
    assert gap([0.6, 0.875, 0.7]) == pytest.approx(0.275)


def test_gap_of_identical_values_is_zero():
    assert gap([0.5, 0.5, 0.5]) == 0.0


def test_gap_needs_two_values():
    with pytest.raises(EvalError, match="at least 2"):
        gap([0.9])


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=10))
@settings(max_examples=100)
def test_gap_matches_sort_oracle(values):
    ordered = sorted(values)
    assert gap(values) == ordered[-1] - ordered[0]
