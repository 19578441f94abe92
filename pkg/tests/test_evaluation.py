import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optable.errors import UndefinedScoreError
from optable.evaluation import (AzScore, ReportRow, aggregate_scores, format_summary, roc_az, roc_curve,
                                score_row, write_report)


def pairwise_az(scores, truth):
    """Mann-Whitney by direct enumeration: P(pos > neg) + 0.5 P(pos == neg)."""
    scores = np.ravel(scores)
    truth = np.ravel(truth).astype(bool)
    pos, neg = scores[truth], scores[~truth]
    total = 0.0
    for p in pos:
        total += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return total / (len(pos) * len(neg))


def _instance(r, n, levels):
    truth = r.random(n) < r.uniform(0.1, 0.9)
    truth[0], truth[1] = True, False
    scores = r.integers(0, levels, n) / max(levels - 1, 1)
    return scores, truth


def test_examples():
    assert roc_az([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]).value == 1.0
    assert roc_az([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]).value == 0.0
    assert roc_az([0.5] * 6, [1, 0, 1, 0, 1, 0]).value == 0.5
    s = roc_az(np.array([[0.3, 0.7], [0.7, 0.2]]), np.array([[0, 1], [0, 0]]))
    assert (s.value, s.positives, s.negatives) == (pytest.approx(5 / 6), 1, 3)


def test_degenerate_truth():
    with pytest.raises(UndefinedScoreError):
        roc_az([0.1, 0.2], [0, 0])
    with pytest.raises(UndefinedScoreError):
        roc_az([0.1, 0.2], [1, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 300), st.integers(1, 12))
def test_matches_pairwise_oracle(seed, n, levels):
    scores, truth = _instance(np.random.default_rng(seed), n, levels)
    assert abs(roc_az(scores, truth).value - pairwise_az(scores, truth)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_and_label_swap(seed):
    r = np.random.default_rng(seed)
    scores, truth = _instance(r, 150, 8)
    az = roc_az(scores, truth).value
    assert roc_az(np.sqrt(scores) * 0.3 + 0.1, truth).value == az
    assert roc_az(scores, ~truth).value == pytest.approx(1 - az, abs=1e-12)
    assert 0 <= az <= 1


def test_roc_curve_shape(rng):
    scores, truth = _instance(rng, 200, 5)
    c = roc_curve(scores, truth)
    assert c.fpr[0] == 0 and c.tpr[0] == 0 and c.fpr[-1] == 1 and c.tpr[-1] == 1
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    area = float(np.sum(np.diff(c.fpr) * (c.tpr[1:] + c.tpr[:-1]) / 2))
    assert area == pytest.approx(roc_az(scores, truth).value, abs=1e-12)


def test_aggregate():
    mean, std = aggregate_scores([AzScore(v, 1, 1) for v in (0.9, 1.0, 0.8)])
    assert mean == pytest.approx(0.9) and std == pytest.approx(np.sqrt(2 / 300))
    assert aggregate_scores([AzScore(0.7, 1, 1)]) == (0.7, 0.0)
    assert format_summary(0.982, 0.015) == "0.982 / 0.015"
    with pytest.raises(ValueError):
        aggregate_scores([])


def test_report(tmp_path):
    rows = [score_row("a", np.array([0.9, 0.1]), np.array([1, 0])),
            score_row("b", np.array([0.2, 0.1]), np.array([0, 0])),
            ReportRow("c", 3, 5, 0.8)]
    assert rows[1].az is None and rows[1].note.startswith("skipped")
    summary = write_report(tmp_path / "r.csv", rows)
    assert summary == pytest.approx((0.9, 0.1))
    with open(tmp_path / "r.csv") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["image", "positives", "negatives", "az", "note"]
    assert len(table) == 1 + len(rows) + 1
    assert table[-1][0] == "mean/std"
