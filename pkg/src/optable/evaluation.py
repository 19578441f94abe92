"""ROC curves and Az (area under the ROC curve) for probability maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, UndefinedScoreError


@dataclass(frozen=True)
class AzScore:
    value: float
    positives: int
    negatives: int


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray


def _counts(scores, truth):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    if scores.shape != truth.shape:
        raise DimensionMismatchError(f"map has {scores.size} pixels, truth has {truth.size}")
    pos = int(truth.sum())
    neg = truth.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedScoreError(f"Az undefined: {pos} positives, {neg} negatives")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truth[order]
    # one ROC vertex per distinct threshold, sweeping from high to low
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(t)[last]]
    fp = np.r_[0, np.cumsum(~t)[last]]
    return tp, fp, pos, neg


def roc_curve(scores, truth) -> RocCurve:
    tp, fp, pos, neg = _counts(scores, truth)
    return RocCurve(fp / neg, tp / pos)


def roc_az(scores, truth) -> AzScore:
    """Trapezoidal area under the ROC curve over all distinct thresholds.

    Counts stay integral until the final division, so the value equals the
    tie-corrected Mann-Whitney statistic U / (P * N).
    """
    tp, fp, pos, neg = _counts(scores, truth)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return AzScore(twice_area / (2 * pos * neg), pos, neg)


def aggregate_scores(scores: Sequence[AzScore]) -> tuple[float, float]:
    """Mean and population standard deviation of Az values."""
    if not scores:
        raise ValueError("no scores to aggregate")
    values = np.array([s.value for s in scores])
    return float(values.mean()), float(values.std())


@dataclass
class ReportRow:
    name: str
    positives: int
    negatives: int
    az: float | None
    note: str = ""


def score_row(name: str, prob: np.ndarray, truth: np.ndarray) -> ReportRow:
    """Score one map; a single-class truth mask becomes a skipped row, not an error."""
    truth = np.asarray(truth, dtype=bool)
    try:
        s = roc_az(prob, truth)
    except UndefinedScoreError:
        pos = int(truth.sum())
        return ReportRow(name, pos, truth.size - pos, None, "skipped: degenerate truth")
    return ReportRow(name, s.positives, s.negatives, s.value)


def format_summary(mean: float, std: float) -> str:
    return f"{mean:.3f} / {std:.3f}"


def write_report(path, rows: Sequence[ReportRow]) -> tuple[float, float] | None:
    """CSV with one row per image and a final mean/std row; returns (mean, std) if any row scored."""
    scored = [AzScore(r.az, r.positives, r.negatives) for r in rows if r.az is not None]
    summary = aggregate_scores(scored) if scored else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", "positives", "negatives", "az", "note"])
        for r in rows:
            w.writerow([r.name, r.positives, r.negatives, "" if r.az is None else f"{r.az:.9f}", r.note])
        if summary is None:
            w.writerow(["mean/std", "", "", "", "no scored rows"])
        else:
            w.writerow(["mean/std", "", "", f"{summary[0]:.9f}", f"std={summary[1]:.9f}"])
    return summary
