"""Evaluation statistics: ROC curves, rank AUC, and the DeLong test for
comparing two correlated AUCs measured on the same samples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True, eq=False)
class ScoredSet:
    """Aligned anomaly scores and binary labels."""

    scores: np.ndarray
    labels: np.ndarray
    ids: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        labels = np.asarray(self.labels).ravel()
        if scores.shape != labels.shape:
            raise ValueError(
                f"scores and labels must align, got {scores.shape} vs {labels.shape}"
            )
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must all be 0 or 1")
        labels = labels.astype(np.int64)
        if self.ids is not None and len(self.ids) != scores.size:
            raise ValueError("ids must align with scores")
        scores.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())


def _require_both_classes(s: ScoredSet) -> None:
    if s.n_pos == 0 or s.n_neg == 0:
        raise ValueError("AUC requires at least one positive and one negative label")


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank of their run."""
    order = np.argsort(x, kind="stable")
    z = x[order]
    n = x.size
    bounds = np.flatnonzero(np.r_[True, z[1:] != z[:-1], True])
    starts, ends = bounds[:-1], bounds[1:]
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(mid, ends - starts)
    return ranks


def auc(s: ScoredSet) -> float:
    """Mann-Whitney AUC: fraction of (positive, negative) pairs ordered
    correctly, with ties credited 0.5."""
    _require_both_classes(s)
    ranks = _midranks(s.scores)
    m, n = s.n_pos, s.n_neg
    pos_rank_sum = float(ranks[s.labels == 1].sum())
    return (pos_rank_sum - m * (m + 1) / 2.0) / float(m * n)


def roc_curve(s: ScoredSet) -> np.ndarray:
    """ROC polyline as an array of (fpr, tpr) rows.

    Thresholds at every distinct score; runs monotonically from (0, 0) to
    (1, 1).
    """
    _require_both_classes(s)
    order = np.argsort(-s.scores, kind="stable")
    labels = s.labels[order]
    scores = s.scores[order]
    # last index of each distinct-score run
    distinct_ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tps = np.cumsum(labels)[distinct_ends]
    fps = np.cumsum(1 - labels)[distinct_ends]
    tpr = np.r_[0.0, tps / s.n_pos]
    fpr = np.r_[0.0, fps / s.n_neg]
    return np.column_stack([fpr, tpr])


def roc_auc_trapezoid(s: ScoredSet) -> float:
    """Area under the ROC polyline; equals the rank AUC."""
    points = roc_curve(s)
    return float(np.trapezoid(points[:, 1], points[:, 0]))


def _placements(s: ScoredSet) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-positive and per-negative placement values plus the AUC.

    v01[i] is the fraction of negatives scored below positive i (ties half),
    v10[j] the fraction of positives scored above negative j (ties half);
    both average to the AUC.
    """
    pos = s.scores[s.labels == 1]
    neg = s.scores[s.labels == 0]
    m, n = pos.size, neg.size
    tz = _midranks(np.concatenate([pos, neg]))
    tx = _midranks(pos)
    ty = _midranks(neg)
    v01 = (tz[:m] - tx) / n
    v10 = 1.0 - (tz[m:] - ty) / m
    # midrank sums are exact in float64, so this equals auc() bit for bit
    a = (float(tz[:m].sum()) - m * (m + 1) / 2.0) / float(m * n)
    return v01, v10, a


def auc_variance(s: ScoredSet) -> float:
    """DeLong variance estimate of a single AUC."""
    _require_both_classes(s)
    v01, v10, _ = _placements(s)
    m, n = v01.size, v10.size
    var01 = float(np.var(v01, ddof=1)) if m > 1 else 0.0
    var10 = float(np.var(v10, ddof=1)) if n > 1 else 0.0
    return var01 / m + var10 / n


@dataclass(frozen=True)
class DelongResult:
    auc_a: float
    auc_b: float
    z: float
    p_value: float


def delong_test(a: ScoredSet, b: ScoredSet) -> DelongResult:
    """Compare two correlated AUCs scored on the same samples.

    Uses placement-value covariance with midrank tie handling; the returned
    p-value is two-sided. Degenerate zero-variance cases resolve to p = 1
    when the AUCs agree and p = 0 when they differ.
    """
    _require_both_classes(a)
    if not np.array_equal(a.labels, b.labels):
        raise ValueError("DeLong test requires identical labels in the same order")
    if a.ids is not None and b.ids is not None and a.ids != b.ids:
        raise ValueError("DeLong test requires identical sample ids in the same order")
    v01a, v10a, auc_a = _placements(a)
    v01b, v10b, auc_b = _placements(b)
    m, n = v01a.size, v10a.size
    s01 = np.cov(np.vstack([v01a, v01b]), ddof=1) if m > 1 else np.zeros((2, 2))
    s10 = np.cov(np.vstack([v10a, v10b]), ddof=1) if n > 1 else np.zeros((2, 2))
    cov = s01 / m + s10 / n
    var_diff = float(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
    diff = auc_a - auc_b
    if var_diff <= 0.0:
        if diff == 0.0:
            return DelongResult(auc_a, auc_b, 0.0, 1.0)
        return DelongResult(auc_a, auc_b, math.copysign(math.inf, diff), 0.0)
    z = diff / math.sqrt(var_diff)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return DelongResult(auc_a, auc_b, z, p)


def read_scores_csv(path: Union[str, Path]) -> ScoredSet:
    """Read a scores file with columns id, score, label."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "score", "label"} <= set(reader.fieldnames):
            raise ValueError(f"scores CSV must have columns id, score, label: {path}")
        ids, scores, labels = [], [], []
        for row in reader:
            ids.append(row["id"])
            scores.append(float(row["score"]))
            labels.append(int(row["label"]))
    return ScoredSet(np.array(scores), np.array(labels), ids=tuple(ids))


def write_scores_csv(s: ScoredSet, path: Union[str, Path]) -> None:
    ids = s.ids if s.ids is not None else tuple(str(i) for i in range(s.scores.size))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "score", "label"])
        for i, score, label in zip(ids, s.scores, s.labels):
            writer.writerow([i, repr(float(score)), int(label)])


def eval_report(a: ScoredSet, b: Optional[ScoredSet] = None) -> dict:
    """Summary statistics for one scored set, optionally compared to a second."""
    report = {
        "n": int(a.scores.size),
        "n_pos": a.n_pos,
        "n_neg": a.n_neg,
        "auc": auc(a),
        "auc_variance": auc_variance(a),
    }
    if b is not None:
        result = delong_test(a, b)
        report.update(
            {
                "auc_b": result.auc_b,
                "auc_b_variance": auc_variance(b),
                "delong_z": result.z,
                "delong_p": result.p_value,
            }
        )
    return report
