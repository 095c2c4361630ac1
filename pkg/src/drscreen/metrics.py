"""Agreement and detection metrics: quadratic-weighted kappa, region matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAgreementError, InvalidInputError
from .morphology import Region


@dataclass(frozen=True)
class ConfusionMatrix:
    """k x k counts; rows are the reference rater, columns the algorithm."""

    counts: np.ndarray

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise InvalidInputError("confusion matrix must be square with k >= 2")
        if (c < 0).any() or c.sum() < 1:
            raise InvalidInputError("counts must be non-negative with total >= 1")

    @property
    def k(self) -> int:
        return self.counts.shape[0]


@dataclass
class DetectionScore:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        d = self.true_positives + self.false_positives
        return self.true_positives / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.true_positives + self.false_negatives
        return self.true_positives / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def quadratic_weighted_kappa(m: ConfusionMatrix) -> float:
    """Chance-corrected agreement with (i-j)^2 disagreement weights.

    kappa = 1 - sum(w * O) / sum(w * E), with w_ij = (i-j)^2 / (k-1)^2,
    O the observed proportion matrix, and E the outer product of the
    marginals.
    """
    counts = m.counts.astype(np.float64)
    total = counts.sum()
    observed = counts / total
    idx = np.arange(m.k, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (m.k - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    denom = float((weights * expected).sum())
    if denom == 0.0:
        raise DegenerateAgreementError("all mass on a single grade for both raters")
    return 1.0 - float((weights * observed).sum()) / denom


def confusion_from_grades(reference: list[int], predicted: list[int], k: int) -> ConfusionMatrix:
    """Tally grade pairs into a k x k matrix (rows = reference)."""
    if len(reference) != len(predicted):
        raise InvalidInputError("grade lists must have equal length")
    counts = np.zeros((k, k), dtype=np.int64)
    for r, p in zip(reference, predicted):
        if not (0 <= r < k and 0 <= p < k):
            raise InvalidInputError(f"grade out of range: ({r}, {p})")
        counts[r, p] += 1
    return ConfusionMatrix(counts)


def _overlap(a: Region, b: Region) -> tuple[int, float]:
    """(intersection pixel count, IoU) between two regions."""
    sa = set(map(tuple, a.pixels))
    sb = set(map(tuple, b.pixels))
    inter = len(sa & sb)
    union = len(sa) + len(sb) - inter
    return inter, inter / union if union else 0.0


def _centroid_inside(pred: Region, truth: Region) -> bool:
    cx, cy = pred.centroid
    return (int(round(cy)), int(round(cx))) in set(map(tuple, truth.pixels))


def match_regions(
    predicted: list[Region], truth: list[Region], iou_floor: float = 0.2
) -> DetectionScore:
    """Greedy one-to-one matching by descending overlap.

    A prediction matches a truth region when its centroid falls inside it
    or their IoU reaches ``iou_floor``. Unmatched predictions count as
    false positives, unmatched truths as false negatives.
    """
    pairs = []
    for pi, p in enumerate(predicted):
        for ti, t in enumerate(truth):
            inter, iou = _overlap(p, t)
            if iou >= iou_floor or _centroid_inside(p, t):
                pairs.append((iou, inter, pi, ti))
    pairs.sort(key=lambda x: (-x[0], -x[1], x[2], x[3]))
    used_p, used_t = set(), set()
    tp = 0
    for _, _, pi, ti in pairs:
        if pi in used_p or ti in used_t:
            continue
        used_p.add(pi)
        used_t.add(ti)
        tp += 1
    return DetectionScore(
        true_positives=tp,
        false_positives=len(predicted) - tp,
        false_negatives=len(truth) - tp,
    )
