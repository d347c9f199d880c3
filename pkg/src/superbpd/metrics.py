"""Segmentation comparison: covering, probabilistic Rand index, variation of information.

VI is reported in nats. Covering is measured from the ground truth's point of
view: each GT region is matched with its best-overlapping predicted region.
With several ground truths every measure is the mean of the per-GT values.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError


@dataclass(eq=False)
class ContingencyTable:
    """Co-occurrence counts; rows are predicted labels, columns GT labels."""

    pred_labels: np.ndarray
    gt_labels: np.ndarray
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def pred_sizes(self):
        return self.counts.sum(axis=1)

    @property
    def gt_sizes(self):
        return self.counts.sum(axis=0)

    def nonzero(self):
        """(row, col, count) of the non-zero cells."""
        i, j = np.nonzero(self.counts)
        return i, j, self.counts[i, j]


class MetricReport(NamedTuple):
    covering: float
    pri: float
    vi: float

    def tsv(self, image_id):
        return f"{image_id}\t{self.covering!r}\t{self.pri!r}\t{self.vi!r}"


def _pair(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred.ravel(), gt.ravel()


def contingency(pred, gt):
    pred, gt = _pair(pred, gt)
    pred_labels, pi = np.unique(pred, return_inverse=True)
    gt_labels, gi = np.unique(gt, return_inverse=True)
    counts = np.bincount(
        pi.ravel() * len(gt_labels) + gi.ravel(), minlength=len(pred_labels) * len(gt_labels)
    ).reshape(len(pred_labels), len(gt_labels))
    return ContingencyTable(pred_labels, gt_labels, counts)


def _as_list(gt_list):
    if isinstance(gt_list, np.ndarray) and gt_list.ndim == 2:
        return [gt_list]
    gts = list(gt_list)
    if not gts:
        raise ValueError("need at least one ground truth")
    return gts


def covering(pred, gt):
    """(1/N) sum over GT regions R of |R| * max IoU(R, R') over predicted R'."""
    table = contingency(pred, gt)
    i, j, n = table.nonzero()
    a = table.pred_sizes[i]
    b = table.gt_sizes[j]
    iou = n / (a + b - n)
    best = np.zeros(len(table.gt_labels))
    np.maximum.at(best, j, iou)
    return float((table.gt_sizes * best).sum() / table.total)


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def rand_index(pred, gt):
    """Fraction of pixel pairs on which the two labelings agree."""
    table = contingency(pred, gt)
    n = table.total
    if n < 2:
        return 1.0
    total = n * (n - 1) // 2
    same_both = int(_pairs(table.counts).sum())
    same_pred = int(_pairs(table.pred_sizes).sum())
    same_gt = int(_pairs(table.gt_sizes).sum())
    disagree = same_pred + same_gt - 2 * same_both
    return (total - disagree) / total


def _entropy(sizes, n):
    p = sizes[sizes > 0] / n
    return float(-(p * np.log(p)).sum())


def variation_of_information(pred, gt):
    """H(pred | gt) + H(gt | pred) in nats."""
    table = contingency(pred, gt)
    n = table.total
    _, _, joint = table.nonzero()
    h_joint = _entropy(joint, n)
    vi = 2.0 * h_joint - _entropy(table.pred_sizes, n) - _entropy(table.gt_sizes, n)
    return max(vi, 0.0)


def pri(pred, gt_list):
    gts = _as_list(gt_list)
    return float(np.mean([rand_index(pred, g) for g in gts]))


def vi(pred, gt_list):
    gts = _as_list(gt_list)
    return float(np.mean([variation_of_information(pred, g) for g in gts]))


def mean_covering(pred, gt_list):
    gts = _as_list(gt_list)
    return float(np.mean([covering(pred, g) for g in gts]))


def evaluate(pred, gt_list):
    gts = _as_list(gt_list)
    return MetricReport(mean_covering(pred, gts), pri(pred, gts), vi(pred, gts))
