"""Segmentation comparison metrics: variation of information and adapted Rand error.

Both metrics are computed from one sparse contingency table.  Voxels whose
ground-truth label is 0 are excluded entirely; a predicted label of 0 is an
ordinary label, so dust removal shows up as split error rather than vanishing.

VI is reported in nats.  Published tables do not always state their log base,
so cross-toolchain comparisons need care.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volumes import SegVolume

__all__ = [
    "ContingencyTable",
    "contingency",
    "variation_of_information",
    "adapted_rand",
]


@dataclass(frozen=True)
class ContingencyTable:
    """Sparse joint label counts between a prediction and a ground truth.

    pred_labels / gt_labels / counts are parallel arrays, one entry per
    nonempty cell (i, j) with count n_ij.  Ground-truth label 0 never appears.
    """

    pred_labels: np.ndarray
    gt_labels: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.pred_labels, dtype=np.uint64)
        g = np.ascontiguousarray(self.gt_labels, dtype=np.uint64)
        n = np.ascontiguousarray(self.counts, dtype=np.int64)
        if not (p.ndim == g.ndim == n.ndim == 1 and p.size == g.size == n.size):
            raise ValueError("contingency table: parallel 1-D arrays required")
        if n.size and int(n.min()) <= 0:
            raise ValueError("contingency table: counts must be positive")
        if np.any(g == 0):
            raise ValueError("contingency table: gt label 0 must be excluded")
        for name, arr in (("pred_labels", p), ("gt_labels", g), ("counts", n)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def pred_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        """(labels, a_i): per-prediction-label totals, labels ascending."""
        labels, inverse = np.unique(self.pred_labels, return_inverse=True)
        return labels, np.bincount(inverse, weights=self.counts).astype(np.int64)

    def gt_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        """(labels, b_j): per-ground-truth-label totals, labels ascending."""
        labels, inverse = np.unique(self.gt_labels, return_inverse=True)
        return labels, np.bincount(inverse, weights=self.counts).astype(np.int64)


def contingency(pred: SegVolume, gt: SegVolume) -> ContingencyTable:
    """Joint counts over voxels with gt != 0; shapes must match."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(
            f"contingency: shape mismatch, pred {pred.data.shape} vs gt {gt.data.shape}"
        )
    g = gt.data.ravel()
    keep = g != 0
    g = g[keep]
    p = pred.data.ravel()[keep]
    if g.size == 0:
        empty = np.empty(0, dtype=np.uint64)
        return ContingencyTable(empty, empty, np.empty(0, dtype=np.int64))
    pairs = np.stack([p, g], axis=1)
    cells, counts = np.unique(pairs, axis=0, return_counts=True)
    return ContingencyTable(cells[:, 0], cells[:, 1], counts.astype(np.int64))


def variation_of_information(t: ContingencyTable) -> tuple[float, float, float]:
    """(vi_split, vi_merge, vi_total) in nats.

    vi_split = H(pred | gt) charges oversegmentation; vi_merge = H(gt | pred)
    charges undersegmentation.  Terms with n_ij = 0 contribute 0.
    """
    n_total = t.total
    if n_total == 0:
        raise ValueError("variation_of_information: empty contingency table")
    counts = t.counts.astype(np.float64)
    p_labels, a = t.pred_marginals()
    g_labels, b = t.gt_marginals()
    # Map each cell to its marginal via searchsorted on the ascending labels.
    a_of_cell = a[np.searchsorted(p_labels, t.pred_labels)].astype(np.float64)
    b_of_cell = b[np.searchsorted(g_labels, t.gt_labels)].astype(np.float64)
    frac = counts / n_total
    vi_split = float(-np.sum(frac * np.log(counts / b_of_cell)))
    vi_merge = float(-np.sum(frac * np.log(counts / a_of_cell)))
    # Every term is >= 0 mathematically; clamp rounding residue and drop -0.0.
    vi_split = max(vi_split, 0.0) + 0.0
    vi_merge = max(vi_merge, 0.0) + 0.0
    return vi_split, vi_merge, vi_split + vi_merge


def adapted_rand(t: ContingencyTable) -> tuple[float, float, float]:
    """(error, precision, recall) with the squared-count definition.

    precision = sum n_ij^2 / sum a_i^2, recall = sum n_ij^2 / sum b_j^2,
    error = 1 - F where F is their harmonic mean.
    """
    if t.total == 0:
        raise ValueError("adapted_rand: empty contingency table")
    counts = t.counts
    _, a = t.pred_marginals()
    _, b = t.gt_marginals()
    sum_n2 = int(np.sum(counts.astype(object) ** 2))
    sum_a2 = int(np.sum(a.astype(object) ** 2))
    sum_b2 = int(np.sum(b.astype(object) ** 2))
    if sum_a2 == 0 or sum_b2 == 0:
        raise ValueError("adapted_rand: zero marginal sum")
    precision = sum_n2 / sum_a2
    recall = sum_n2 / sum_b2
    f_score = 2.0 * precision * recall / (precision + recall)
    return 1.0 - f_score, precision, recall
