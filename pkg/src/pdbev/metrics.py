"""Segmentation metrics with a visible/occluded split, and the segmentation loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError

DEFAULT_TAU = 0.5
DICE_EPS = 1.0
PROB_EPS = 1e-7


@dataclass(frozen=True)
class VisReport:
    """IoUs are None when the union is empty; rates are percentages of gt-positive cells."""

    iou_all: Optional[float]
    iou_vis: Optional[float]
    iou_occ: Optional[float]
    visible_rate: Optional[float]
    occluded_rate: Optional[float]

    def to_json(self) -> dict:
        # Key order is part of the CLI contract.
        return {
            "iou": self.iou_all,
            "iou_vis": self.iou_vis,
            "iou_occ": self.iou_occ,
            "visible_rate": self.visible_rate,
            "occluded_rate": self.occluded_rate,
        }


def _binarize(m, thresh):
    return np.asarray(m, dtype=float) >= thresh


def _check_same(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"mask shapes differ: {sorted(shapes)}")


def _iou_bool(p: np.ndarray, g: np.ndarray) -> Optional[float]:
    union = np.count_nonzero(p | g)
    if union == 0:
        return None
    return np.count_nonzero(p & g) / union


def iou(pred, gt, thresh: float = 0.5) -> Optional[float]:
    """Intersection over union of binarized masks (``value >= thresh``)."""
    _check_same(pred, gt)
    return _iou_bool(_binarize(pred, thresh), _binarize(gt, 0.5))


def visibility_iou(pred, gt, vis, tau_vis=DEFAULT_TAU, tau_occ=DEFAULT_TAU, thresh=0.5) -> VisReport:
    """IoU restricted to visible (``vis >= tau_vis``) and occluded (``vis < tau_occ``) cells."""
    _check_same(pred, gt, vis)
    if not 0 <= tau_occ <= tau_vis <= 1:
        raise DomainError(f"need 0 <= tau_occ <= tau_vis <= 1, got tau_occ={tau_occ}, tau_vis={tau_vis}")
    p = _binarize(pred, thresh)
    g = _binarize(gt, 0.5)
    vis = np.asarray(vis, dtype=float)
    visible = vis >= tau_vis
    occluded = vis < tau_occ
    n_gt = np.count_nonzero(g)
    if n_gt:
        visible_rate = 100.0 * np.count_nonzero(g & visible) / n_gt
        occluded_rate = 100.0 * np.count_nonzero(g & occluded) / n_gt
    else:
        visible_rate = occluded_rate = None
    return VisReport(
        iou_all=_iou_bool(p, g),
        iou_vis=_iou_bool(p & visible, g & visible),
        iou_occ=_iou_bool(p & occluded, g & occluded),
        visible_rate=visible_rate,
        occluded_rate=occluded_rate,
    )


def dice_loss(pred, gt, eps: float = DICE_EPS) -> float:
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    return float(1.0 - (2.0 * np.sum(p * g) + eps) / (np.sum(p) + np.sum(g) + eps))


def bce_loss(pred, gt, eps_p: float = PROB_EPS) -> float:
    p = np.clip(np.asarray(pred, dtype=float), eps_p, 1.0 - eps_p)
    g = np.asarray(gt, dtype=float)
    return float(np.mean(-g * np.log(p) - (1.0 - g) * np.log1p(-p)))


def seg_loss(pred, gt, beta_dice=1.0, beta_bce=1.0, eps=DICE_EPS, eps_p=PROB_EPS) -> float:
    """Weighted sum of Dice and binary cross-entropy losses on a soft mask."""
    _check_same(pred, gt)
    return beta_dice * dice_loss(pred, gt, eps) + beta_bce * bce_loss(pred, gt, eps_p)
