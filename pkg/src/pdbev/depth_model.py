"""Laplacian per-pixel depth distribution and its closed forms.

All functions broadcast over numpy arrays. ``mu`` is the expected depth and
``b`` the diversity (scale), both in meters.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError

B_MIN = 1e-3


class LaplaceParams(NamedTuple):
    mu: float
    b: float


def clamp_b(b):
    return np.maximum(b, B_MIN)


def make_param_map(mu, b) -> np.ndarray:
    """Stack ``mu`` and ``b`` grids into an ``H x W x 2`` map, clamping ``b``."""
    mu = np.asarray(mu, dtype=float)
    b = np.broadcast_to(np.asarray(b, dtype=float), mu.shape)
    if np.any(mu <= 0):
        raise DomainError("mu must be positive")
    return np.stack([mu, clamp_b(b)], axis=-1)


def laplace_pdf(d, mu, b):
    """``exp(-|d - mu| / b) / (2 b)``."""
    d, mu, b = np.asarray(d, dtype=float), np.asarray(mu, dtype=float), np.asarray(b, dtype=float)
    return np.exp(-np.abs(d - mu) / b) / (2.0 * b)


def laplace_cdf(x, mu, b):
    """Cumulative distribution, evaluated on the branch that cannot overflow."""
    x, mu, b = np.asarray(x, dtype=float), np.asarray(mu, dtype=float), np.asarray(b, dtype=float)
    z = (x - mu) / b
    below = 0.5 * np.exp(np.minimum(z, 0.0))
    above = 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0))
    return np.where(x < mu, below, above)


def occlusion_prob(d, mu, b):
    """Probability mass of the depth distribution on ``[0, d]``.

    The chance that the surface seen through the pixel lies in front of a
    point at depth ``d``. Zero at ``d = 0`` exactly.
    """
    return laplace_cdf(d, mu, b) - laplace_cdf(0.0, mu, b)


def visibility_prob(d, mu, b):
    """``1 - occlusion_prob``; exactly 1 at the camera center."""
    return 1.0 - occlusion_prob(d, mu, b)


def _gather(params: np.ndarray, gt: np.ndarray):
    params = np.asarray(params, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if params.ndim != 3 or params.shape[2] != 2:
        raise ShapeError(f"depth params must be H x W x 2, got {params.shape}")
    if gt.ndim != 2 or gt.shape[1] != 3:
        raise ShapeError(f"sparse ground truth must be N x 3, got {gt.shape}")
    if gt.shape[0] == 0:
        raise DomainError("empty ground-truth set: loss is undefined")
    H, W = params.shape[:2]
    rows, cols, depth = gt[:, 0], gt[:, 1], gt[:, 2]
    if np.any(rows != np.round(rows)) or np.any(cols != np.round(cols)):
        raise DomainError("ground-truth pixel coordinates must be integers")
    r = rows.astype(np.int64)
    c = cols.astype(np.int64)
    if np.any((r < 0) | (r >= H) | (c < 0) | (c >= W)):
        raise DomainError("ground-truth pixel outside the image")
    if np.any(depth <= 0):
        raise DomainError("ground-truth depths must be positive")
    return params[r, c, 0], params[r, c, 1], depth


def depth_nll(params, gt, reduction: str = "sum") -> float:
    """Negative log-likelihood of sparse depth samples under a parameter map.

    Args:
        params: ``H x W x 2`` map, channel 0 = mu, channel 1 = b.
        gt: ``N x 3`` rows of (row, col, depth); read at integer pixels.
        reduction: ``"sum"`` (default) or ``"mean"`` over samples.
    """
    mu, b, d = _gather(params, gt)
    terms = np.log(2.0 * b) + np.abs(d - mu) / b
    if reduction == "sum":
        return float(np.sum(terms))
    if reduction == "mean":
        return float(np.mean(terms))
    raise ValueError(f"unknown reduction {reduction!r}")


def depth_nll_grad(mu, b, d_gt):
    """Partial derivatives of ``log(2b) + |d_gt - mu| / b`` w.r.t. ``(mu, b)``.

    The subgradient at ``d_gt == mu`` is taken as 0 for ``mu``.
    """
    mu, b, d_gt = np.asarray(mu, dtype=float), np.asarray(b, dtype=float), np.asarray(d_gt, dtype=float)
    r = d_gt - mu
    g_mu = -np.sign(r) / b
    g_b = 1.0 / b - np.abs(r) / b**2
    return g_mu, g_b
