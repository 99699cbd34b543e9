"""Collapse the voxel feature volume to a BEV map."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError
from .tensors_io import GridConfig

DEFAULT_BIAS = 1e-3


def occupancy(lik: np.ndarray, b_o: float = DEFAULT_BIAS) -> np.ndarray:
    """Normalize the likelihood volume along Z into per-column distributions.

    ``O = (P + b_o) / sum_z (P + b_o)``. The bias enters the denominator once
    per voxel so that every column sums to one; an all-zero column becomes
    uniform. With ``b_o = 0`` an all-zero column also falls back to uniform.
    """
    lik = np.asarray(lik, dtype=float)
    if lik.ndim != 3:
        raise ShapeError(f"likelihood volume must be X' x Y' x Z', got {lik.shape}")
    if b_o < 0:
        raise DomainError(f"bias must be nonnegative, got {b_o}")
    if np.any(lik < 0):
        raise DomainError("likelihood volume has negative entries")
    shifted = lik + b_o
    total = shifted.sum(axis=2, keepdims=True)
    empty = total <= 0
    out = shifted / np.where(empty, 1.0, total)
    return np.where(empty, 1.0 / lik.shape[2], out)


def compress(feat: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """Occupancy-weighted sum of each column's features -> ``X' x Y' x CH``."""
    feat = np.asarray(feat, dtype=float)
    occ = np.asarray(occ, dtype=float)
    if feat.ndim != 4 or occ.shape != feat.shape[:3]:
        raise ShapeError(f"feature volume {feat.shape} does not match occupancy {occ.shape}")
    return np.einsum("xyzc,xyz->xyc", feat, occ)


def pool_factors(shape_xy, grid: GridConfig):
    X, Y = grid.bev_counts
    if shape_xy[0] % X or shape_xy[1] % Y:
        raise ShapeError(f"map {tuple(shape_xy)} is not an integer multiple of BEV grid {(X, Y)}")
    return shape_xy[0] // X, shape_xy[1] // Y


def to_bev_grid(m: np.ndarray, grid: GridConfig) -> np.ndarray:
    """Block-average an ``X' x Y' x C`` map down to the ``X x Y x C`` BEV grid."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 3:
        raise ShapeError(f"expected an X' x Y' x C map, got {m.shape}")
    if m.shape[:2] != tuple(grid.counts[:2]):
        raise ShapeError(f"map {m.shape[:2]} does not match volume footprint {tuple(grid.counts[:2])}")
    fx, fy = pool_factors(m.shape[:2], grid)
    if fx == 1 and fy == 1:
        return m.copy()
    X, Y = grid.bev_counts
    return m.reshape(X, fx, Y, fy, m.shape[2]).mean(axis=(1, 3))


def concat_pillars(feat: np.ndarray) -> np.ndarray:
    """Stack each column's voxels channel-wise: block ``z`` holds ``feat[..., z, :]``."""
    feat = np.asarray(feat, dtype=float)
    if feat.ndim != 4:
        raise ShapeError(f"feature volume must be X' x Y' x Z' x CH, got {feat.shape}")
    X, Y, Z, C = feat.shape
    return feat.reshape(X, Y, Z * C)
