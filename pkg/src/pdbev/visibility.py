"""Closed-form visibility volumes and BEV visibility maps."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from ._workers import for_chunks
from .aggregation import to_bev_grid
from .depth_model import clamp_b, make_param_map, visibility_prob
from .errors import DomainError, ShapeError
from .geometry import CameraModel, bilinear_sample_many
from .tensors_io import GridConfig

DEFAULT_B_GT = 0.05


def visibility_volume(
    depth_views: Sequence[Tuple[np.ndarray, CameraModel]], grid: GridConfig, threads=None
) -> np.ndarray:
    """Per-voxel visibility, the maximum over views that see the voxel.

    Voxels outside every frustum are 0 (unknown is treated as occluded).
    """
    if len(depth_views) == 0:
        raise DomainError("at least one view is required")
    for prm, cam in depth_views:
        if np.shape(prm) != (*cam.image_size, 2):
            raise ShapeError(f"view {cam.name}: depth params {np.shape(prm)} != {(*cam.image_size, 2)}")
    centers = grid.centers().reshape(-1, 3)
    out = np.zeros(centers.shape[0])
    prms = [np.asarray(p, dtype=float) for p, _ in depth_views]

    def work(start, stop):
        pts = centers[start:stop]
        for prm, (_, cam) in zip(prms, depth_views):
            uv, d, ok = cam.project(pts)
            idx = np.flatnonzero(ok & cam.in_image(uv))
            if idx.size == 0:
                continue
            mu_b, _ = bilinear_sample_many(prm, uv[idx])
            vis = visibility_prob(d[idx], mu_b[:, 0], clamp_b(mu_b[:, 1]))
            np.maximum.at(out, start + idx, vis)

    for_chunks(work, centers.shape[0], threads)
    return out.reshape(grid.counts)


def visibility_bev(vol: np.ndarray, grid: GridConfig) -> np.ndarray:
    """Max over height, then block-average to the BEV grid. Returns ``X x Y``."""
    vol = np.asarray(vol, dtype=float)
    if vol.shape != tuple(grid.counts):
        raise ShapeError(f"visibility volume {vol.shape} does not match grid {tuple(grid.counts)}")
    column_max = vol.max(axis=2)
    return to_bev_grid(column_max[..., None], grid)[..., 0]


def gt_visibility(
    dense_depth_views: Sequence[Tuple[np.ndarray, CameraModel]],
    grid: GridConfig,
    b_gt: float = DEFAULT_B_GT,
    threads=None,
) -> np.ndarray:
    """Ground-truth visibility map from dense depth with a fixed diversity ``b_gt``."""
    views = []
    for depth, cam in dense_depth_views:
        depth = np.asarray(depth, dtype=float)
        if depth.shape != tuple(cam.image_size):
            raise ShapeError(f"view {cam.name}: dense depth {depth.shape} != {tuple(cam.image_size)}")
        if np.any(depth <= 0):
            raise DomainError(f"view {cam.name}: dense depth must be positive everywhere")
        views.append((make_param_map(depth, b_gt), cam))
    return visibility_bev(visibility_volume(views, grid, threads=threads), grid)
