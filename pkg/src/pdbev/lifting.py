"""Lift multi-view image features into the ego voxel volume.

Each voxel center is projected into every view. Where the projection lands
inside the image, the view's feature is bilinearly sampled and weighted by
the depth likelihood of the voxel's depth under that pixel's Laplacian; the
weighted features and the likelihoods are summed over views.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ._workers import for_chunks
from .depth_model import clamp_b, laplace_pdf
from .errors import DomainError, ShapeError
from .geometry import CameraModel, bilinear_sample_many
from .tensors_io import GridConfig


@dataclass(frozen=True)
class ViewInput:
    feature: np.ndarray  # H x W x CH
    depth: np.ndarray  # H x W x 2 (mu, b)
    camera: CameraModel

    def __post_init__(self):
        H, W = self.camera.image_size
        if np.ndim(self.feature) != 3 or np.shape(self.feature)[:2] != (H, W):
            raise ShapeError(f"view {self.camera.name}: feature shape {np.shape(self.feature)} != ({H}, {W}, CH)")
        if np.shape(self.depth) != (H, W, 2):
            raise ShapeError(f"view {self.camera.name}: depth params shape {np.shape(self.depth)} != ({H}, {W}, 2)")


def _check_views(views: Sequence[ViewInput]) -> int:
    if len(views) == 0:
        raise DomainError("at least one view is required")
    channels = {np.shape(v.feature)[2] for v in views}
    if len(channels) != 1:
        raise ShapeError(f"views disagree on channel count: {sorted(channels)}")
    return channels.pop()


def _accumulate(views, grid: GridConfig, uniform: bool, threads=None):
    ch = _check_views(views)
    centers = grid.centers().reshape(-1, 3)
    n = centers.shape[0]
    feat = np.zeros((n, ch))
    lik = np.zeros(n)
    feats = [np.asarray(v.feature, dtype=float) for v in views]
    depths = [np.asarray(v.depth, dtype=float) for v in views]

    def work(start, stop):
        pts = centers[start:stop]
        for view, f2d, prm in zip(views, feats, depths):
            uv, d, ok = view.camera.project(pts)
            idx = np.flatnonzero(ok & view.camera.in_image(uv))
            if idx.size == 0:
                continue
            sampled, _ = bilinear_sample_many(f2d, uv[idx])
            if uniform:
                alpha = np.ones(idx.size)
            else:
                mu_b, _ = bilinear_sample_many(prm, uv[idx])
                alpha = laplace_pdf(d[idx], mu_b[:, 0], clamp_b(mu_b[:, 1]))
            feat[start + idx] += alpha[:, None] * sampled
            lik[start + idx] += alpha

    for_chunks(work, n, threads)
    X, Y, Z = grid.counts
    return feat.reshape(X, Y, Z, ch), lik.reshape(X, Y, Z)


def lift(views: Sequence[ViewInput], grid: GridConfig, threads=None) -> Tuple[np.ndarray, np.ndarray]:
    """Geometry-aware lifting.

    Returns:
        ``(feat3d, lik3d)``: the ``X' x Y' x Z' x CH`` feature volume and the
        ``X' x Y' x Z'`` summed depth likelihood. Voxels that no view
        projects validly are exactly zero in both.
    """
    return _accumulate(views, grid, uniform=False, threads=threads)


def lift_uniform(views: Sequence[ViewInput], grid: GridConfig, threads=None) -> np.ndarray:
    """Baseline that copies each pixel's feature to every voxel on its ray."""
    feat, _ = _accumulate(views, grid, uniform=True, threads=threads)
    return feat


def coverage(views: Sequence[ViewInput], grid: GridConfig, threads=None) -> np.ndarray:
    """Number of views that validly project each voxel."""
    _, count = _accumulate(views, grid, uniform=True, threads=threads)
    return count
