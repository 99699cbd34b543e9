"""Pinhole projection, voxel enumeration and bilinear sampling.

Conventions:
  * ego frame: X right, Y forward, Z up;
  * camera frame: x right, y down, z forward, ``p_cam = R @ p_ego + T``;
  * pixel ``(u, v)`` addresses column ``u`` and row ``v``; integer
    coordinates sit on sample centers and ``(0, 0)`` is the top-left sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, ShapeError
from .tensors_io import CameraConfig, GridConfig, RigConfig

DEPTH_EPS = 1e-6

# The voxel lattice is fully described by its grid config.
VoxelGrid = GridConfig


@dataclass(frozen=True)
class CameraModel:
    K: np.ndarray
    R: np.ndarray
    T: np.ndarray
    image_size: Tuple[int, int]  # (H, W)
    name: str = "cam"

    @classmethod
    def from_config(cls, cfg: CameraConfig, image_size) -> "CameraModel":
        return cls(
            K=np.asarray(cfg.K, dtype=float),
            R=np.asarray(cfg.R, dtype=float),
            T=np.asarray(cfg.T, dtype=float),
            image_size=(int(image_size[0]), int(image_size[1])),
            name=cfg.name,
        )

    @property
    def center(self) -> np.ndarray:
        """Camera center in the ego frame."""
        return -self.R.T @ self.T

    def project(self, points: np.ndarray):
        """Project ego-frame points of shape ``(..., 3)``.

        Returns ``(uv, depth, in_front)``. ``uv`` is only meaningful where
        ``in_front`` is true (depth above ``DEPTH_EPS``).
        """
        pts = np.asarray(points, dtype=float)
        cam = pts @ self.R.T + self.T
        depth = cam[..., 2]
        in_front = depth > DEPTH_EPS
        safe = np.where(in_front, depth, 1.0)
        pix = cam @ self.K.T
        uv = pix[..., :2] / safe[..., None]
        return uv, depth, in_front

    def in_image(self, uv: np.ndarray) -> np.ndarray:
        H, W = self.image_size
        u, v = uv[..., 0], uv[..., 1]
        return (u >= 0) & (u <= W - 1) & (v >= 0) & (v <= H - 1)

    def pixel_rays(self) -> np.ndarray:
        """Ego-frame ray directions with unit camera-frame z, shape ``(H, W, 3)``.

        A point at camera z-depth ``d`` along pixel ``(u, v)`` is
        ``center + d * ray[v, u]``.
        """
        H, W = self.image_size
        v, u = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
        pix = np.stack([u, v, np.ones_like(u)], axis=-1)
        cam_dirs = pix @ np.linalg.inv(self.K).T
        return cam_dirs @ self.R


def cameras_from_rig(rig: RigConfig):
    return [CameraModel.from_config(c, rig.image_size) for c in rig.cameras]


def project_point(cam: CameraModel, P) -> Optional[Tuple[np.ndarray, float]]:
    """Project one ego point. Returns ``(p, d)`` or None when ``d <= DEPTH_EPS``."""
    P = np.asarray(P, dtype=float)
    if P.shape != (3,) or not np.all(np.isfinite(P)):
        raise DomainError(f"expected a finite 3-vector, got {P!r}")
    uv, depth, ok = cam.project(P)
    if not ok:
        return None
    return uv, float(depth)


def voxel_center(grid: GridConfig, idx) -> np.ndarray:
    idx = tuple(int(i) for i in idx)
    if len(idx) != 3 or any(not 0 <= i < n for i, n in zip(idx, grid.counts)):
        raise IndexError(f"voxel index {idx} outside counts {tuple(grid.counts)}")
    return np.asarray(grid.origin, dtype=float) + (np.asarray(idx) + 0.5) * np.asarray(grid.voxel_size)


def _bilinear_weights(shape_hw, uv):
    H, W = shape_hw
    u = np.asarray(uv[..., 0], dtype=float)
    v = np.asarray(uv[..., 1], dtype=float)
    inside = (u >= 0) & (u <= W - 1) & (v >= 0) & (v <= H - 1)
    uc = np.where(inside, u, 0.0)
    vc = np.where(inside, v, 0.0)
    u0 = np.minimum(np.floor(uc).astype(np.int64), max(W - 2, 0))
    v0 = np.minimum(np.floor(vc).astype(np.int64), max(H - 2, 0))
    u1 = np.minimum(u0 + 1, W - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    fu = uc - u0
    fv = vc - v0
    return inside, (u0, u1, v0, v1), (fu, fv)


def bilinear_sample_many(image: np.ndarray, uv: np.ndarray):
    """Sample an ``H x W x C`` map at pixel coordinates ``uv`` of shape ``(N, 2)``.

    Returns ``(values, inside)``; ``values`` is ``(N, C)`` and zero where
    ``inside`` is false.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected an H x W x C map, got shape {image.shape}")
    inside, (u0, u1, v0, v1), (fu, fv) = _bilinear_weights(image.shape[:2], uv)
    fu = fu[:, None]
    fv = fv[:, None]
    out = (
        (1 - fu) * (1 - fv) * image[v0, u0]
        + fu * (1 - fv) * image[v0, u1]
        + (1 - fu) * fv * image[v1, u0]
        + fu * fv * image[v1, u1]
    )
    out = np.where(inside[:, None], out, 0.0)
    return out, inside


def bilinear_sample(image: np.ndarray, p) -> Optional[np.ndarray]:
    """Sample one pixel location; None outside ``[0, W-1] x [0, H-1]``."""
    vals, inside = bilinear_sample_many(image, np.asarray(p, dtype=float).reshape(1, 2))
    return vals[0] if inside[0] else None
