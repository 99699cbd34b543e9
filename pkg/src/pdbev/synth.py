"""Synthetic ground truth: analytic scenes, camera rigs and ray casting.

Scenes are axis-aligned boxes plus an optional ground plane at z=0, so every
ray intersection is closed-form. Depth is camera-frame z-depth, matching the
``d`` of the projection equation.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .depth_model import make_param_map
from .errors import DomainError
from .geometry import DEPTH_EPS, CameraModel
from .tensors_io import Box, CameraConfig, GridConfig, RigConfig, RoadRect, Scene

__all__ = [
    "Box",
    "RoadRect",
    "Scene",
    "FAR_DEPTH",
    "raycast",
    "raycast_depth",
    "delta_params",
    "render_gt_bev",
    "make_rig",
    "pixel_features",
    "sparse_samples",
    "decode_ratio",
    "geometric_visibility",
]

FAR_DEPTH = 200.0

HIT_NONE, HIT_GROUND, HIT_BOX = 0, 1, 2

# Channel layout of the synthetic pixel features.
FEAT_U, FEAT_V, FEAT_ROAD, FEAT_ONE = 0, 1, 2, 3
FEATURE_CHANNELS = 4


def _slab(origin, dirs, box: Box):
    """Entry/exit ray parameters of ``origin + t * dirs`` against ``box``."""
    lo = np.asarray(box.min, dtype=float)
    hi = np.asarray(box.max, dtype=float)
    o = np.broadcast_to(origin, dirs.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - o) / dirs
        t2 = (hi - o) / dirs
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    # A zero direction component never crosses that slab: all-or-nothing.
    parallel = dirs == 0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    return tmin.max(axis=-1), tmax.min(axis=-1)


def raycast(scene: Scene, cam: CameraModel, far_depth: float = FAR_DEPTH):
    """Cast one ray per pixel.

    Returns:
        ``(depth, kind, points)``: ``H x W`` z-depth (``far_depth`` on a
        miss), ``H x W`` hit kind (``HIT_NONE``/``HIT_GROUND``/``HIT_BOX``)
        and ``H x W x 3`` ego-frame hit points.
    """
    dirs = cam.pixel_rays()
    origin = cam.center
    depth = np.full(dirs.shape[:2], np.inf)
    kind = np.full(dirs.shape[:2], HIT_NONE, dtype=np.int8)
    for box in scene.occluders:
        t_in, t_out = _slab(origin, dirs, box)
        hit = (t_in <= t_out) & (t_out > DEPTH_EPS)
        t = np.where(t_in > DEPTH_EPS, t_in, DEPTH_EPS)
        closer = hit & (t < depth)
        depth = np.where(closer, t, depth)
        kind = np.where(closer, HIT_BOX, kind)
    if scene.has_ground:
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dz != 0, -origin[2] / dz, np.inf)
        closer = (t > DEPTH_EPS) & (t < depth)
        depth = np.where(closer, t, depth)
        kind = np.where(closer, HIT_GROUND, kind)
    miss = ~np.isfinite(depth) | (depth > far_depth)
    depth = np.where(miss, far_depth, depth)
    kind = np.where(miss, HIT_NONE, kind).astype(np.int8)
    points = origin + depth[..., None] * dirs
    return depth, kind, points


def raycast_depth(scene: Scene, cam: CameraModel, H=None, W=None, far_depth: float = FAR_DEPTH) -> np.ndarray:
    if (H, W) != (None, None) and (H, W) != tuple(cam.image_size):
        raise DomainError(f"requested size {(H, W)} differs from camera image size {cam.image_size}")
    return raycast(scene, cam, far_depth)[0]


def delta_params(depth, b_small: float) -> np.ndarray:
    """Sharp Laplacian parameters centered on a known depth map (``b`` clamped to ``B_MIN``)."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise DomainError("depth must be positive everywhere")
    return make_param_map(depth, b_small)


def road_mask_xy(scene: Scene, xy: np.ndarray) -> np.ndarray:
    mask = np.zeros(xy.shape[:-1], dtype=bool)
    for rect in scene.road_rects:
        mask |= rect.contains(xy)
    return mask


def render_gt_bev(scene: Scene, grid: GridConfig) -> np.ndarray:
    """``X x Y`` mask: 1 where the BEV cell center lies inside a road rect."""
    return road_mask_xy(scene, grid.bev_centers()).astype(float)


def make_rig(n: int, fov_deg: float, H: int, W: int, height_m: float) -> RigConfig:
    """``n`` cameras at ``height_m``, yawed by ``360/n`` degrees, camera 0 facing +Y.

    ``fov_deg`` is the horizontal field of view spanned by the image width.
    """
    if n < 1:
        raise DomainError("a rig needs at least one camera")
    f = (W / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    K = np.array([[f, 0.0, (W - 1) / 2.0], [0.0, f, (H - 1) / 2.0], [0.0, 0.0, 1.0]])
    center = np.array([0.0, 0.0, float(height_m)])
    cams = []
    for k in range(n):
        yaw = 2.0 * math.pi * k / n
        c, s = math.cos(yaw), math.sin(yaw)
        right = [c, s, 0.0]
        down = [0.0, 0.0, -1.0]
        forward = [-s, c, 0.0]
        R = np.array([right, down, forward])
        cams.append(CameraConfig(name=f"cam{k}", K=K.copy(), R=R, T=-R @ center))
    return RigConfig(image_size=(int(H), int(W)), cameras=tuple(cams))


def pixel_features(scene: Scene, cam: CameraModel, hits=None) -> np.ndarray:
    """``H x W x 4`` features: pixel column, pixel row, road indicator, constant 1.

    The road channel is 1 where the pixel's first hit is ground inside a
    road rect. The constant channel lets a consumer renormalize lifted
    features by the accumulated weight.
    """
    depth, kind, points = hits if hits is not None else raycast(scene, cam)
    H, W = depth.shape
    v, u = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    road = (kind == HIT_GROUND) & road_mask_xy(scene, points[..., :2])
    return np.stack([u, v, road.astype(float), np.ones_like(u)], axis=-1)


def sparse_samples(depth: np.ndarray, stride: int = 4) -> np.ndarray:
    """Subsample a dense depth map into ``N x 3`` rows of (row, col, depth).

    Max-range returns are kept so the set is never empty.
    """
    H, W = depth.shape
    rows, cols = np.meshgrid(np.arange(0, H, stride), np.arange(0, W, stride), indexing="ij")
    rows = rows.ravel()
    cols = cols.ravel()
    return np.stack([rows, cols, depth[rows, cols]], axis=-1).astype(float)


def decode_ratio(bev_feat: np.ndarray, channel: int, norm_channel: int) -> np.ndarray:
    """``bev_feat[..., channel] / bev_feat[..., norm_channel]``, 0 where the norm is 0."""
    num = np.asarray(bev_feat[..., channel], dtype=float)
    den = np.asarray(bev_feat[..., norm_channel], dtype=float)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def geometric_visibility(scene: Scene, cams: Sequence[CameraModel], points: np.ndarray) -> np.ndarray:
    """Exact visibility of ego points: in some camera's image with a clear segment to it.

    A point is seen when it projects inside the image in front of the camera
    and the open segment from the camera center does not cross an occluder
    or the ground plane. Boxes are treated as open sets: a segment that only
    grazes a face, edge or corner is not blocked.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 3)
    seen = np.zeros(flat.shape[0], dtype=bool)
    for cam in cams:
        uv, _, ok = cam.project(flat)
        ok &= cam.in_image(uv)
        origin = cam.center
        seg = flat - origin
        blocked = np.zeros_like(ok)
        for box in scene.occluders:
            t_in, t_out = _slab(origin, seg, box)
            blocked |= (t_in < t_out) & (t_out > 0) & (t_in < 1)
        if scene.has_ground:
            blocked |= (flat[:, 2] < 0) != (origin[2] < 0)
        seen |= ok & ~blocked
    return seen.reshape(pts.shape[:-1])
