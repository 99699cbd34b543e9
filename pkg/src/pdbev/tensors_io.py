"""Dense tensor files and JSON configuration parsing.

Tensor file layout (all little-endian)::

    b"PDBT" | version u32 | rank u32 | dims u32 * rank | f32 * prod(dims)

Tensors are plain numpy arrays in memory. The library computes in float64
and the file format stores float32, so ``write_tensor`` casts on the way out.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ConfigError, TensorFormatError

MAGIC = b"PDBT"
VERSION = 1
MAX_RANK = 16

_ORTHO_TOL = 1e-6
_FOOTPRINT_TOL = 1e-9


# --------------------------------------------------------------------------
# Tensor files
# --------------------------------------------------------------------------


def encode_tensor(t) -> bytes:
    """Serialize an array to the PDBT byte layout."""
    arr = np.ascontiguousarray(np.asarray(t, dtype="<f4"))
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > MAX_RANK:
        raise TensorFormatError("rank", f"rank {arr.ndim} exceeds {MAX_RANK}")
    if any(d <= 0 for d in arr.shape):
        raise TensorFormatError("dims", f"extents must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("data", "tensor contains NaN or Inf")
    header = MAGIC + struct.pack(f"<II{arr.ndim}I", VERSION, arr.ndim, *arr.shape)
    return header + arr.tobytes(order="C")


def decode_tensor(buf: bytes, path=None) -> np.ndarray:
    """Parse PDBT bytes into a float32 array."""
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise TensorFormatError("magic", f"expected {MAGIC!r}, got {bytes(buf[:4])!r}", path)
    if len(buf) < 12:
        raise TensorFormatError("version", "header truncated", path)
    version, rank = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise TensorFormatError("version", f"unsupported version {version}", path)
    if rank == 0 or rank > MAX_RANK:
        raise TensorFormatError("rank", f"rank {rank} outside 1..{MAX_RANK}", path)
    off = 12 + 4 * rank
    if len(buf) < off:
        raise TensorFormatError("dims", f"header declares {rank} dims but is truncated", path)
    dims = struct.unpack_from(f"<{rank}I", buf, 12)
    if any(d == 0 for d in dims):
        raise TensorFormatError("dims", f"zero extent in {list(dims)}", path)
    count = 1
    for d in dims:
        count *= d
    # Python ints do not overflow; this guards against absurd headers.
    if count * 4 > len(buf) - off:
        have = (len(buf) - off) // 4
        raise TensorFormatError(
            "payload", f"truncated: dims {list(dims)} declare {count} values, {have} present", path
        )
    if count * 4 < len(buf) - off:
        raise TensorFormatError("payload", "trailing bytes after declared payload", path)
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
    return data.astype(np.float32).reshape(dims)


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_tensor(path, t) -> None:
    """Write ``t`` to ``path`` in PDBT format.

    The file appears atomically: either the complete file exists afterwards
    or nothing was written. I/O failures are re-raised as ``OSError``
    carrying the path.
    """
    payload = encode_tensor(t)
    try:
        _atomic_write(Path(path), payload)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write tensor: {exc.strerror}", str(path)) from exc


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_tensor(buf, path=str(path))


# --------------------------------------------------------------------------
# Configs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CameraConfig:
    name: str
    K: np.ndarray
    R: np.ndarray
    T: np.ndarray


@dataclass(frozen=True)
class RigConfig:
    """Cameras sharing one image size. Convention: p_cam = R @ p_ego + T."""

    image_size: Tuple[int, int]
    cameras: Tuple[CameraConfig, ...]

    def to_json(self) -> dict:
        return {
            "image_size": [int(v) for v in self.image_size],
            "cameras": [
                {
                    "name": c.name,
                    "K": np.asarray(c.K, dtype=float).tolist(),
                    "R": np.asarray(c.R, dtype=float).tolist(),
                    "T": np.asarray(c.T, dtype=float).tolist(),
                }
                for c in self.cameras
            ],
        }


@dataclass(frozen=True)
class GridConfig:
    """Ego-frame voxel lattice plus the BEV grid covering the same footprint.

    ``origin`` is the minimum corner of the volume, so voxel ``(i, j, k)`` has
    center ``origin + (idx + 0.5) * voxel_size``.
    """

    origin: Tuple[float, float, float]
    counts: Tuple[int, int, int]
    voxel_size: Tuple[float, float, float]
    bev_counts: Tuple[int, int]
    bev_cell: float

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.counts)

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.counts[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * self.voxel_size[axis]

    def centers(self) -> np.ndarray:
        """All voxel centers as an ``(X', Y', Z', 3)`` float64 array."""
        xs, ys, zs = (self.axis_centers(a) for a in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def bev_centers(self) -> np.ndarray:
        """BEV cell centers (x, y) as an ``(X, Y, 2)`` array."""
        xs = self.origin[0] + (np.arange(self.bev_counts[0]) + 0.5) * self.bev_cell
        ys = self.origin[1] + (np.arange(self.bev_counts[1]) + 0.5) * self.bev_cell
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    @property
    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=float)
        return lo, lo + np.asarray(self.counts) * np.asarray(self.voxel_size)

    def to_json(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "counts": [int(v) for v in self.counts],
            "voxel_size": [float(v) for v in self.voxel_size],
            "bev_counts": [int(v) for v in self.bev_counts],
            "bev_cell": float(self.bev_cell),
        }


@dataclass(frozen=True)
class Box:
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]


@dataclass(frozen=True)
class RoadRect:
    min: Tuple[float, float]
    max: Tuple[float, float]

    def contains(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.min[0]) & (x <= self.max[0]) & (y >= self.min[1]) & (y <= self.max[1])


@dataclass(frozen=True)
class Scene:
    """Axis-aligned occluder boxes, road rectangles on z=0, optional ground."""

    occluders: Tuple[Box, ...] = ()
    road_rects: Tuple[RoadRect, ...] = ()
    has_ground: bool = True

    def to_json(self) -> dict:
        return {
            "occluders": [{"min": list(map(float, b.min)), "max": list(map(float, b.max))} for b in self.occluders],
            "road_rects": [{"min": list(map(float, r.min)), "max": list(map(float, r.max))} for r in self.road_rects],
            "ground": bool(self.has_ground),
        }


# --------------------------------------------------------------------------
# Validation helpers
# --------------------------------------------------------------------------


def _get(obj, key, where, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ConfigError(f"{where}{key}" if where else key, "missing field", path)
    return obj[key]


def _vec(value, n, where, path, integer=False) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected {n} numbers", path) from None
    if arr.shape != (n,):
        raise ConfigError(where, f"expected {n} numbers, got shape {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "non-finite value", path)
    if integer and not np.all(arr == np.round(arr)):
        raise ConfigError(where, "expected integers", path)
    return arr


def _mat3(value, where, path) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, "expected a 3x3 matrix", path) from None
    if arr.shape != (3, 3):
        raise ConfigError(where, f"expected a 3x3 matrix, got shape {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "non-finite value", path)
    return arr


def validate_rotation(R, where="R", path=None) -> None:
    R = np.asarray(R, dtype=float)
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ORTHO_TOL:
        raise ConfigError(where, "not orthonormal (R^T R != I)", path)
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ConfigError(where, "determinant is not +1", path)


def validate_intrinsics(K, where="K", path=None) -> None:
    K = np.asarray(K, dtype=float)
    if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
        raise ConfigError(where, "not upper-triangular", path)
    if K[0, 0] <= 0 or K[1, 1] <= 0:
        raise ConfigError(where, "focal lengths must be positive", path)
    if K[2, 2] != 1:
        raise ConfigError(where, "K[2][2] must be 1", path)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"invalid JSON: {exc}", str(path)) from None


# --------------------------------------------------------------------------
# Parsers
# --------------------------------------------------------------------------


def rig_from_dict(doc, path=None) -> RigConfig:
    size = _vec(_get(doc, "image_size", "", path), 2, "image_size", path, integer=True)
    if np.any(size <= 0):
        raise ConfigError("image_size", "extents must be positive", path)
    cams_doc = _get(doc, "cameras", "", path)
    if not isinstance(cams_doc, list) or not cams_doc:
        raise ConfigError("cameras", "expected a non-empty list", path)
    cameras: List[CameraConfig] = []
    seen = set()
    for n, cdoc in enumerate(cams_doc):
        where = f"cameras[{n}]."
        name = _get(cdoc, "name", where, path)
        if not isinstance(name, str) or not name:
            raise ConfigError(f"{where}name", "expected a non-empty string", path)
        if name in seen:
            raise ConfigError(f"{where}name", f"duplicate camera name {name!r}", path)
        seen.add(name)
        K = _mat3(_get(cdoc, "K", where, path), f"{where}K", path)
        R = _mat3(_get(cdoc, "R", where, path), f"{where}R", path)
        T = _vec(_get(cdoc, "T", where, path), 3, f"{where}T", path)
        validate_intrinsics(K, f"{where}K", path)
        validate_rotation(R, f"{where}R", path)
        cameras.append(CameraConfig(name=name, K=K, R=R, T=T))
    return RigConfig(image_size=(int(size[0]), int(size[1])), cameras=tuple(cameras))


def grid_from_dict(doc, path=None) -> GridConfig:
    origin = _vec(_get(doc, "origin", "", path), 3, "origin", path)
    counts = _vec(_get(doc, "counts", "", path), 3, "counts", path, integer=True)
    size = _vec(_get(doc, "voxel_size", "", path), 3, "voxel_size", path)
    bev_counts = _vec(_get(doc, "bev_counts", "", path), 2, "bev_counts", path, integer=True)
    cell = _get(doc, "bev_cell", "", path)
    if not isinstance(cell, (int, float)) or isinstance(cell, bool) or not np.isfinite(cell):
        raise ConfigError("bev_cell", "expected a number", path)
    if np.any(counts <= 0):
        raise ConfigError("counts", "extents must be positive", path)
    if np.any(size <= 0):
        raise ConfigError("voxel_size", "sizes must be positive", path)
    if np.any(bev_counts <= 0):
        raise ConfigError("bev_counts", "extents must be positive", path)
    if cell <= 0:
        raise ConfigError("bev_cell", "must be positive", path)
    for axis, label in ((0, "x"), (1, "y")):
        vol = counts[axis] * size[axis]
        bev = bev_counts[axis] * cell
        if abs(vol - bev) > _FOOTPRINT_TOL * max(1.0, abs(vol)):
            raise ConfigError(
                "bev_counts", f"{label} footprint mismatch: volume {vol} m vs BEV {bev} m", path
            )
    return GridConfig(
        origin=tuple(float(v) for v in origin),
        counts=tuple(int(v) for v in counts),
        voxel_size=tuple(float(v) for v in size),
        bev_counts=tuple(int(v) for v in bev_counts),
        bev_cell=float(cell),
    )


def scene_from_dict(doc, path=None, grid: GridConfig = None) -> Scene:
    """Build a Scene; when ``grid`` is given, road rects must lie in its footprint."""
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "expected a JSON object", path)
    boxes = []
    for n, bdoc in enumerate(doc.get("occluders", [])):
        where = f"occluders[{n}]."
        lo = _vec(_get(bdoc, "min", where, path), 3, f"{where}min", path)
        hi = _vec(_get(bdoc, "max", where, path), 3, f"{where}max", path)
        if np.any(lo >= hi):
            raise ConfigError(f"{where}max", "box min must be < max on every axis", path)
        boxes.append(Box(tuple(lo), tuple(hi)))
    rects = []
    for n, rdoc in enumerate(doc.get("road_rects", [])):
        where = f"road_rects[{n}]."
        lo = _vec(_get(rdoc, "min", where, path), 2, f"{where}min", path)
        hi = _vec(_get(rdoc, "max", where, path), 2, f"{where}max", path)
        if np.any(lo >= hi):
            raise ConfigError(f"{where}max", "rect min must be < max on every axis", path)
        if grid is not None:
            g_lo, g_hi = grid.extent
            if np.any(lo < g_lo[:2] - _FOOTPRINT_TOL) or np.any(hi > g_hi[:2] + _FOOTPRINT_TOL):
                raise ConfigError(f"road_rects[{n}]", "outside the grid footprint", path)
        rects.append(RoadRect(tuple(lo), tuple(hi)))
    ground = doc.get("ground", True)
    if not isinstance(ground, bool):
        raise ConfigError("ground", "expected a boolean", path)
    return Scene(occluders=tuple(boxes), road_rects=tuple(rects), has_ground=ground)


def parse_rig(path) -> RigConfig:
    return rig_from_dict(_load_json(path), path=str(path))


def parse_grid(path) -> GridConfig:
    return grid_from_dict(_load_json(path), path=str(path))


def parse_scene(path, grid: GridConfig = None) -> Scene:
    return scene_from_dict(_load_json(path), path=str(path), grid=grid)


def write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    _atomic_write(Path(path), text.encode("utf-8"))
