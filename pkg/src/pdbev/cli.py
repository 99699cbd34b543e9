"""Command-line pipeline: synth -> lift -> aggregate -> visibility -> eval.

Every stage is a function over an in-memory store of float32 arrays keyed by
file stem. The staged subcommands load their inputs from disk, run one stage
and write its outputs; ``pipeline`` runs all stages over one store. Because
the store holds exactly what the files would, both routes give identical
results.

Exit status: 0 success, 1 computation-domain error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import aggregation, lifting, metrics, synth, visibility
from ._workers import resolve_threads
from .errors import ConfigError, DomainError, TensorFormatError
from .geometry import CameraModel, cameras_from_rig
from .tensors_io import GridConfig, RigConfig, parse_grid, parse_rig, parse_scene, read_tensor, write_tensor

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2

Store = Dict[str, np.ndarray]


@dataclass
class PipelineConfig:
    rig: Optional[str] = None
    grid: Optional[str] = None
    scene: Optional[str] = None
    out: Optional[str] = None
    bias: float = aggregation.DEFAULT_BIAS
    b_gt: float = visibility.DEFAULT_B_GT
    b_small: float = visibility.DEFAULT_B_GT
    tau_vis: float = metrics.DEFAULT_TAU
    tau_occ: float = metrics.DEFAULT_TAU
    thresh: float = 0.5
    lift_mode: str = "parametric"
    agg_mode: str = "occupancy"
    stride: int = 4
    threads: Optional[int] = None

    def validate(self) -> None:
        for name in ("rig", "grid", "scene"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"--{name}", f"no such file: {p}")
        if self.bias < 0:
            raise ConfigError("--bias", "must be >= 0")
        if self.b_gt <= 0 or self.b_small <= 0:
            raise ConfigError("--b-gt/--b-small", "must be > 0")
        if not 0 <= self.tau_occ <= self.tau_vis <= 1:
            raise ConfigError("--tau-vis/--tau-occ", "need 0 <= tau_occ <= tau_vis <= 1")
        if not 0 <= self.thresh <= 1:
            raise ConfigError("--thresh", "must lie in [0, 1]")
        if self.stride < 1:
            raise ConfigError("--stride", "must be >= 1")


def _f32(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float32))


def _need(store: Store, key: str) -> np.ndarray:
    if key not in store:
        raise DomainError(f"missing input tensor {key}.pdbt")
    return store[key]


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------


def stage_synth(scene, rig: RigConfig, grid: GridConfig, cfg: PipelineConfig) -> Store:
    out: Store = {}
    cams = cameras_from_rig(rig)
    dense = []
    for cam in cams:
        hits = synth.raycast(scene, cam)
        depth = hits[0]
        feats = synth.pixel_features(scene, cam, hits)
        out[f"dense_{cam.name}"] = _f32(depth)
        out[f"depth_{cam.name}"] = _f32(synth.delta_params(depth, cfg.b_small))
        out[f"feat_{cam.name}"] = _f32(feats)
        out[f"sem_{cam.name}"] = _f32(feats[..., synth.FEAT_ROAD])
        out[f"sparse_{cam.name}"] = _f32(synth.sparse_samples(depth, cfg.stride))
        dense.append((out[f"dense_{cam.name}"], cam))
    out["gt_seg"] = _f32(synth.render_gt_bev(scene, grid))
    out["gt_vis"] = _f32(visibility.gt_visibility(dense, grid, cfg.b_gt, threads=cfg.threads))
    return out


def stage_lift(store: Store, cams: List[CameraModel], grid: GridConfig, cfg: PipelineConfig) -> Store:
    views = [
        lifting.ViewInput(_need(store, f"feat_{c.name}"), _need(store, f"depth_{c.name}"), c) for c in cams
    ]
    if cfg.lift_mode == "uniform":
        return {"feat3d": _f32(lifting.lift_uniform(views, grid, threads=cfg.threads))}
    feat, lik = lifting.lift(views, grid, threads=cfg.threads)
    return {"feat3d": _f32(feat), "lik3d": _f32(lik)}


def stage_aggregate(store: Store, grid: GridConfig, cfg: PipelineConfig) -> Store:
    feat = _need(store, "feat3d")
    if feat.ndim != 4 or feat.shape[:3] != tuple(grid.counts):
        raise DomainError(f"feat3d shape {feat.shape} does not match grid {tuple(grid.counts)}")
    if cfg.agg_mode == "concat":
        return {"bev_feat": _f32(aggregation.to_bev_grid(aggregation.concat_pillars(feat), grid))}
    occ = aggregation.occupancy(_need(store, "lik3d"), cfg.bias)
    bev = aggregation.to_bev_grid(aggregation.compress(feat, occ), grid)
    return {"occ3d": _f32(occ), "bev_feat": _f32(bev)}


def stage_visibility(store: Store, cams: List[CameraModel], grid: GridConfig, cfg: PipelineConfig, source="params") -> Store:
    if source == "dense":
        views = [(_need(store, f"dense_{c.name}"), c) for c in cams]
        vis = visibility.gt_visibility(views, grid, cfg.b_gt, threads=cfg.threads)
    else:
        views = [(_need(store, f"depth_{c.name}"), c) for c in cams]
        vis = visibility.visibility_bev(visibility.visibility_volume(views, grid, threads=cfg.threads), grid)
    return {"vis_bev": _f32(vis)}


def prediction_from(pred: np.ndarray, channel: int, norm_channel: int) -> np.ndarray:
    """Turn a BEV map into a soft mask: a plain ``X x Y`` map passes through."""
    pred = np.asarray(pred, dtype=float)
    if pred.ndim == 2:
        return pred
    if pred.ndim != 3:
        raise DomainError(f"prediction must be X x Y or X x Y x C, got {pred.shape}")
    C = pred.shape[2]
    if not 0 <= channel < C or norm_channel >= C:
        raise DomainError(f"channel {channel}/{norm_channel} out of range for {C} channels")
    if norm_channel < 0:
        return pred[..., channel]
    return synth.decode_ratio(pred, channel, norm_channel)


def stage_eval(pred, gt, vis, cfg: PipelineConfig, channel=synth.FEAT_ROAD, norm_channel=synth.FEAT_ONE) -> dict:
    mask = prediction_from(pred, channel, norm_channel)
    report = metrics.visibility_iou(mask, gt, vis, cfg.tau_vis, cfg.tau_occ, cfg.thresh)
    return report.to_json()


# --------------------------------------------------------------------------
# File plumbing
# --------------------------------------------------------------------------


def _load(directory, names) -> Store:
    store: Store = {}
    for name in names:
        path = Path(directory) / f"{name}.pdbt"
        if path.is_file():
            store[name] = read_tensor(path)
    return store


def _save(directory, store: Store) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(store):
        write_tensor(out / f"{name}.pdbt", store[name])


def _emit(report: dict) -> None:
    sys.stdout.write(json.dumps(report, indent=2) + "\n")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig(
        rig=getattr(args, "rig", None),
        grid=getattr(args, "grid", None),
        scene=getattr(args, "scene", None),
        out=getattr(args, "out", None),
        bias=getattr(args, "bias", aggregation.DEFAULT_BIAS),
        b_gt=getattr(args, "b_gt", visibility.DEFAULT_B_GT),
        b_small=getattr(args, "b_small", visibility.DEFAULT_B_GT),
        tau_vis=metrics.DEFAULT_TAU,
        tau_occ=metrics.DEFAULT_TAU,
        thresh=getattr(args, "thresh", 0.5),
        lift_mode=getattr(args, "lift_mode", "parametric"),
        agg_mode=getattr(args, "mode", None) or getattr(args, "agg_mode", "occupancy"),
        stride=getattr(args, "stride", 4),
        threads=resolve_threads(getattr(args, "threads", None)),
    )
    tau = getattr(args, "tau", None)
    if tau is not None:
        cfg.tau_vis = cfg.tau_occ = tau
    if getattr(args, "tau_vis", None) is not None:
        cfg.tau_vis = args.tau_vis
    if getattr(args, "tau_occ", None) is not None:
        cfg.tau_occ = args.tau_occ
    cfg.validate()
    return cfg


def _rig_grid(cfg):
    rig = parse_rig(cfg.rig)
    grid = parse_grid(cfg.grid)
    return rig, grid, cameras_from_rig(rig)


def cmd_synth(args) -> int:
    cfg = _config(args)
    rig, grid, _ = _rig_grid(cfg)
    scene = parse_scene(cfg.scene, grid)
    _save(cfg.out, stage_synth(scene, rig, grid, cfg))
    return EXIT_OK


def cmd_lift(args) -> int:
    cfg = _config(args)
    _, grid, cams = _rig_grid(cfg)
    names = [f"{k}_{c.name}" for c in cams for k in ("feat", "depth")]
    store = _load(args.in_dir or cfg.out, names)
    _save(cfg.out, stage_lift(store, cams, grid, cfg))
    return EXIT_OK


def cmd_aggregate(args) -> int:
    cfg = _config(args)
    grid = parse_grid(cfg.grid)
    store = _load(args.in_dir or cfg.out, ["feat3d", "lik3d"])
    _save(cfg.out, stage_aggregate(store, grid, cfg))
    return EXIT_OK


def cmd_visibility(args) -> int:
    cfg = _config(args)
    _, grid, cams = _rig_grid(cfg)
    prefix = "dense" if args.source == "dense" else "depth"
    store = _load(args.in_dir or cfg.out, [f"{prefix}_{c.name}" for c in cams])
    _save(cfg.out, stage_visibility(store, cams, grid, cfg, args.source))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    pred = read_tensor(args.pred)
    gt = read_tensor(args.gt)
    vis = read_tensor(args.vis) if args.vis else np.ones(gt.shape)
    _emit(stage_eval(pred, gt, vis, cfg, args.channel, args.norm_channel))
    return EXIT_OK


def run_pipeline(cfg: PipelineConfig):
    """Run every stage in memory. Returns ``(store, report)``; writes nothing."""
    rig, grid, cams = _rig_grid(cfg)
    scene = parse_scene(cfg.scene, grid)
    store = stage_synth(scene, rig, grid, cfg)
    store.update(stage_lift(store, cams, grid, cfg))
    store.update(stage_aggregate(store, grid, cfg))
    store.update(stage_visibility(store, cams, grid, cfg))
    report = stage_eval(store["bev_feat"], store["gt_seg"], store["gt_vis"], cfg)
    return store, report


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    store, report = run_pipeline(cfg)
    if cfg.out:
        _save(cfg.out, store)
    _emit(report)
    return EXIT_OK


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _unit(text):
    value = float(text)
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdbev", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, rig=True, grid=True, out=True):
        if rig:
            p.add_argument("--rig", required=True, help="rig.json")
        if grid:
            p.add_argument("--grid", required=True, help="grid.json")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker cap (default: $PDBEV_THREADS or 1)")

    def staged_input(p):
        p.add_argument("--in", dest="in_dir", default=None, help="input directory (default: --out)")

    p = sub.add_parser("synth", help="ray-cast a scene into per-view depth, params, features and BEV labels")
    common(p)
    p.add_argument("--scene", required=True, help="scene.json")
    p.add_argument("--b-small", type=float, default=visibility.DEFAULT_B_GT, help="diversity of the delta-like params")
    p.add_argument("--b-gt", type=float, default=visibility.DEFAULT_B_GT, help="diversity for ground-truth visibility")
    p.add_argument("--stride", type=int, default=4, help="pixel stride of the sparse depth samples")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("lift", help="lift per-view features into the voxel volume")
    common(p)
    staged_input(p)
    p.add_argument("--mode", dest="lift_mode", choices=["parametric", "uniform"], default="parametric")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("aggregate", help="collapse the voxel volume to BEV")
    common(p, rig=False)
    staged_input(p)
    p.add_argument("--bias", type=float, default=aggregation.DEFAULT_BIAS, help="occupancy bias b_o")
    p.add_argument("--mode", choices=["occupancy", "concat"], default="occupancy")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("visibility", help="BEV visibility map from depth params or dense depth")
    common(p)
    staged_input(p)
    p.add_argument("--source", choices=["params", "dense"], default="params")
    p.add_argument("--b-gt", type=float, default=visibility.DEFAULT_B_GT, help="diversity used with --source dense")
    p.set_defaults(func=cmd_visibility)

    p = sub.add_parser("eval", help="visibility-aware IoU report (JSON on stdout)")
    p.add_argument("--pred", required=True, help="X x Y mask or X x Y x C BEV features")
    p.add_argument("--gt", required=True, help="X x Y ground-truth mask")
    p.add_argument("--vis", default=None, help="X x Y visibility map (default: all visible)")
    p.add_argument("--channel", type=int, default=synth.FEAT_ROAD, help="feature channel holding the class score")
    p.add_argument("--norm-channel", type=int, default=synth.FEAT_ONE, help="normalizing channel, -1 for none")
    _eval_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run synth, lift, aggregate, visibility and eval in one process")
    p.add_argument("--rig", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", default=None, help="write all artifacts here (optional)")
    p.add_argument("--bias", type=float, default=aggregation.DEFAULT_BIAS)
    p.add_argument("--b-gt", type=float, default=visibility.DEFAULT_B_GT)
    p.add_argument("--b-small", type=float, default=visibility.DEFAULT_B_GT)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--lift-mode", choices=["parametric", "uniform"], default="parametric")
    p.add_argument("--mode", choices=["occupancy", "concat"], default="occupancy")
    _eval_flags(p)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _eval_flags(p):
    p.add_argument("--tau", type=_unit, default=None, help="set both visibility thresholds")
    p.add_argument("--tau-vis", type=_unit, default=None)
    p.add_argument("--tau-occ", type=_unit, default=None)
    p.add_argument("--thresh", type=_unit, default=0.5, help="binarization threshold for predictions")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TensorFormatError, OSError) as exc:
        print(f"pdbev: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"pdbev: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
