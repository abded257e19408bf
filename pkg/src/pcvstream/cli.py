"""Command-line front end: scene generation, PLY tiling, planning, replay and
the joint-versus-compressed comparison over the experiment groups."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as pio
from .allocator import plan_session
from .dynamics import simulate_buffer, utilization
from .model import DeviceProfile, Form, PcvError, ScenarioTraces, VideoManifest
from .partition import read_ply, synthesize_manifest
from .qoe import compute_visibility, compute_weights
from .scenario import (
    EXPERIMENT_GROUPS, SceneConfig, default_compression_model, default_cu1, generate,
    scene_metadata, with_bandwidth,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    manifest_path: Path | None = None
    bw_trace: Path | None = None
    pose_trace: Path | None = None
    groups: list = field(default_factory=lambda: list(EXPERIMENT_GROUPS))  # (id, nc, bw)
    buffer_s: float = 2.0
    cu1: float | None = None
    tau: float = 1.0
    mode: str = "horizon"
    out: Path = Path(".")
    jobs: int = 1

    def validate(self) -> None:
        if not self.groups:
            raise ValueError("device grid is empty")
        for p in (self.manifest_path, self.bw_trace, self.pose_trace):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{p}: no such file")
        given = [p is not None for p in (self.manifest_path, self.bw_trace, self.pose_trace)]
        if any(given) and not all(given):
            raise ValueError("--manifest, --bw-trace and --pose-trace must be given together")


# -- shared loading -------------------------------------------------------------

def _load_inputs(args) -> tuple[VideoManifest, ScenarioTraces]:
    manifest = pio.load_manifest(args.manifest)
    traces = pio.load_traces(args.bw_trace, args.pose_trace, manifest.n_gofs)
    return manifest, traces


def _device(args, manifest, traces, visibility) -> DeviceProfile:
    cu1 = args.cu1
    if cu1 is None:
        cu1 = default_cu1(manifest, visibility, tau=args.tau)
    return DeviceProfile(core_count=args.nc, per_core_capacity=cu1, efficiency=args.tau)


# -- subcommands ------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _scene_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest, traces = generate(cfg)
    pio.save_manifest(manifest, out / "manifest.json")
    pio.save_traces(traces, out / "bandwidth.csv", out / "poses.csv")
    visibility = compute_visibility(manifest, traces)
    cu1 = default_cu1(manifest, visibility, tau=args.tau)
    meta = scene_metadata(cfg, cu1, args.tau)
    pio.write_text_atomic(out / "scenario.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out}/manifest.json ({manifest.n_gofs} GOFs, {manifest.n_tiles} tiles, "
          f"R={manifest.quality_levels}); default cu1 = {cu1!r}")
    return EXIT_OK


def cmd_partition(args) -> int:
    frames = [read_ply(p) for p in args.ply]
    f = args.frames_per_gof
    if len(frames) % f:
        raise ValueError(f"{len(frames)} frames do not split into GOFs of {f}")
    gof_frames = [frames[i:i + f] for i in range(0, len(frames), f)]
    manifest = synthesize_manifest(gof_frames, tuple(args.grid), args.height_axis, args.levels,
                                   default_compression_model(args.levels), args.fps, f)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pio.save_manifest(manifest, out)
    print(f"wrote {out} ({manifest.n_gofs} GOFs, {manifest.n_tiles} tiles)")
    return EXIT_OK


def cmd_plan(args) -> int:
    manifest, traces = _load_inputs(args)
    visibility = compute_visibility(manifest, traces)
    weights = compute_weights(manifest, traces, visibility)
    device = _device(args, manifest, traces, visibility)
    sol = plan_session(manifest, traces, device, args.buffer, mode=args.mode,
                       scheme=args.scheme, visibility=visibility, weights=weights)
    if not sol.optimal:
        print(f"Infeasible: no plan keeps the buffer positive (nodes={sol.node_count})")
        return EXIT_INFEASIBLE
    report = simulate_buffer(manifest, traces, device, sol.plan, args.buffer, visibility, weights)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pio.save_plan(sol.plan, out / "plan.json", status="optimal", mode=args.mode,
                  scheme=args.scheme, objective=sol.objective, bound=sol.bound,
                  nodes=sol.node_count, cu1=device.per_core_capacity, nc=device.core_count,
                  tau=device.efficiency, buffer_s=args.buffer)
    pio.save_report(report, out / "report.csv")
    print(f"Optimal: qoe={report.qoe!r} utilization={report.utilization!r} "
          f"nodes={sol.node_count}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    manifest, traces = _load_inputs(args)
    visibility = compute_visibility(manifest, traces)
    device = _device(args, manifest, traces, visibility)
    plan = pio.load_plan(args.plan)
    report = simulate_buffer(manifest, traces, device, plan, args.buffer, visibility)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "report.csv"
    pio.save_report(report, out)
    print(f"{'feasible' if report.feasible else 'infeasible'}: qoe={report.qoe!r} "
          f"min buffer={min(report.tb, default=args.buffer)!r}")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def _group_row(job) -> dict:
    """Run both schemes for one (NC, Bw) group."""
    (gid, nc, bw), manifest, traces, visibility, cu1, tau, b, mode = job
    traces = with_bandwidth(traces, bw)
    weights = compute_weights(manifest, traces, visibility)
    device = DeviceProfile(core_count=nc, per_core_capacity=cu1, efficiency=tau)
    row = {"group_id": gid, "nc": nc, "bw_mbps": float(bw)}
    for scheme, tag in (("joint", "joint"), ("compressed", "baseline")):
        sol = plan_session(manifest, traces, device, b, mode=mode, scheme=scheme,
                           visibility=visibility, weights=weights)
        if sol.optimal:
            row[f"qoe_{tag}"] = float(sol.objective)
            row[f"util_{tag}"] = float(utilization(manifest, traces, device, sol.plan))
        else:
            row[f"qoe_{tag}"] = -math.inf
            row[f"util_{tag}"] = math.nan
        if scheme == "joint":
            choices = list(sol.plan.choices.values())
            row["n_raw"] = sum(c.form is Form.RAW for c in choices)
            row["n_compressed"] = sum(c.form is Form.COMPRESSED for c in choices)
            hist = np.bincount(np.array([c.level for c in choices], dtype=int), minlength=manifest.quality_levels + 1)
            for r in range(1, manifest.quality_levels + 1):
                row[f"level_{r}"] = int(hist[r])
    return row


def run_compare(cfg: ExperimentConfig) -> tuple[list[dict], int]:
    """Rows in group order plus R; identical inputs give identical rows."""
    cfg.validate()
    if cfg.manifest_path is not None:
        manifest = pio.load_manifest(cfg.manifest_path)
        # poses come from the trace; each group overrides the bandwidth column
        traces = pio.load_traces(cfg.bw_trace, cfg.pose_trace, manifest.n_gofs)
    else:
        manifest, traces = generate(cfg.scene)
    visibility = compute_visibility(manifest, traces)
    cu1 = cfg.cu1 if cfg.cu1 is not None else default_cu1(manifest, visibility, tau=cfg.tau)
    jobs = [(grp, manifest, traces, visibility, cu1, cfg.tau, cfg.buffer_s, cfg.mode)
            for grp in cfg.groups]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_group_row, jobs))
    else:
        rows = [_group_row(j) for j in jobs]
    return rows, manifest.quality_levels


def cmd_compare(args) -> int:
    cfg = ExperimentConfig(
        scene=_scene_from_args(args),
        manifest_path=Path(args.manifest) if args.manifest else None,
        bw_trace=Path(args.bw_trace) if args.bw_trace else None,
        pose_trace=Path(args.pose_trace) if args.pose_trace else None,
        buffer_s=args.buffer, cu1=args.cu1, tau=args.tau, mode=args.mode,
        out=Path(args.out), jobs=args.jobs,
    )
    rows, R = run_compare(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    pio.save_comparison(rows, R, cfg.out / "comparison.csv")
    for row in rows:
        print(f"group {row['group_id']}: NC={row['nc']} Bw={row['bw_mbps']:g} "
              f"qoe joint={row['qoe_joint']:.4f} baseline={row['qoe_baseline']:.4f} "
              f"raw={row['n_raw']} compressed={row['n_compressed']}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _scene_from_args(args) -> SceneConfig:
    base = SceneConfig()
    return SceneConfig(
        seed=args.seed,
        grid=tuple(args.grid) if getattr(args, "grid", None) else base.grid,
        levels=getattr(args, "levels", None) or base.levels,
        initial_buffer_s=getattr(args, "buffer", None) or base.initial_buffer_s,
    )


def _add_device(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nc", type=int, default=2, help="core count (default 2)")
    p.add_argument("--cu1", type=float, default=None,
                   help="per-core capacity per GOF; default derived from the manifest")
    p.add_argument("--tau", type=float, default=1.0, help="multi-core efficiency (default 1)")
    p.add_argument("--buffer", type=float, default=2.0, help="initial buffer in seconds")


def _add_inputs(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--manifest", required=required)
    p.add_argument("--bw-trace", required=required)
    p.add_argument("--pose-trace", required=required)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcvstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a seeded synthetic manifest and traces")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid", type=int, nargs=3, metavar=("N", "M", "H"))
    p.add_argument("--levels", type=int)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--buffer", type=float, default=2.0)
    p.add_argument("--out", default="scene")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("partition", help="tile ASCII PLY frames into a manifest")
    p.add_argument("ply", nargs="+", help="frames in playback order")
    p.add_argument("--frames-per-gof", type=int, default=10)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--grid", type=int, nargs=3, default=[2, 2, 6], metavar=("N", "M", "H"))
    p.add_argument("--height-axis", choices=["X", "Y", "Z"], default="Z")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--out", default="manifest.json")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("plan", help="solve for the QoE-optimal plan")
    _add_inputs(p)
    _add_device(p)
    p.add_argument("--mode", choices=["horizon", "online"], default="horizon")
    p.add_argument("--scheme", choices=["joint", "compressed"], default="joint")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="replay a plan through the buffer model")
    _add_inputs(p)
    _add_device(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="joint vs compressed-only over the experiment groups")
    _add_inputs(p, required=False)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid", type=int, nargs=3, metavar=("N", "M", "H"))
    p.add_argument("--levels", type=int)
    p.add_argument("--cu1", type=float, default=None)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--buffer", type=float, default=2.0)
    p.add_argument("--mode", choices=["horizon", "online"], default="horizon")
    p.add_argument("--jobs", type=int, default=1, help="groups solved in parallel")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PcvError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
