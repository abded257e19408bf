"""Manifest, trace, plan and report file formats.

Manifest is one JSON document; traces and reports are CSV. Floats are written
with ``repr`` so every file round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

from .model import (
    AABB, Choice, Form, GofManifest, LengthMismatch, ParseError, Plan, Pose,
    QualityVariant, ScenarioTraces, SimulationReport, TileEntry, ValidationError,
    VideoManifest, validate_manifest,
)

BW_HEADER = ["gof", "bandwidth_mbps"]
POSE_HEADER = ["gof", "px", "py", "pz", "qw", "qx", "qy", "qz",
               "hfov_deg", "vfov_deg", "near_m", "far_m"]
REPORT_HEADER = ["gof", "ts_s", "td_s", "tu_s", "tb_s"]
COMPARISON_FIXED = ["group_id", "nc", "bw_mbps", "qoe_joint", "qoe_baseline",
                    "util_joint", "util_baseline", "n_raw", "n_compressed"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


# -- manifest -----------------------------------------------------------------

def manifest_to_dict(manifest: VideoManifest) -> dict:
    n, m, h = manifest.grid
    return {
        "fps": manifest.fps,
        "grid": {"n": n, "m": m, "h": h},
        "R": manifest.quality_levels,
        "gofs": [
            {
                "g": gof.gof_index,
                "f": gof.frame_count,
                "tiles": [
                    {
                        "k": t.tile_index,
                        "aabb": {"min": list(t.aabb.min), "max": list(t.aabb.max)},
                        "centroid": list(t.centroid),
                        "variants": [
                            {
                                "r": v.level,
                                "bin_mbits": v.compressed_size_mbits,
                                "ply_mbits": v.raw_size_mbits,
                                "compute_units": v.decode_compute_units,
                                "points": v.point_count,
                            }
                            for v in t.variants
                        ],
                    }
                    for t in gof.tiles
                ],
            }
            for gof in manifest.gofs
        ],
    }


def _vec3(seq, what) -> tuple[float, float, float]:
    if len(seq) != 3:
        raise ParseError(f"{what}: expected 3 components, got {len(seq)}")
    return tuple(float(x) for x in seq)


def manifest_from_dict(doc: dict) -> VideoManifest:
    """Build and validate a manifest from its JSON document."""
    try:
        grid = (int(doc["grid"]["n"]), int(doc["grid"]["m"]), int(doc["grid"]["h"]))
        gofs = []
        for gd in doc["gofs"]:
            g = int(gd["g"])
            tiles = []
            for td in gd["tiles"]:
                k = int(td["k"])
                where = f"gof {g}, tile {k}"
                variants = tuple(
                    QualityVariant(
                        level=int(vd["r"]),
                        compressed_size_mbits=float(vd["bin_mbits"]),
                        raw_size_mbits=float(vd["ply_mbits"]),
                        decode_compute_units=float(vd["compute_units"]),
                        point_count=int(vd["points"]),
                    )
                    for vd in td["variants"]
                )
                tiles.append(TileEntry(
                    tile_index=k,
                    aabb=AABB(_vec3(td["aabb"]["min"], where), _vec3(td["aabb"]["max"], where)),
                    centroid=_vec3(td["centroid"], where),
                    variants=variants,
                ))
            gofs.append(GofManifest(gof_index=g, frame_count=int(gd["f"]), tiles=tuple(tiles)))
        manifest = VideoManifest(
            fps=float(doc["fps"]), grid=grid, quality_levels=int(doc["R"]), gofs=tuple(gofs))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed manifest: {exc!r}") from exc
    validate_manifest(manifest)
    return manifest


def load_manifest(path) -> VideoManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return manifest_from_dict(doc)


def save_manifest(manifest: VideoManifest, path) -> None:
    write_text_atomic(path, json.dumps(manifest_to_dict(manifest), indent=1) + "\n")


# -- traces -------------------------------------------------------------------

def _read_csv(path, header: list[str]) -> list[list[str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or [c.strip() for c in rows[0]] != header:
        raise ParseError(f"{path}: expected header {','.join(header)}")
    body = rows[1:]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
    return body


def _check_gof_column(path, rows, expected_g: int) -> None:
    if len(rows) != expected_g:
        raise LengthMismatch(expected_g, len(rows), f"rows in {path}")
    for i, row in enumerate(rows, start=1):
        try:
            g = int(row[0])
        except ValueError as exc:
            raise ParseError(f"{path}: bad gof index {row[0]!r}") from exc
        if g != i:
            raise ValidationError(f"{path}: gof {g} found where gof {i} expected")


def load_traces(bw_path, pose_path, expected_g: int) -> ScenarioTraces:
    bw_rows = _read_csv(bw_path, BW_HEADER)
    pose_rows = _read_csv(pose_path, POSE_HEADER)
    _check_gof_column(bw_path, bw_rows, expected_g)
    _check_gof_column(pose_path, pose_rows, expected_g)
    try:
        bw = tuple(float(r[1]) for r in bw_rows)
        poses = []
        for r in pose_rows:
            x = [float(v) for v in r[1:]]
            poses.append(Pose(position=tuple(x[0:3]), orientation=tuple(x[3:7]),
                              hfov_deg=x[7], vfov_deg=x[8], near_m=x[9], far_m=x[10]))
    except ValueError as exc:
        raise ParseError(f"non-numeric trace value: {exc}") from exc
    return ScenarioTraces(bandwidth_mbps=bw, poses=tuple(poses))


def save_traces(traces: ScenarioTraces, bw_path, pose_path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BW_HEADER)
    for g, bw in enumerate(traces.bandwidth_mbps, start=1):
        w.writerow([g, _fmt(bw)])
    write_text_atomic(bw_path, buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POSE_HEADER)
    for g, p in enumerate(traces.poses, start=1):
        w.writerow([g, *map(_fmt, p.position), *map(_fmt, p.orientation),
                    _fmt(p.hfov_deg), _fmt(p.vfov_deg), _fmt(p.near_m), _fmt(p.far_m)])
    write_text_atomic(pose_path, buf.getvalue())


# -- report -------------------------------------------------------------------

def report_to_csv(report: SimulationReport) -> str:
    values = [*report.ts, *report.td, *report.tu, *report.tb, report.qoe, report.utilization]
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("report contains non-finite values")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for g in range(report.n_gofs):
        w.writerow([g + 1, _fmt(report.ts[g]), _fmt(report.td[g]),
                    _fmt(report.tu[g]), _fmt(report.tb[g])])
    w.writerow(["qoe", _fmt(report.qoe)])
    w.writerow(["utilization", _fmt(report.utilization)])
    w.writerow(["feasible", int(report.feasible)])
    return buf.getvalue()


def save_report(report: SimulationReport, path) -> None:
    write_text_atomic(path, report_to_csv(report))


def load_report(path) -> SimulationReport:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0] != REPORT_HEADER:
        raise ParseError(f"{path}: expected header {','.join(REPORT_HEADER)}")
    cols = {"ts": [], "td": [], "tu": [], "tb": []}
    trailer = {}
    try:
        for row in rows[1:]:
            if row[0] in ("qoe", "utilization", "feasible"):
                trailer[row[0]] = row[1]
                continue
            for name, v in zip(("ts", "td", "tu", "tb"), row[1:]):
                cols[name].append(float(v))
        return SimulationReport(
            ts=tuple(cols["ts"]), td=tuple(cols["td"]), tu=tuple(cols["tu"]),
            tb=tuple(cols["tb"]), qoe=float(trailer["qoe"]),
            utilization=float(trailer["utilization"]),
            feasible=trailer["feasible"] == "1")
    except (KeyError, ValueError, IndexError) as exc:
        raise ParseError(f"{path}: malformed report: {exc!r}") from exc


# -- plan ---------------------------------------------------------------------

def plan_to_dict(plan: Plan) -> dict:
    return {"choices": [
        {"g": g, "k": k, "form": c.form.value, "level": c.level}
        for (g, k), c in sorted(plan.choices.items())
    ]}


def save_plan(plan: Plan, path, **extra) -> None:
    doc = {**extra, **plan_to_dict(plan)}
    write_text_atomic(path, json.dumps(doc, indent=1) + "\n")


def load_plan(path) -> Plan:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return Plan({
            (int(c["g"]), int(c["k"])): Choice(Form(c["form"]), int(c["level"]))
            for c in doc["choices"]
        })
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed plan: {exc!r}") from exc


# -- comparison ---------------------------------------------------------------

def comparison_header(R: int) -> list[str]:
    return COMPARISON_FIXED + [f"level_{r}" for r in range(1, R + 1)]


def comparison_to_csv(rows: list[dict], R: int) -> str:
    """One row per experiment group; an infeasible scheme shows ``-inf`` QoE
    and ``nan`` utilization."""
    header = comparison_header(R)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        out = []
        for name in header:
            v = row[name]
            out.append(_fmt(v) if isinstance(v, float) else str(int(v)))
        w.writerow(out)
    return buf.getvalue()


def save_comparison(rows: list[dict], R: int, path) -> None:
    write_text_atomic(path, comparison_to_csv(rows, R))


def load_comparison(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0][:len(COMPARISON_FIXED)] != COMPARISON_FIXED:
        raise ParseError(f"{path}: expected header starting {','.join(COMPARISON_FIXED)}")
    header = rows[0]
    levels = header[len(COMPARISON_FIXED):]
    if levels != [f"level_{r}" for r in range(1, len(levels) + 1)]:
        raise ParseError(f"{path}: level columns must be level_1..level_R")
    ints = {"group_id", "nc", "n_raw", "n_compressed", *levels}
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
        try:
            out.append({name: int(v) if name in ints else float(v)
                        for name, v in zip(header, row)})
        except ValueError as exc:
            raise ParseError(f"{path}:{i}: {exc}") from exc
    return out
