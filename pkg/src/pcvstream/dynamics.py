"""Transmit/decode times, the playback-buffer recursion and utilization."""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    EPS_BUF, DeviceProfile, Form, GofManifest, Plan, ScenarioTraces, SimulationReport,
    VideoManifest,
)
from .qoe import (
    DegenerateQoE, VisibilityMatrix, WeightSet, aggregate_qoe, check_plan, compute_visibility,
    compute_weights,
)


@dataclass(frozen=True)
class ResourceLedger:
    tiles_compute: float
    system_compute: float
    tiles_bits: float
    system_bits: float

    @property
    def utilization(self) -> float:
        return 0.5 * (self.tiles_compute / self.system_compute + self.tiles_bits / self.system_bits)


# The three helpers below are the single source of the time arithmetic; the
# allocator and its enumeration oracle call them (or replay them elementwise)
# so feasibility verdicts agree bit-for-bit with simulate_buffer.

def gof_sums(gof: GofManifest, choices_g) -> tuple[float, float]:
    """(Mbits sent, compute units decoded) for one GOF, accumulated in tile order."""
    bits = 0.0
    compute = 0.0
    for k, c in sorted(choices_g, key=lambda kc: kc[0]):
        v = gof.tiles[k - 1].variant(c.level)
        if c.form is Form.COMPRESSED:
            bits = bits + v.compressed_size_mbits
            compute = compute + v.decode_compute_units
        else:
            bits = bits + v.raw_size_mbits
    return bits, compute


def time_terms(bits: float, compute: float, bw_mbps: float, gof_s: float, capacity: float):
    """(Ts, Td, Tu) from the per-GOF sums."""
    ts = bits / bw_mbps
    td = gof_s * compute / capacity
    return ts, td, ts + td


def buffer_step(tb_prev: float, tu: float, gof_s: float) -> float:
    return tb_prev - tu + gof_s


def decode_time(gof: GofManifest, plan_g, device: DeviceProfile, fps: float) -> float:
    """Td for one GOF; ``plan_g`` is an iterable of (k, Choice)."""
    _, compute = gof_sums(gof, plan_g)
    return (gof.frame_count / fps) * compute / device.capacity


def transmit_time(gof: GofManifest, plan_g, bw_mbps: float) -> float:
    bits, _ = gof_sums(gof, plan_g)
    return bits / bw_mbps


def trajectory(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
               plan: Plan, initial_buffer_s: float):
    """Per-GOF lists (ts, td, tu, tb) from the literal recursion."""
    ti = manifest.gof_duration
    cap = device.capacity
    ts_l, td_l, tu_l, tb_l = [], [], [], []
    tb = initial_buffer_s
    for gof, bw in zip(manifest.gofs, traces.bandwidth_mbps):
        bits, compute = gof_sums(gof, plan.for_gof(gof.gof_index))
        ts, td, tu = time_terms(bits, compute, bw, ti, cap)
        tb = buffer_step(tb, tu, ti)
        ts_l.append(ts)
        td_l.append(td)
        tu_l.append(tu)
        tb_l.append(tb)
    return ts_l, td_l, tu_l, tb_l


def resource_ledger(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
                    plan: Plan) -> ResourceLedger:
    ti = manifest.gof_duration
    tiles_c = 0.0
    tiles_b = 0.0
    for gof in manifest.gofs:
        bits, compute = gof_sums(gof, plan.for_gof(gof.gof_index))
        tiles_b += bits
        tiles_c += compute
    return ResourceLedger(
        tiles_compute=tiles_c,
        system_compute=manifest.n_gofs * device.capacity,
        tiles_bits=tiles_b,
        system_bits=sum(bw * ti for bw in traces.bandwidth_mbps),
    )


def utilization(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
                plan: Plan) -> float:
    return resource_ledger(manifest, traces, device, plan).utilization


def simulate_buffer(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
                    plan: Plan, initial_buffer_s: float,
                    visibility: VisibilityMatrix | None = None,
                    weights: WeightSet | None = None) -> SimulationReport:
    """Replay ``plan`` through the buffer recursion.

    An infeasible trajectory is reported, not raised. A scene with nothing
    weighted in view reports QoE 0.
    """
    if not initial_buffer_s > 0:
        raise ValueError(f"initial buffer must be > 0, got {initial_buffer_s}")
    if visibility is None:
        visibility = compute_visibility(manifest, traces)
    if weights is None:
        weights = compute_weights(manifest, traces, visibility)
    check_plan(manifest, visibility, plan)
    ts, td, tu, tb = trajectory(manifest, traces, device, plan, initial_buffer_s)
    try:
        qoe = aggregate_qoe(manifest, weights, visibility, plan)
    except DegenerateQoE:
        qoe = 0.0
    return SimulationReport(
        ts=tuple(ts), td=tuple(td), tu=tuple(tu), tb=tuple(tb), qoe=qoe,
        utilization=utilization(manifest, traces, device, plan),
        feasible=all(x >= EPS_BUF for x in tb),
    )
