"""Joint quality-level and compressed/raw form selection for tiled point-cloud
video streaming under bandwidth, decode-compute and playback-buffer limits."""

from .allocator import (
    Infeasible, ProblemInstance, Solution, Status, branch_and_bound, brute_force,
    build_problem, plan_session, solve_compressed_only, solve_relaxation,
)
from .dynamics import simulate_buffer, utilization
from .model import (
    AABB, Choice, DeviceProfile, Form, ParseError, PcvError, Plan, Pose, ScenarioTraces,
    SimulationReport, ValidationError, VideoManifest,
)
from .qoe import aggregate_qoe, compute_visibility, compute_weights

__version__ = "0.1.0"

__all__ = [
    "AABB", "Choice", "DeviceProfile", "Form", "Infeasible", "ParseError", "PcvError", "Plan",
    "Pose", "ProblemInstance", "ScenarioTraces", "SimulationReport", "Solution", "Status",
    "ValidationError", "VideoManifest", "aggregate_qoe", "branch_and_bound", "brute_force",
    "build_problem", "compute_visibility", "compute_weights", "plan_session",
    "simulate_buffer", "solve_compressed_only", "solve_relaxation", "utilization",
]
