"""Adaptive trajectory optimisation for a UAV relaying random downlink requests."""

__version__ = "0.1.0"

from .channel import DiscretizationWarning, SystemParams, rate, segment_bits, travel_time
from .sim import SimConfig, SimResult, replicate, simulate
from .smdp import Policy, SmdpState, build_kernel, heuristic_policy, steady_phase_probs
from .solver import DelayReport, SolveResult, policy_delay, report_delay, solve
from .trajectory import CaseTag, DelayCostMatrix, TrajectoryPlan, build_cost_matrix, min_delay_trajectory

__all__ = [
    "CaseTag",
    "DelayCostMatrix",
    "DelayReport",
    "DiscretizationWarning",
    "Policy",
    "SimConfig",
    "SimResult",
    "SmdpState",
    "SolveResult",
    "SystemParams",
    "TrajectoryPlan",
    "build_cost_matrix",
    "build_kernel",
    "heuristic_policy",
    "min_delay_trajectory",
    "policy_delay",
    "rate",
    "replicate",
    "report_delay",
    "segment_bits",
    "simulate",
    "solve",
    "steady_phase_probs",
    "travel_time",
]
