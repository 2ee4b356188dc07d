"""Balanced memory allocation for asymmetric multiplexed quantum repeaters.

Round-based Monte Carlo simulation of a repeater whose memories are split
dynamically between its two links, closed-form rate/fidelity bounds, an exact
stationary solver for the mismatch chain, and a two-repeater greedy chain.
"""

from qrbalance.allocation import (
    Allocation,
    CutoffThresholds,
    PolicyKind,
    allocate_equal,
    allocate_optimal,
    allocate_proportional,
    apply_hard_cutoff,
    cutoff_thresholds,
    is_violating,
)
from qrbalance.bounds import BoundsReport, bounds_report
from qrbalance.engine import RepeaterConfig, RoundOutcome, RoundState, SimSummary, run, run_standard, step_round
from qrbalance.fidelity import fidelity_decay, swap_fidelity
from qrbalance.link import LinkParams, make_link, round_time
from qrbalance.oracle import AlphaChain, build_chain, stationary_stats

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AlphaChain",
    "BoundsReport",
    "CutoffThresholds",
    "LinkParams",
    "PolicyKind",
    "RepeaterConfig",
    "RoundOutcome",
    "RoundState",
    "SimSummary",
    "allocate_equal",
    "allocate_optimal",
    "allocate_proportional",
    "apply_hard_cutoff",
    "bounds_report",
    "build_chain",
    "cutoff_thresholds",
    "fidelity_decay",
    "is_violating",
    "make_link",
    "round_time",
    "run",
    "run_standard",
    "stationary_stats",
    "step_round",
    "swap_fidelity",
]
