"""Simulation and plan search for fixed-configuration traffic signal corridors."""

from .flow import CorridorState, Network, Trace, simulate, step
from .ingest import emit_facts, parse_baseline, parse_instance
from .model import Configuration, Instance, Junction, Link, LinkId, PhaseId, validate
from .objective import Objective, objective_value, parse_objective
from .pcu import SCALE, pcu_from_decimal, pcu_to_decimal
from .search import (
    SearchProblem,
    SearchResult,
    admissible_bound,
    beam_search,
    branch_and_bound,
    check_plan,
    enumerate_all,
)
from .timeline import SignalPlan, active_state, decision_points, identity_plan, phase_ranges

__version__ = "0.1.0"

__all__ = [
    "SCALE",
    "Configuration",
    "CorridorState",
    "Instance",
    "Junction",
    "Link",
    "LinkId",
    "Network",
    "Objective",
    "PhaseId",
    "SearchProblem",
    "SearchResult",
    "SignalPlan",
    "Trace",
    "active_state",
    "admissible_bound",
    "beam_search",
    "branch_and_bound",
    "check_plan",
    "decision_points",
    "emit_facts",
    "enumerate_all",
    "identity_plan",
    "objective_value",
    "parse_baseline",
    "parse_instance",
    "parse_objective",
    "pcu_from_decimal",
    "pcu_to_decimal",
    "phase_ranges",
    "simulate",
    "step",
    "validate",
]
