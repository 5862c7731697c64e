"""
Equity-oblivious comparison algorithms. Each decides every slot on its own.
"""
import logging
import time
from typing import Optional, Sequence

import numpy as np

from app.src.config import (
    ALL_CARBON_WEIGHT,
    ALL_WATER_WEIGHT,
    C2_CARBON_WEIGHT,
    DEFAULT_MU_CARBON,
    DEFAULT_MU_WATER,
)
from app.src.eglb import Schedule
from app.src.metrics import report
from app.src.model import Decision, EquitySpec, FleetSpec, SlotInput
from app.src.slot_solver import BatchPlan, CostWeights, HomogeneousSolver, SlotSolver

logger = logging.getLogger(__name__)


def default_equity(spec: FleetSpec) -> EquitySpec:
    """Weights used to score runs when the caller supplies none."""
    return EquitySpec.uniform(spec.n_datacenters, DEFAULT_MU_CARBON, DEFAULT_MU_WATER)


def schedule_from_plan(name: str, spec: FleetSpec, decisions: Sequence[Decision],
                       plan: BatchPlan, eta: Optional[float] = None,
                       duals: Optional[np.ndarray] = None, aux: Optional[np.ndarray] = None) -> Schedule:
    n = spec.n_datacenters
    return Schedule(
        algorithm=name,
        decisions=tuple(decisions),
        server_energy=plan.energy,
        performance_cost=plan.performance,
        dual_trajectory=np.empty((0, 2 * n)) if duals is None else duals,
        aux_trajectory=np.empty((0, 2, n)) if aux is None else aux,
        mix=plan.mix,
        eta=eta,
    )


def _run(name: str, trace: Sequence[SlotInput], spec: FleetSpec, weights: CostWeights,
         equity: Optional[EquitySpec], solver: Optional[SlotSolver]):
    started = time.perf_counter()
    solver = solver or HomogeneousSolver(spec)
    trace = list(trace)
    batch = solver.prepare(trace)
    plan = solver.plan(batch, weights)
    schedule = schedule_from_plan(name, spec, solver.decisions(batch, plan), plan)
    logger.info(f"{name}: {len(trace)} slots in {time.perf_counter() - started:.2f}s")
    return schedule, report(schedule, trace, spec, equity or default_equity(spec))


def run_energy(trace: Sequence[SlotInput], spec: FleetSpec, equity: Optional[EquitySpec] = None,
               solver: Optional[SlotSolver] = None):
    """GLB-Energy: minimize energy cost only."""
    return _run("energy", trace, spec, CostWeights(1.0, 0.0, 0.0), equity, solver)


def run_carbon(trace: Sequence[SlotInput], spec: FleetSpec, equity: Optional[EquitySpec] = None,
               solver: Optional[SlotSolver] = None):
    """GLB-Carbon: minimize total carbon footprint."""
    return _run("carbon", trace, spec, CostWeights(0.0, 1.0, 0.0), equity, solver)


def run_water(trace: Sequence[SlotInput], spec: FleetSpec, equity: Optional[EquitySpec] = None,
              solver: Optional[SlotSolver] = None):
    """GLB-Water: minimize total water footprint."""
    return _run("water", trace, spec, CostWeights(0.0, 0.0, 1.0), equity, solver)


def run_weighted(trace: Sequence[SlotInput], spec: FleetSpec, w_energy: float, w_carbon: float,
                 w_water: float, equity: Optional[EquitySpec] = None,
                 solver: Optional[SlotSolver] = None, name: str = "weighted"):
    """
    Minimize w_energy * cost + w_carbon * carbon + w_water * water per slot.

    Args:
        trace: Slots
        spec: Fleet description
        w_energy: Weight on energy cost
        w_carbon: USD per ton
        w_water: USD per m3

    Returns:
        (Schedule, RunReport)
    """
    if min(w_energy, w_carbon, w_water) < 0:
        raise ValueError("baseline weights must be nonnegative")
    return _run(name, trace, spec, CostWeights(float(w_energy), float(w_carbon), float(w_water)), equity, solver)


def run_c2(trace: Sequence[SlotInput], spec: FleetSpec, w_carbon: float = C2_CARBON_WEIGHT,
           equity: Optional[EquitySpec] = None, solver: Optional[SlotSolver] = None):
    """GLB-C2: energy cost plus weighted carbon."""
    return run_weighted(trace, spec, 1.0, w_carbon, 0.0, equity, solver, name="c2")


def run_all(trace: Sequence[SlotInput], spec: FleetSpec, w_carbon: float = ALL_CARBON_WEIGHT,
            w_water: float = ALL_WATER_WEIGHT, equity: Optional[EquitySpec] = None,
            solver: Optional[SlotSolver] = None):
    """GLB-All: energy cost plus weighted carbon and water."""
    return run_weighted(trace, spec, 1.0, w_carbon, w_water, equity, solver, name="all")


def run_nearest(trace: Sequence[SlotInput], spec: FleetSpec, equity: Optional[EquitySpec] = None,
                solver: Optional[SlotSolver] = None):
    """
    GLB-Nearest: every gateway sends all its load to its nearest DC.

    Raises:
        CapacityExceededError: a nearest DC cannot absorb its gateways' load
    """
    started = time.perf_counter()
    solver = solver or HomogeneousSolver(spec)
    trace = list(trace)
    batch = solver.prepare(trace)
    rows = spec.nearest_map
    cols = np.arange(spec.n_gateways)
    decisions = []
    for slot in trace:
        x = np.zeros((spec.n_datacenters, spec.n_gateways))
        np.add.at(x, (rows, cols), slot.load)
        decisions.append(Decision(x=x))
    plan = solver.fixed(batch, decisions)
    schedule = schedule_from_plan("nearest", spec, decisions, plan)
    logger.info(f"nearest: {len(trace)} slots in {time.perf_counter() - started:.2f}s")
    return schedule, report(schedule, trace, spec, equity or default_equity(spec))
