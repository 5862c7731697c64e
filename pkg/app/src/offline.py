"""
eGLB-Off and eGLB-MPC: the equity-aware problem solved with hindsight.

The footprint averages are split off into auxiliary variables and priced with
multipliers. For fixed multipliers the problem decomposes into one routing
problem per slot plus the auxiliary step, which gives the dual function and
a supergradient. Projected supergradient ascent with a/sqrt(k) steps drives
the dual up; primal candidates are the per-iterate routings and their running
(ergodic) average. The gap between the best primal and the best dual bounds
the suboptimality of what is returned.
"""
import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from app.src.auxstep import minimize_box
from app.src.config import DEFAULT_MPC_WINDOW, MPC_MAX_ITERS, OFFLINE_MAX_ITERS, OFFLINE_TOL
from app.src.eglb import Schedule
from app.src.errors import ConfigurationError, InfeasibleError
from app.src.metrics import report
from app.src.model import Decision, EquitySpec, FleetSpec, NumericModel, SlotInput
from app.src.slot_solver import Batch, BatchPlan, CostWeights, HomogeneousSolver, SlotSolver
from app.src.transport import northwest_corner, route_by_priority

logger = logging.getLogger(__name__)


class OfflineSolution(NumericModel):
    """Result of one dual-ascent solve (a full trace or an MPC window)."""
    decisions: Tuple[Decision, ...]
    objective: float = Field(..., description="Objective of the returned decisions")
    gap_estimate: float = Field(..., ge=0, description="Best primal minus best dual")
    dual_bound: float
    iterations: int
    converged: bool
    kappa: np.ndarray = Field(..., description="Multipliers at the best dual bound (carbon block then water block)")
    server_energy: np.ndarray
    performance_cost: np.ndarray
    mix: Optional[np.ndarray] = None
    primal_history: np.ndarray
    dual_history: np.ndarray


def _average_plan(sums: dict, count: int) -> BatchPlan:
    mix = sums["mix"] / count if sums["mix"] is not None else None
    return BatchPlan(
        loads=sums["loads"] / count,
        energy=sums["energy"] / count,
        performance=sums["performance"] / count,
        mix=mix,
    )


def _repair(solver: SlotSolver, batch: Batch, plan: BatchPlan) -> Tuple[List[Decision], BatchPlan]:
    """Route each slot onto the averaged per-DC loads."""
    spec = solver.spec
    n = spec.n_datacenters
    decisions = []
    for k, slot in enumerate(batch.slots):
        target = plan.loads[k]
        if spec.fully_flexible:
            x = northwest_corner(np.arange(n), target, slot.load)
        else:
            capacity = target * (1 + 1e-9) + 1e-12
            x = route_by_priority(np.arange(n), capacity, slot.load, spec.connectivity)
        decisions.append(Decision(x=x))
    if plan.mix is None:
        plan = solver.realize(batch, np.stack([d.load for d in decisions]), CostWeights())
    return decisions, plan


def dual_ascent(solver: SlotSolver, batch: Batch, equity: EquitySpec,
                carried_carbon: np.ndarray, carried_water: np.ndarray, horizon: int,
                tol: float, max_iters: int, kappa_init: Optional[np.ndarray] = None) -> OfflineSolution:
    """
    Maximize the dual of the windowed equity-aware problem.

    Footprint averages are (carried + window footprints) / horizon.

    Args:
        solver: Primal step
        batch: Window slots
        equity: Equity weights
        carried_carbon: Raw carbon already emitted before the window (ton per DC)
        carried_water: Raw water already consumed before the window (m3 per DC)
        horizon: Normalizing slot count (elapsed + window length)
        tol: Relative gap tolerance
        max_iters: Iteration cap
        kappa_init: Warm start for the multipliers

    Returns:
        OfflineSolution with the best primal candidate
    """
    spec = solver.spec
    n = spec.n_datacenters
    if max_iters < 1:
        raise ConfigurationError("max_iters must be at least 1")
    if tol < 0:
        raise ConfigurationError("tol must be nonnegative")
    scale_c, scale_w = equity.carbon_scale(spec), equity.water_scale(spec)
    theta_c, theta_w = equity.carbon_slope, equity.water_slope
    mu_c, mu_w = equity.mu_carbon, equity.mu_water
    carried_c = np.asarray(carried_carbon, dtype=float) * scale_c
    carried_w = np.asarray(carried_water, dtype=float) * scale_w

    peak = solver.max_server_energy()
    zbar_c = (carried_c + (batch.carbon_factor * peak * scale_c).sum(axis=0)) / horizon
    zbar_w = (carried_w + (batch.water_factor * peak * scale_w).sum(axis=0)) / horizon

    kappa = np.zeros(2 * n) if kappa_init is None else np.array(kappa_init, dtype=float)
    kappa_c, kappa_w = kappa[:n].copy(), kappa[n:].copy()
    # A block without weight carries no constraint worth pricing.
    if mu_c == 0:
        kappa_c[:] = 0.0
    if mu_w == 0:
        kappa_w[:] = 0.0

    def evaluate(plan: BatchPlan) -> Tuple[float, np.ndarray, np.ndarray, float]:
        operational = float((plan.energy_cost(batch) + plan.performance).sum()) / horizon
        fc, fw = plan.footprints(batch, scale_c, scale_w)
        avg_c = (carried_c + fc.sum(axis=0)) / horizon
        avg_w = (carried_w + fw.sum(axis=0)) / horizon
        primal = operational + mu_c * float(np.max(theta_c * avg_c)) + mu_w * float(np.max(theta_w * avg_w))
        return primal, avg_c, avg_w, operational

    best_primal, best_dual = np.inf, -np.inf
    best_kappa = np.concatenate((kappa_c, kappa_w))
    best_plan, best_is_average = None, False
    sums = None
    step_c = step_w = None
    primal_history, dual_history = [], []
    converged = False
    iterations = 0

    for k in range(1, max_iters + 1):
        iterations = k
        plan = solver.plan(batch, CostWeights(1.0, kappa_c * scale_c, kappa_w * scale_w))
        primal, avg_c, avg_w, operational = evaluate(plan)
        z_c, v_c = minimize_box(mu_c, theta_c, kappa_c, zbar_c)
        z_w, v_w = minimize_box(mu_w, theta_w, kappa_w, zbar_w)
        dual = operational + float(kappa_c @ avg_c) + float(kappa_w @ avg_w) + v_c + v_w
        primal_history.append(primal)
        dual_history.append(dual)
        if dual > best_dual:
            best_dual, best_kappa = dual, np.concatenate((kappa_c, kappa_w))
        if primal < best_primal:
            best_primal, best_plan, best_is_average = primal, plan, False

        if sums is None:
            sums = {"loads": plan.loads.copy(), "energy": plan.energy.copy(),
                    "performance": plan.performance.copy(),
                    "mix": None if plan.mix is None else plan.mix.copy()}
        else:
            sums["loads"] += plan.loads
            sums["energy"] += plan.energy
            sums["performance"] += plan.performance
            if plan.mix is not None:
                sums["mix"] += plan.mix
        if k > 1:
            average = _average_plan(sums, k)
            avg_primal = evaluate(average)[0]
            if avg_primal < best_primal:
                best_primal, best_plan, best_is_average = avg_primal, average, True

        if best_primal - best_dual <= tol * max(1.0, abs(best_primal)):
            converged = True
            break

        grad_c, grad_w = avg_c - z_c, avg_w - z_w
        if mu_c > 0:
            if step_c is None and np.linalg.norm(grad_c) > 0:
                step_c = mu_c * float(theta_c.max()) / float(np.linalg.norm(grad_c))
            if step_c is not None:
                kappa_c = np.maximum(kappa_c + step_c / np.sqrt(k) * grad_c, 0.0)
        if mu_w > 0:
            if step_w is None and np.linalg.norm(grad_w) > 0:
                step_w = mu_w * float(theta_w.max()) / float(np.linalg.norm(grad_w))
            if step_w is not None:
                kappa_w = np.maximum(kappa_w + step_w / np.sqrt(k) * grad_w, 0.0)

    if best_is_average:
        try:
            decisions, best_plan = _repair(solver, batch, best_plan)
            best_primal = evaluate(best_plan)[0]
        except InfeasibleError:
            logger.warning("Averaged plan could not be routed; keeping the best iterate")
            best_plan = solver.plan(batch, CostWeights(1.0, kappa_c * scale_c, kappa_w * scale_w))
            best_primal = evaluate(best_plan)[0]
            decisions = solver.decisions(batch, best_plan)
    else:
        decisions = solver.decisions(batch, best_plan)

    gap = max(best_primal - best_dual, 0.0)
    if not converged:
        logger.warning(f"Dual ascent stopped after {iterations} iterations with relative gap "
                       f"{gap / max(1.0, abs(best_primal)):.3g} (tolerance {tol:g})")
    return OfflineSolution(
        decisions=tuple(decisions),
        objective=best_primal,
        gap_estimate=gap,
        dual_bound=best_dual,
        iterations=iterations,
        converged=converged,
        kappa=best_kappa,
        server_energy=best_plan.energy,
        performance_cost=best_plan.performance,
        mix=best_plan.mix,
        primal_history=np.asarray(primal_history),
        dual_history=np.asarray(dual_history),
    )


def solve_offline(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                  tol: float = OFFLINE_TOL, max_iters: int = OFFLINE_MAX_ITERS,
                  solver: Optional[SlotSolver] = None) -> OfflineSolution:
    """
    Offline optimum of the equity-aware problem over the whole trace.

    Raises:
        InfeasibleError: a slot cannot be routed
    """
    solver = solver or HomogeneousSolver(spec)
    batch = solver.prepare(trace)
    n = spec.n_datacenters
    started = time.perf_counter()
    solution = dual_ascent(solver, batch, equity, np.zeros(n), np.zeros(n), len(batch), tol, max_iters)
    logger.info(f"Offline solve: {solution.iterations} iterations in {time.perf_counter() - started:.2f}s, "
                f"gap {solution.gap_estimate:.4g}")
    return solution


def warm_start(history: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
               tol: float = OFFLINE_TOL, max_iters: int = OFFLINE_MAX_ITERS,
               solver: Optional[SlotSolver] = None) -> np.ndarray:
    """
    Initial multipliers for an online run, taken from the offline duals of a past trace.

    The history must describe the same fleet; the returned vector is in the
    units of `equity`, so the online run has to use the same equity spec.
    """
    if len(history) < 1:
        raise ConfigurationError("warm start needs at least one history slot")
    logger.info(f"Warm start from {len(history)} history slots")
    return solve_offline(history, spec, equity, tol, max_iters, solver).kappa


def solve_window(trace_window: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                 carried_carbon: np.ndarray, carried_water: np.ndarray, tol: float = OFFLINE_TOL,
                 elapsed: int = 0, max_iters: int = MPC_MAX_ITERS,
                 kappa_init: Optional[np.ndarray] = None,
                 solver: Optional[SlotSolver] = None) -> OfflineSolution:
    """
    Plan a window given footprints carried over from `elapsed` earlier slots.

    The equity terms see (carried + window footprint) / (elapsed + window length).
    The planned decisions are in the solution's `decisions`.
    """
    if len(trace_window) < 1:
        raise ConfigurationError("window must contain at least one slot")
    solver = solver or HomogeneousSolver(spec)
    batch = solver.prepare(trace_window)
    return dual_ascent(solver, batch, equity, carried_carbon, carried_water,
                       elapsed + len(batch), tol, max_iters, kappa_init)


def _schedule(name: str, decisions, energy, performance, mix) -> Schedule:
    n = decisions[0].x.shape[0]
    return Schedule(
        algorithm=name,
        decisions=tuple(decisions),
        server_energy=np.asarray(energy),
        performance_cost=np.asarray(performance),
        dual_trajectory=np.empty((0, 2 * n)),
        aux_trajectory=np.empty((0, 2, n)),
        mix=None if mix is None else np.asarray(mix),
    )


def run_offline(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                tol: float = OFFLINE_TOL, max_iters: int = OFFLINE_MAX_ITERS,
                solver: Optional[SlotSolver] = None):
    """eGLB-Off as a (Schedule, RunReport) pair."""
    trace = list(trace)
    solution = solve_offline(trace, spec, equity, tol, max_iters, solver)
    schedule = _schedule("eglb-off", solution.decisions, solution.server_energy,
                         solution.performance_cost, solution.mix)
    run_report = report(schedule, trace, spec, equity).model_copy(
        update={"gap_estimate": solution.gap_estimate, "converged": solution.converged}
    )
    return schedule, run_report


def run_mpc(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
            window: int = DEFAULT_MPC_WINDOW, tol: float = OFFLINE_TOL,
            max_iters: Optional[int] = None, solver: Optional[SlotSolver] = None):
    """
    Receding-horizon eGLB with perfect foresight inside each window.

    Only the first planned decision is applied, except that once the window
    reaches the end of the trace the rest of its plan is applied at once.
    A window covering the whole trace is the offline problem and is solved as
    such, with the offline iteration cap unless `max_iters` is given.

    Returns:
        (Schedule, RunReport)
    """
    if window < 1:
        raise ConfigurationError("MPC window must be at least 1")
    solver = solver or HomogeneousSolver(spec)
    trace = list(trace)
    batch = solver.prepare(trace)
    horizon = len(batch)
    if window >= horizon:
        solution = solve_offline(trace, spec, equity, tol, max_iters or OFFLINE_MAX_ITERS, solver)
        schedule = _schedule("eglb-mpc", solution.decisions, solution.server_energy,
                             solution.performance_cost, solution.mix)
        return schedule, report(schedule, trace, spec, equity)
    max_iters = max_iters or MPC_MAX_ITERS
    n = spec.n_datacenters
    carried_c, carried_w = np.zeros(n), np.zeros(n)
    kappa = None
    decisions, energy, performance, mixes = [], [], [], []
    started = time.perf_counter()

    t = 0
    while t < horizon:
        stop = min(t + window, horizon)
        sub = batch.select(t, stop)
        solution = dual_ascent(solver, sub, equity, carried_c, carried_w, stop, tol, max_iters, kappa)
        take = len(sub) if stop == horizon else 1
        decisions.extend(solution.decisions[:take])
        energy.extend(solution.server_energy[:take])
        performance.extend(solution.performance_cost[:take])
        if solution.mix is not None:
            mixes.extend(solution.mix[:take])
        carried_c = carried_c + (sub.carbon_factor[:take] * solution.server_energy[:take]).sum(axis=0)
        carried_w = carried_w + (sub.water_factor[:take] * solution.server_energy[:take]).sum(axis=0)
        kappa = solution.kappa
        t += take

    logger.info(f"eglb-mpc: {horizon} slots, window {window}, in {time.perf_counter() - started:.2f}s")
    schedule = _schedule("eglb-mpc", decisions, energy, performance, mixes if mixes else None)
    return schedule, report(schedule, trace, spec, equity)
