"""
Online-vs-offline cost bound and dual-norm bound for eGLB runs.

Both are evaluated in the coordinates the multipliers live in (footprints
times carbon_scale / water_scale, slopes divided by the units), which is
where the guarantees hold for the run as executed.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from app.src.errors import ConfigurationError
from app.src.model import EquitySpec, FleetSpec, SlotInput
from app.src.schemas import BoundCheck, BoundConstants, BoundsReport
from app.src.slot_solver import HomogeneousSolver, SlotSolver

logger = logging.getLogger(__name__)


def constants(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
              zbar_c: np.ndarray, zbar_w: np.ndarray,
              solver: Optional[SlotSolver] = None) -> BoundConstants:
    """
    Constants of the cost bound for one trace.

    Args:
        trace: Slots of the run
        spec: Fleet description
        equity: Equity weights, slopes and units
        zbar_c: Per-slot carbon ceiling per DC, multiplier coordinates
        zbar_w: Per-slot water ceiling per DC, multiplier coordinates
        solver: Primal step whose peak energy defines the footprint slopes

    Returns:
        BoundConstants
    """
    solver = solver or HomogeneousSolver(spec)
    batch = solver.prepare(trace)
    n = spec.n_datacenters
    zbar_c, zbar_w = np.asarray(zbar_c, dtype=float), np.asarray(zbar_w, dtype=float)
    if zbar_c.shape != (n,) or zbar_w.shape != (n,):
        raise ConfigurationError(f"zbar vectors must have length {n}")

    peak = solver.max_server_energy()
    # Footprint per MW of capacity at full load; dominates the marginal slope.
    c_m = float((batch.carbon_factor * peak * equity.carbon_scale(spec) / spec.capacity).max())
    w_m = float((batch.water_factor * peak * equity.water_scale(spec) / spec.capacity).max())
    theta_m = equity.theta_max
    return BoundConstants(
        B=0.5 * n * float(zbar_c.max()) ** 2 + 0.5 * n * float(zbar_w.max()) ** 2,
        C=theta_m * (equity.mu_carbon + equity.mu_water),
        D=theta_m * (equity.mu_carbon * c_m + equity.mu_water * w_m),
        M=float(spec.capacity.max()),
        theta_m=theta_m,
        c_m=c_m,
        w_m=w_m,
    )


def cost_bound_gap(constants: BoundConstants, eta: float, n_slots: int) -> float:
    """eta * B * T + C * sqrt((2 / T) * (B + M * D / eta))."""
    if eta <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {eta}")
    if n_slots < 1:
        raise ConfigurationError("the cost bound needs at least one slot")
    k = constants
    return eta * k.B * n_slots + k.C * np.sqrt(2.0 / n_slots * (k.B + k.M * k.D / eta))


def check_cost_bound(online_cost: float, offline_cost: float, constants: BoundConstants,
                     eta: float, n_slots: int) -> BoundCheck:
    """
    Check that the online cost stays within the bound above the offline cost.

    Args:
        online_cost: eGLB objective value
        offline_cost: Offline optimum, or a certified lower bound on it such as the offline dual bound
        constants: Output of constants()
        eta: Learning rate of the online run
        n_slots: Horizon T

    Returns:
        BoundCheck with slack = bound - (online - offline)
    """
    rhs = offline_cost + cost_bound_gap(constants, eta, n_slots)
    result = BoundCheck(name="cost_bound", passed=bool(online_cost <= rhs), lhs=online_cost,
                        rhs=rhs, slack=rhs - online_cost)
    if not result.passed:
        logger.warning(f"Cost bound violated: {online_cost:.6g} > {rhs:.6g}")
    return result


def dual_norm_bound(constants: BoundConstants, eta: float, n_slots: int) -> float:
    """eta * sqrt(2T (B + M * D / eta))."""
    if eta <= 0:
        raise ConfigurationError(f"learning rate must be positive, got {eta}")
    if n_slots < 0:
        raise ConfigurationError("n_slots must be nonnegative")
    k = constants
    return eta * np.sqrt(2.0 * n_slots * (k.B + k.M * k.D / eta))


def check_dual_norm(schedule, constants: BoundConstants, eta: float, n_slots: int) -> BoundCheck:
    """
    Check the final multiplier norm against its bound.

    Args:
        schedule: An eGLB Schedule, or the final multiplier vector itself
        constants: Output of constants()
        eta: Learning rate of the run
        n_slots: Horizon T

    Returns:
        BoundCheck on the Euclidean norm of the final multipliers
    """
    kappa = getattr(schedule, "final_kappa", schedule)
    norm = 0.0 if kappa is None else float(np.linalg.norm(np.asarray(kappa, dtype=float)))
    rhs = float(dual_norm_bound(constants, eta, n_slots))
    result = BoundCheck(name="dual_norm", passed=bool(norm <= rhs), lhs=norm, rhs=rhs, slack=rhs - norm)
    if not result.passed:
        logger.warning(f"Dual norm bound violated: {norm:.6g} > {rhs:.6g}")
    return result


def bounds_report(schedule, online_cost: float, offline_cost: Optional[float],
                  constants: BoundConstants, eta: float) -> BoundsReport:
    """Both checks for a finished run; the cost bound is skipped without an offline cost."""
    n_slots = schedule.n_slots
    cost_bound = None
    if offline_cost is not None:
        cost_bound = check_cost_bound(online_cost, offline_cost, constants, eta, n_slots)
    return BoundsReport(
        constants=constants,
        cost_bound=cost_bound,
        dual_norm=check_dual_norm(schedule, constants, eta, n_slots),
    )
