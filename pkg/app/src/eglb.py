"""
Online equity-aware GLB: dual mirror descent over the carbon and water multipliers.

Every slot the router minimizes energy cost plus multiplier-weighted footprints,
the auxiliary step picks the footprint levels the equity penalty would like,
and the gap between the two moves the multipliers.
"""
import logging
import time
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.src.auxstep import minimize_box
from app.src.bounds import check_dual_norm, constants
from app.src.config import DEFAULT_ETA
from app.src.dmd import DualState, check_learning_rate, subgradient, update
from app.src.errors import ConfigurationError
from app.src.metrics import report
from app.src.model import (
    Decision,
    EquitySpec,
    FleetSpec,
    NumericModel,
    SlotInput,
    as_vector,
    marginal_coefficients,
)
from app.src.schemas import BoundsReport
from app.src.slot_solver import CostWeights, HomogeneousSolver, SlotSolver, weighted_unit_cost

logger = logging.getLogger(__name__)


class RunConfig(NumericModel):
    """Inputs of one online run."""
    equity: EquitySpec
    eta: float = DEFAULT_ETA
    zbar_carbon: np.ndarray
    zbar_water: np.ndarray
    kappa_init: Optional[np.ndarray] = None
    learn_duals: bool = Field(True, description="False pins the multipliers at kappa_init")

    @field_validator("zbar_carbon", "zbar_water", mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @field_validator("kappa_init", mode="before")
    @classmethod
    def _kappa(cls, value):
        return None if value is None else as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        for name in ("zbar_carbon", "zbar_water"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.kappa_init is not None and np.any(self.kappa_init < 0):
            raise ValueError("kappa_init must be nonnegative")
        return self

    @classmethod
    def for_trace(cls, trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                  eta: float = DEFAULT_ETA, solver: Optional[SlotSolver] = None, **kwargs) -> "RunConfig":
        """Config with zbar derived from the trace."""
        zbar_c, zbar_w = default_zbar(trace, spec, equity, solver)
        return cls(equity=equity, eta=eta, zbar_carbon=zbar_c, zbar_water=zbar_w, **kwargs)

    def initial_kappa(self, n_datacenters: int) -> np.ndarray:
        if self.kappa_init is None:
            return np.zeros(2 * n_datacenters)
        return np.asarray(self.kappa_init, dtype=float)

    def validate_for(self, spec: FleetSpec) -> None:
        n = spec.n_datacenters
        check_learning_rate(self.eta)
        if self.equity.theta_carbon.size != n:
            raise ConfigurationError(f"equity spec covers {self.equity.theta_carbon.size} DCs, fleet has {n}")
        if self.zbar_carbon.size != n or self.zbar_water.size != n:
            raise ConfigurationError(f"zbar vectors must have length {n}")
        if self.kappa_init is not None and self.kappa_init.size != 2 * n:
            raise ConfigurationError(f"kappa_init must have length {2 * n}")


class Schedule(NumericModel):
    """Everything an algorithm decided over a trace."""
    algorithm: str
    decisions: Tuple[Decision, ...]
    server_energy: np.ndarray = Field(..., description="T x N, MWh")
    performance_cost: np.ndarray = Field(..., description="T, USD")
    dual_trajectory: np.ndarray = Field(..., description="(T+1) x 2N, empty when no duals are tracked")
    aux_trajectory: np.ndarray = Field(..., description="T x 2 x N, empty when no duals are tracked")
    mix: Optional[np.ndarray] = None
    eta: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        t = len(self.decisions)
        if self.server_energy.shape[0] != t or self.performance_cost.shape != (t,):
            raise ValueError("per-slot arrays must have one row per decision")
        if self.dual_trajectory.size and self.dual_trajectory.shape[0] != t + 1:
            raise ValueError("dual trajectory must hold T+1 rows")
        if self.aux_trajectory.size and self.aux_trajectory.shape[0] != t:
            raise ValueError("aux trajectory must hold T rows")
        return self

    @property
    def n_slots(self) -> int:
        return len(self.decisions)

    @property
    def loads(self) -> np.ndarray:
        return np.stack([d.load for d in self.decisions])

    @property
    def final_kappa(self) -> Optional[np.ndarray]:
        return self.dual_trajectory[-1] if self.dual_trajectory.size else None


def default_zbar(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                 solver: Optional[SlotSolver] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Largest per-slot footprint each DC could produce at full capacity, in equity space."""
    solver = solver or HomogeneousSolver(spec)
    batch = solver.prepare(trace)
    peak = solver.max_server_energy()
    return ((batch.carbon_factor * peak * equity.carbon_scale(spec)).max(axis=0),
            (batch.water_factor * peak * equity.water_scale(spec)).max(axis=0))


def primal_cost_vector(slot: SlotInput, kappa: np.ndarray, spec: FleetSpec,
                       equity: EquitySpec) -> np.ndarray:
    """
    Per-MW cost the router minimizes at one slot.

    Args:
        slot: Slot inputs
        kappa: Stacked carbon and water multipliers (2N)
        spec: Fleet description
        equity: Equity weights and normalization

    Returns:
        s_g + kappa_c * s_c * scale_c + kappa_w * s_w * scale_w, one entry per DC
    """
    n = spec.n_datacenters
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (2 * n,):
        raise ValueError(f"kappa must have length {2 * n}")
    m = marginal_coefficients(spec, slot)
    weights = CostWeights(1.0, kappa[:n] * equity.carbon_scale(spec), kappa[n:] * equity.water_scale(spec))
    return weighted_unit_cost(m.energy, m.carbon, m.water, weights)


def calibrate(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec, eta: float = DEFAULT_ETA,
              warmup: float = 0.25, solver: Optional[SlotSolver] = None) -> Tuple[EquitySpec, float]:
    """
    Pick carbon and water multiplier units for a learning rate and a trace.

    The multipliers only reshape routing once they reach roughly mu * theta / N,
    and each step moves them by about eta times the mean per-DC footprint. With
    footprints multiplied by a unit s (and theta divided by it) the step count
    to get there is mu * theta / (s^2 * eta * N * mean), so the dynamics only
    depend on eta * s^2. Each unit is chosen so its block needs `warmup * T`
    steps at the given eta; a block without weight keeps unit 1. The objective
    does not depend on the units.

    Returns:
        (equity spec with calibrated units, learning rate)
    """
    check_learning_rate(eta)
    if not 0 < warmup <= 1:
        raise ConfigurationError("warmup must lie in (0, 1]")
    solver = solver or HomogeneousSolver(spec)
    batch = solver.prepare(trace)
    plan = solver.plan(batch, CostWeights())
    scale = equity.scale(spec)
    carbon, water = plan.footprints(batch, scale, scale)
    n, horizon = spec.n_datacenters, len(batch)

    def stiffness(mu: float, theta: np.ndarray, footprint: np.ndarray) -> float:
        mean = float(footprint.mean())
        if mu <= 0 or mean <= 0 or theta.max(initial=0.0) <= 0:
            return 0.0
        return mu * float(theta.max()) / (n * mean)

    k_c = stiffness(equity.mu_carbon, equity.theta_carbon, carbon)
    k_w = stiffness(equity.mu_water, equity.theta_water, water)
    if k_c == 0 and k_w == 0:
        logger.warning("No active equity block; keeping the units as they are")
        return equity, eta
    steps = eta * warmup * horizon
    units = {"carbon_unit": float(np.sqrt(k_c / steps)) if k_c > 0 else 1.0,
             "water_unit": float(np.sqrt(k_w / steps)) if k_w > 0 else 1.0}
    logger.info(f"Calibrated units at eta = {eta:.4g}: carbon {units['carbon_unit']:.4g}, "
                f"water {units['water_unit']:.4g}")
    return equity.model_copy(update=units), eta


def run(trace: Sequence[SlotInput], spec: FleetSpec, config: RunConfig,
        solver: Optional[SlotSolver] = None, algorithm: str = "eglb"):
    """
    Online eGLB over a trace.

    Args:
        trace: Slots revealed one at a time
        spec: Fleet description
        config: Learning rate, equity weights, zbar and initial multipliers
        solver: Primal step; homogeneous unless given
        algorithm: Label stored in the schedule and report

    Returns:
        (Schedule, RunReport)

    Raises:
        InfeasibleError: a slot cannot be routed (carries the slot index)
        ConfigurationError: inconsistent configuration
    """
    config.validate_for(spec)
    solver = solver or HomogeneousSolver(spec)
    trace = list(trace)
    equity = config.equity
    n = spec.n_datacenters
    if equity.mu_carbon == 0 and equity.mu_water == 0 and not (config.zbar_carbon.any() or config.zbar_water.any()):
        logger.warning("mu_carbon = mu_water = 0 with zbar = 0: multipliers can only grow")

    started = time.perf_counter()
    batch = solver.prepare(trace)
    scale_c, scale_w = equity.carbon_scale(spec), equity.water_scale(spec)
    state = DualState(kappa=config.initial_kappa(n), eta=config.eta)

    duals = [state.kappa]
    aux = []
    decisions, energy, performance, mixes = [], [], [], []
    for k in range(len(batch)):
        sub = batch.select(k, k + 1)
        kappa_c, kappa_w = state.kappa_carbon, state.kappa_water
        plan = solver.plan(sub, CostWeights(1.0, kappa_c * scale_c, kappa_w * scale_w))
        decisions.append(solver.decisions(sub, plan)[0])
        z_c, _ = minimize_box(equity.mu_carbon, equity.carbon_slope, kappa_c, config.zbar_carbon)
        z_w, _ = minimize_box(equity.mu_water, equity.water_slope, kappa_w, config.zbar_water)
        carbon, water = plan.footprints(sub, scale_c, scale_w)
        if config.learn_duals:
            state = update(state, subgradient(z_c, z_w, carbon[0], water[0]))
        duals.append(state.kappa)
        aux.append(np.stack((z_c, z_w)))
        energy.append(plan.energy[0])
        performance.append(plan.performance[0])
        if plan.mix is not None:
            mixes.append(plan.mix[0])

    schedule = Schedule(
        algorithm=algorithm,
        decisions=tuple(decisions),
        server_energy=np.stack(energy),
        performance_cost=np.asarray(performance),
        dual_trajectory=np.stack(duals),
        aux_trajectory=np.stack(aux),
        mix=np.stack(mixes) if mixes else None,
        eta=config.eta,
    )
    logger.info(
        f"{algorithm}: {len(batch)} slots in {time.perf_counter() - started:.2f}s, "
        f"final |kappa| = {np.linalg.norm(state.kappa):.4g}"
    )
    run_report = report(schedule, trace, spec, equity)
    if config.learn_duals and not np.any(duals[0]):
        peak_c, peak_w = default_zbar(trace, spec, equity, solver)
        # The norm bound needs zbar to cover every per-slot footprint.
        if np.all(config.zbar_carbon >= peak_c) and np.all(config.zbar_water >= peak_w):
            k = constants(trace, spec, equity, config.zbar_carbon, config.zbar_water, solver)
            dual_norm = check_dual_norm(schedule, k, config.eta, schedule.n_slots)
            run_report = run_report.model_copy(update={"bounds": BoundsReport(constants=k, dual_norm=dual_norm)})
    return schedule, run_report
