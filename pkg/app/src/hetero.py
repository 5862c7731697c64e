"""
Heterogeneous AI models: each DC may split its load across L model sizes.

Energy, resource use and performance cost are linear in the load given to a
model. For a DC with a fixed total load the cheapest split is therefore a
1-D LP whose value is convex piecewise linear in the load: start on the
cheapest model and, once the resource budget binds, trade load towards
models using fewer resources along the lower convex hull of the points
(resource_l, cost_l). Each hull segment becomes one outlet of the flow
network, so the slot problem stays a transportation problem.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.src.errors import ConfigurationError
from app.src.model import (
    Decision,
    FleetSpec,
    NumericModel,
    SlotInput,
    as_matrix,
    as_vector,
    cost_factors,
    energy_slope,
    static_energy,
)
from app.src.schemas import HeteroModelFile
from app.src.slot_solver import Batch, BatchPlan, CostWeights, SlotSolver, weighted_unit_cost

logger = logging.getLogger(__name__)


class HeteroModel(NumericModel):
    """Linear energy, resource and performance-cost slopes per (DC, model)."""
    energy_per_load: np.ndarray = Field(..., description="N x L, MWh per MW routed to model l")
    resource_per_load: np.ndarray = Field(..., description="N x L, capacity units per MW")
    perf_cost_per_load: np.ndarray = Field(..., description="L, accuracy-loss units per MW")
    phi: float = Field(0.0, ge=0, description="USD per accuracy-loss unit")
    names: Optional[Tuple[str, ...]] = None

    @field_validator("energy_per_load", "resource_per_load", mode="before")
    @classmethod
    def _matrices(cls, value):
        return as_matrix(value)

    @field_validator("perf_cost_per_load", mode="before")
    @classmethod
    def _vector(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        if self.energy_per_load.shape != self.resource_per_load.shape:
            raise ValueError("energy_per_load and resource_per_load must have the same shape")
        if self.perf_cost_per_load.shape != (self.n_models,):
            raise ValueError(f"perf_cost_per_load must have length {self.n_models}")
        if self.names is not None and len(self.names) != self.n_models:
            raise ValueError(f"expected {self.n_models} model names")
        for name in ("energy_per_load", "perf_cost_per_load"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        if not np.all(np.isfinite(self.resource_per_load)) or np.any(self.resource_per_load <= 0):
            raise ValueError("resource_per_load must be finite and strictly positive")
        return self

    @property
    def n_models(self) -> int:
        return int(self.energy_per_load.shape[1])

    @classmethod
    def single(cls, spec: FleetSpec) -> "HeteroModel":
        """The homogeneous fleet written as one model per DC."""
        return cls(
            energy_per_load=energy_slope(spec)[:, None],
            resource_per_load=np.ones((spec.n_datacenters, 1)),
            perf_cost_per_load=np.zeros(1),
        )

    @classmethod
    def from_document(cls, document: HeteroModelFile, spec: FleetSpec) -> "HeteroModel":
        """Build per-DC slopes from a hetero model file; scalars apply to every DC."""
        n = spec.n_datacenters

        def column(value) -> np.ndarray:
            values = np.asarray(value, dtype=float)
            if values.ndim == 0:
                values = np.full(n, float(values))
            if values.shape != (n,):
                raise ConfigurationError(f"per-DC model values must have length {n}")
            return values

        models = document.models
        return cls(
            energy_per_load=np.stack([column(m.energy_per_load) for m in models], axis=1),
            resource_per_load=np.stack([column(m.resource_per_load) for m in models], axis=1),
            perf_cost_per_load=[m.perf_cost_per_load for m in models],
            phi=document.phi,
            names=tuple(m.name for m in models),
        )


def hetero_slot_cost(model: HeteroModel, slot: SlotInput, spec: FleetSpec) -> np.ndarray:
    """
    Generalized operational cost per MW given to model l at DC i.

    Returns:
        N x L matrix: p_i * gamma_i * e_il + phi * s_l
    """
    slot.check_dimensions(spec)
    if model.energy_per_load.shape[0] != spec.n_datacenters:
        raise ConfigurationError("hetero model does not match the number of data centers")
    return cost_factors(slot).energy[:, None] * model.energy_per_load + model.phi * model.perf_cost_per_load


def lower_hull(cost: np.ndarray, resource: np.ndarray, capacity: np.ndarray):
    """
    Segments of the per-DC convex cost of serving a given load.

    Args:
        cost: (..., N, L) unit cost of every model
        resource: (N, L) resource slope of every model
        capacity: (N,) resource budget

    Returns:
        (slopes, widths, vertices), each (..., N, L). Unused trailing segments
        have slope inf, width 0 and vertex -1.
    """
    r = np.broadcast_to(resource, cost.shape)
    cap = capacity[:, None]
    n_models = cost.shape[-1]
    slopes = np.full(cost.shape, np.inf)
    widths = np.zeros(cost.shape)
    vertices = np.full(cost.shape, -1, dtype=np.int64)

    cheapest = cost.min(axis=-1, keepdims=True)
    v = np.argmin(np.where(cost == cheapest, r, np.inf), axis=-1)[..., None]
    slopes[..., :1] = np.take_along_axis(cost, v, axis=-1)
    edge = cap / np.take_along_axis(r, v, axis=-1)
    widths[..., :1] = edge
    vertices[..., :1] = v

    for k in range(1, n_models):
        r_v = np.take_along_axis(r, v, axis=-1)
        c_v = np.take_along_axis(cost, v, axis=-1)
        smaller = r < r_v
        if not smaller.any():
            break
        gap = np.where(smaller, r_v - r, 1.0)
        sigma = np.where(smaller, (cost * r_v - c_v * r) / gap, np.inf)
        best = sigma.min(axis=-1, keepdims=True)
        nxt = np.argmin(np.where(smaller & (sigma == best), r, np.inf), axis=-1)[..., None]
        grow = np.isfinite(best)
        next_edge = cap / np.take_along_axis(r, nxt, axis=-1)
        slopes[..., k:k + 1] = np.where(grow, best, np.inf)
        widths[..., k:k + 1] = np.where(grow, next_edge - edge, 0.0)
        vertices[..., k:k + 1] = np.where(grow, nxt, -1)
        v = np.where(grow, nxt, v)
        edge = np.where(grow, next_edge, edge)
    return slopes, widths, vertices


def split_load(loads: np.ndarray, vertices: np.ndarray, resource: np.ndarray,
               capacity: np.ndarray) -> np.ndarray:
    """
    Per-model loads y realizing `loads` at minimum cost along the hull.

    Args:
        loads: (T, N) per-DC load
        vertices: (T, N, L) hull vertices from lower_hull
        resource: (N, L)
        capacity: (N,)

    Returns:
        (T, N, L) model mix
    """
    t_idx, n_idx = np.indices(loads.shape)
    r_vertex = np.where(vertices >= 0, resource[n_idx[..., None], np.maximum(vertices, 0)], np.inf)
    edges = capacity[None, :, None] / r_vertex  # inf for unused vertices
    valid = (vertices >= 0).sum(axis=-1)
    tol = 1e-12 * np.maximum(capacity, 1.0)
    seg = (edges < (loads - tol)[..., None]).sum(axis=-1)
    seg = np.minimum(seg, valid - 1)

    y = np.zeros(vertices.shape)
    first = seg == 0
    v0 = vertices[..., 0]
    y[t_idx[first], n_idx[first], v0[first]] = loads[first]

    mixed = ~first
    if mixed.any():
        s = seg[mixed]
        tm, nm = t_idx[mixed], n_idx[mixed]
        va = vertices[tm, nm, s - 1]
        vb = vertices[tm, nm, s]
        ra = resource[nm, va]
        rb = resource[nm, vb]
        load = loads[mixed]
        ya = np.clip((capacity[nm] - rb * load) / (ra - rb), 0.0, load)
        y[tm, nm, va] = ya
        y[tm, nm, vb] = load - ya
    return y


@dataclass
class HeteroSolver(SlotSolver):
    """Primal step for fleets running several model sizes per DC."""
    model: HeteroModel = None

    def __post_init__(self):
        if self.model is None:
            raise ConfigurationError("HeteroSolver needs a HeteroModel")
        if self.model.energy_per_load.shape[0] != self.spec.n_datacenters:
            raise ConfigurationError(
                f"hetero model covers {self.model.energy_per_load.shape[0]} data centers, "
                f"fleet has {self.spec.n_datacenters}"
            )
        self._static = static_energy(self.spec)
        self._mask = np.repeat(self.spec.connectivity, self.model.n_models, axis=0)

    @property
    def n_models(self) -> int:
        return self.model.n_models

    @property
    def outlet_mask(self) -> np.ndarray:
        return self._mask

    def unit_costs(self, batch: Batch, weights: CostWeights) -> np.ndarray:
        """(T, N, L) weighted cost per MW given to each model."""
        e = self.model.energy_per_load
        operational = batch.energy_factor[..., None] * e + self.model.phi * self.model.perf_cost_per_load
        return weighted_unit_cost(
            operational,
            batch.carbon_factor[..., None] * e,
            batch.water_factor[..., None] * e,
            CostWeights(*(np.asarray(w)[..., None] if np.ndim(w) else w for w in weights)),
        )

    def _outlets(self, cost: np.ndarray):
        slopes, widths, vertices = lower_hull(cost, self.model.resource_per_load, self.spec.capacity)
        t = cost.shape[0]
        return slopes.reshape(t, -1), widths.reshape(t, -1), vertices

    def outlet_costs(self, batch: Batch, weights: CostWeights) -> Tuple[np.ndarray, np.ndarray]:
        slopes, widths, _ = self._outlets(self.unit_costs(batch, weights))
        return slopes, widths

    def _realize_costs(self, batch: Batch, loads: np.ndarray, cost: np.ndarray) -> BatchPlan:
        _, _, vertices = lower_hull(cost, self.model.resource_per_load, self.spec.capacity)
        mix = split_load(loads, vertices, self.model.resource_per_load, self.spec.capacity)
        energy = self._static + (mix * self.model.energy_per_load).sum(axis=-1)
        performance = self.model.phi * (mix * self.model.perf_cost_per_load).sum(axis=(1, 2))
        return BatchPlan(loads=loads, energy=energy, performance=performance, mix=mix)

    def realize(self, batch: Batch, loads: np.ndarray, weights: CostWeights) -> BatchPlan:
        return self._realize_costs(batch, loads, self.unit_costs(batch, weights))

    def plan_costs(self, batch: Batch, cost: np.ndarray) -> BatchPlan:
        """Plan against explicit (T, N, L) unit costs instead of weights."""
        slopes, widths, _ = self._outlets(cost)
        order, outlet_loads, routes = self._dispatch(batch, slopes, widths)
        plan = self._realize_costs(batch, self._to_dc(outlet_loads), cost)
        plan.outlet_order = order
        plan.outlet_loads = outlet_loads
        plan.routes = routes
        return plan

    def load_capacity(self) -> np.ndarray:
        return self.spec.capacity / self.model.resource_per_load.min(axis=1)

    def max_server_energy(self) -> np.ndarray:
        per_resource = (self.model.energy_per_load / self.model.resource_per_load).max(axis=1)
        return self._static + self.spec.capacity * per_resource


def solve_hetero_slot(costs: np.ndarray, model: HeteroModel, spec: FleetSpec,
                      slot: SlotInput) -> Tuple[Decision, np.ndarray]:
    """
    Route one slot and split each DC's load across models.

    Args:
        costs: N x L unit costs (e.g. from hetero_slot_cost)
        model: Model slopes
        spec: Fleet description
        slot: Slot inputs

    Returns:
        (x, y) with x the N x J routing and y the N x L model mix

    Raises:
        InfeasibleError: demand cannot be served under the mask and resource budgets
    """
    solver = HeteroSolver(spec=spec, model=model)
    batch = solver.prepare([slot])
    plan = solver.plan_costs(batch, np.asarray(costs, dtype=float)[None])
    return solver.decisions(batch, plan)[0], plan.mix[0]


def run_hetero(trace: Sequence[SlotInput], spec: FleetSpec, model: HeteroModel,
               config=None, algorithm: str = "eglb", **kwargs):
    """
    Run any algorithm with the heterogeneous primal step substituted.

    Args:
        trace: Slots to run over
        spec: Fleet description
        model: Heterogeneous model slopes
        config: RunConfig for eglb; EquitySpec for eglb-off / eglb-mpc
        algorithm: One of the names accepted by the comparison suite

    Returns:
        (Schedule, RunReport)
    """
    from app.src.suite import run_algorithm

    solver = HeteroSolver(spec=spec, model=model)
    logger.info(f"Running {algorithm} with {model.n_models} heterogeneous models")
    return run_algorithm(algorithm, trace, spec, config, solver=solver, **kwargs)
