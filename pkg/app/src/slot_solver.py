"""
The primal step shared by every algorithm.

A slot's objective is always a weighted sum of energy cost, carbon and water,
with weights that may differ per DC (equity multipliers) or be plain scalars
(baselines). Each solver turns the weights into per-outlet unit costs, routes
demand through the transport module and reports what the routing implies:
per-DC load, server energy, performance cost and model mix.

Outlets are the sink-side arcs of the flow network. In the homogeneous fleet
there is one outlet per DC; the heterogeneous solver exposes one outlet per
segment of each DC's convex piecewise-linear cost.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.src.errors import CapacityExceededError, InfeasibleError
from app.src.model import (
    Decision,
    FleetSpec,
    SlotInput,
    cost_factors,
    energy_slope,
    static_energy,
)
from app.src.transport import greedy_loads, northwest_corner, route_by_priority

logger = logging.getLogger(__name__)

Weight = Union[float, np.ndarray]

ROUTE_CACHE_LIMIT = 200_000


class CostWeights(NamedTuple):
    """Multipliers on energy cost, carbon and water; scalars or per-DC vectors."""
    energy: Weight = 1.0
    carbon: Weight = 0.0
    water: Weight = 0.0


def weighted_unit_cost(energy: np.ndarray, carbon: np.ndarray, water: np.ndarray,
                       weights: CostWeights) -> np.ndarray:
    """Combine per-MW energy cost, carbon and water slopes under `weights`."""
    return energy * weights.energy + carbon * weights.carbon + water * weights.water


@dataclass(frozen=True)
class Batch:
    """A run of consecutive slots with their cost factors stacked (T x N)."""
    slots: Tuple[SlotInput, ...]
    energy_factor: np.ndarray
    carbon_factor: np.ndarray
    water_factor: np.ndarray
    demand: np.ndarray

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def total_demand(self) -> np.ndarray:
        return self.demand.sum(axis=1)

    def select(self, start: int, stop: int) -> "Batch":
        return Batch(
            slots=self.slots[start:stop],
            energy_factor=self.energy_factor[start:stop],
            carbon_factor=self.carbon_factor[start:stop],
            water_factor=self.water_factor[start:stop],
            demand=self.demand[start:stop],
        )


@dataclass
class BatchPlan:
    """What a routing implies for each slot of a batch."""
    loads: np.ndarray         # T x N, MW
    energy: np.ndarray        # T x N, MWh of server energy
    performance: np.ndarray   # T, USD of performance cost
    mix: Optional[np.ndarray] = None  # T x N x L, MW per model
    outlet_order: Optional[np.ndarray] = None
    outlet_loads: Optional[np.ndarray] = None
    routes: Optional[List[np.ndarray]] = None

    def footprints(self, batch: Batch, carbon_scale: Weight = 1.0,
                   water_scale: Weight = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        """Carbon and water per slot and DC, each multiplied by its scale."""
        return batch.carbon_factor * self.energy * carbon_scale, batch.water_factor * self.energy * water_scale

    def energy_cost(self, batch: Batch) -> np.ndarray:
        """Energy cost per slot (USD), excluding performance cost."""
        return (batch.energy_factor * self.energy).sum(axis=1)


@dataclass
class SlotSolver(ABC):
    """Per-slot primal solver over a fixed fleet."""
    spec: FleetSpec
    _route_cache: Dict[tuple, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    def prepare(self, slots: Sequence[SlotInput]) -> Batch:
        slots = tuple(slots)
        if not slots:
            raise ValueError("cannot prepare an empty batch")
        for slot in slots:
            slot.check_dimensions(self.spec)
        factors = [cost_factors(slot) for slot in slots]
        return Batch(
            slots=slots,
            energy_factor=np.stack([f.energy for f in factors]),
            carbon_factor=np.stack([f.carbon for f in factors]),
            water_factor=np.stack([f.water for f in factors]),
            demand=np.stack([slot.load for slot in slots]),
        )

    @property
    def n_models(self) -> int:
        return 1

    @property
    @abstractmethod
    def outlet_mask(self) -> np.ndarray:
        """Outlets x gateways allowed-route mask."""

    @abstractmethod
    def outlet_costs(self, batch: Batch, weights: CostWeights) -> Tuple[np.ndarray, np.ndarray]:
        """Unit cost (T x K) and capacity (T x K or K) of every outlet."""

    @abstractmethod
    def realize(self, batch: Batch, loads: np.ndarray, weights: CostWeights) -> BatchPlan:
        """Energy, performance cost and model mix for given per-DC loads."""

    @abstractmethod
    def load_capacity(self) -> np.ndarray:
        """Largest load each DC can serve (MW)."""

    @abstractmethod
    def max_server_energy(self) -> np.ndarray:
        """Largest server energy each DC can draw in one slot (MWh)."""

    def _to_dc(self, outlet_values: np.ndarray) -> np.ndarray:
        """Sum outlet rows (last-but-one axis when routing) up to DCs."""
        n = self.spec.n_datacenters
        shape = outlet_values.shape
        return outlet_values.reshape(shape[:-1] + (n, shape[-1] // n)).sum(axis=-1)

    def _route(self, slot: SlotInput, order: np.ndarray, capacity: np.ndarray) -> np.ndarray:
        key = (slot.t, slot.load.tobytes(), order.tobytes(), capacity.tobytes())
        cached = self._route_cache.get(key)
        if cached is not None:
            return cached
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        try:
            x = route_by_priority(rank, capacity, slot.load, self.outlet_mask)
        except InfeasibleError as exc:
            raise exc.at_slot(slot.t) from exc
        if len(self._route_cache) >= ROUTE_CACHE_LIMIT:
            self._route_cache.clear()
        x.setflags(write=False)
        self._route_cache[key] = x
        return x

    def plan(self, batch: Batch, weights: CostWeights) -> BatchPlan:
        """
        Optimal routing of every slot in the batch under `weights`.

        Args:
            batch: Prepared slots
            weights: Objective weights

        Returns:
            The plan; decisions() expands it into routing matrices
        """
        costs, capacity = self.outlet_costs(batch, weights)
        order, outlet_loads, routes = self._dispatch(batch, costs, capacity)
        plan = self.realize(batch, self._to_dc(outlet_loads), weights)
        plan.outlet_order = order
        plan.outlet_loads = outlet_loads
        plan.routes = routes
        return plan

    def _dispatch(self, batch: Batch, costs: np.ndarray, capacity: np.ndarray):
        """Route every slot given outlet costs; returns (order, outlet loads, routes)."""
        order = np.argsort(costs, axis=1, kind="stable")
        routes = None
        if self.spec.fully_flexible:
            cap_total = np.broadcast_to(capacity, costs.shape).sum(axis=1)
            short = np.flatnonzero(batch.total_demand > cap_total * (1 + 1e-12))
            if short.size:
                t = batch.slots[int(short[0])].t
                raise InfeasibleError(np.flatnonzero(batch.demand[short[0]] > 0), slot=t,
                                      detail="total demand exceeds total capacity")
            outlet_loads = greedy_loads(costs, capacity, batch.total_demand)
        else:
            caps = np.broadcast_to(capacity, costs.shape)
            routes = [self._route(slot, order[k], np.ascontiguousarray(caps[k]))
                      for k, slot in enumerate(batch.slots)]
            outlet_loads = np.stack([x.sum(axis=1) for x in routes])
        return order, outlet_loads, routes

    def decisions(self, batch: Batch, plan: BatchPlan) -> List[Decision]:
        """Routing matrices for every slot of a planned batch."""
        decisions = []
        for k, slot in enumerate(batch.slots):
            if plan.routes is not None:
                x_out = plan.routes[k]
            elif plan.outlet_order is not None:
                x_out = northwest_corner(plan.outlet_order[k], plan.outlet_loads[k], slot.load)
            else:
                raise ValueError("plan carries no routing information")
            decisions.append(Decision(x=self._to_dc(x_out.T).T))
        return decisions

    def fixed(self, batch: Batch, decisions: Sequence[Decision],
              weights: CostWeights = CostWeights()) -> BatchPlan:
        """
        Evaluate a routing chosen elsewhere (GLB-Nearest).

        Raises:
            CapacityExceededError: a DC is asked for more load than it can serve
        """
        loads = np.stack([d.load for d in decisions])
        limit = self.load_capacity()
        over = loads > limit + 1e-9 * np.maximum(limit, 1.0)
        if over.any():
            k, i = (int(v) for v in np.argwhere(over)[0])
            raise CapacityExceededError(i, float(loads[k, i]), float(limit[i]), slot=batch.slots[k].t)
        return self.realize(batch, loads, weights)


@dataclass
class HomogeneousSolver(SlotSolver):
    """One server type per DC: cost is linear in load up to capacity."""

    def __post_init__(self):
        self._slope = energy_slope(self.spec)
        self._static = static_energy(self.spec)

    @property
    def outlet_mask(self) -> np.ndarray:
        return self.spec.connectivity

    def outlet_costs(self, batch: Batch, weights: CostWeights) -> Tuple[np.ndarray, np.ndarray]:
        cost = weighted_unit_cost(
            batch.energy_factor * self._slope,
            batch.carbon_factor * self._slope,
            batch.water_factor * self._slope,
            weights,
        )
        return np.broadcast_to(cost, batch.energy_factor.shape), self.spec.capacity

    def realize(self, batch: Batch, loads: np.ndarray, weights: CostWeights) -> BatchPlan:
        energy = self._static + loads * self._slope
        return BatchPlan(loads=loads, energy=energy, performance=np.zeros(len(batch)))

    def load_capacity(self) -> np.ndarray:
        return self.spec.capacity

    def max_server_energy(self) -> np.ndarray:
        return self._static + self.spec.capacity * self._slope
