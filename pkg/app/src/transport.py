"""
Per-slot routing subproblem: minimize a per-DC linear cost over the transportation polytope.

Costs sit only on the data-center side, so in the residual network every
source-to-sink path costs exactly the unit cost of the DC it leaves through.
Successive shortest paths therefore reduces to "push demand to the cheapest
reachable DC that still has room", found with a breadth-first search from the
gateway being served. Only the priority order of the costs matters, which the
slot solvers use for caching.
"""
import logging
from collections import deque
from typing import NamedTuple, Optional

import numpy as np
from pydantic import field_validator, model_validator

from app.src.errors import InfeasibleError
from app.src.model import Decision, NumericModel, as_matrix, as_vector

logger = logging.getLogger(__name__)


class TransportInstance(NumericModel):
    """Unit costs per DC, DC capacities, gateway demands and the allowed-route mask."""
    unit_cost: np.ndarray
    capacity: np.ndarray
    demand: np.ndarray
    mask: np.ndarray

    @field_validator("unit_cost", "capacity", "demand", mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @field_validator("mask", mode="before")
    @classmethod
    def _mask(cls, value):
        return as_matrix(value, dtype=bool)

    @model_validator(mode="after")
    def _check(self):
        n, j = self.mask.shape
        if self.unit_cost.shape != (n,) or self.capacity.shape != (n,):
            raise ValueError(f"unit_cost/capacity must have length {n}")
        if self.demand.shape != (j,):
            raise ValueError(f"demand must have length {j}")
        if not np.all(np.isfinite(self.unit_cost)):
            raise ValueError("unit_cost must be finite")
        if np.any(self.demand < 0) or not np.all(np.isfinite(self.demand)):
            raise ValueError("demand must be finite and nonnegative")
        if np.any(self.capacity <= 0):
            raise ValueError("capacity must be strictly positive")
        return self


class Feasibility(NamedTuple):
    feasible: bool
    witness: tuple  # gateways whose demand exceeds the capacity they can reach


class Certificate(NamedTuple):
    """LP dual of the transportation problem.

    gateway_price is the free multiplier of each demand row, dc_rent the
    nonnegative multiplier of each capacity row.
    """
    gateway_price: np.ndarray
    dc_rent: np.ndarray

    def value(self, inst: TransportInstance) -> float:
        return float(self.gateway_price @ inst.demand - self.dc_rent @ inst.capacity)


def _tolerance(capacity: np.ndarray, demand: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(demand.sum()), float(capacity.max(initial=0.0)))


def priority_order(unit_cost: np.ndarray) -> np.ndarray:
    """DC indices sorted by (cost, index)."""
    return np.argsort(unit_cost, kind="stable")


def greedy_loads(unit_cost: np.ndarray, capacity: np.ndarray, total: np.ndarray) -> np.ndarray:
    """
    Optimal per-DC loads when every gateway may reach every DC.

    Fills DCs in (cost, index) order. Works on a single slot (cost of length N,
    scalar total) or a batch (cost T x N, total of length T).

    Args:
        unit_cost: Cost per MW, shape (N,) or (T, N)
        capacity: DC capacities, shape (N,) or matching unit_cost
        total: Total demand per slot

    Returns:
        Loads with the same shape as unit_cost
    """
    cost = np.atleast_2d(unit_cost)
    demand = np.atleast_1d(np.asarray(total, dtype=float))
    order = np.argsort(cost, axis=1, kind="stable")
    cap_sorted = np.take_along_axis(np.broadcast_to(capacity, cost.shape), order, axis=1)
    before = np.cumsum(cap_sorted, axis=1) - cap_sorted
    fill = np.clip(demand[:, None] - before, 0.0, cap_sorted)
    loads = np.empty_like(fill)
    np.put_along_axis(loads, order, fill, axis=1)
    return loads.reshape(np.shape(unit_cost))


def northwest_corner(order: np.ndarray, loads: np.ndarray, demand: np.ndarray) -> np.ndarray:
    """Split per-DC loads across gateways, DCs taken in `order` and gateways by index.

    Only valid when every gateway may reach every DC.
    """
    supply_hi = np.cumsum(loads[order])
    supply_lo = supply_hi - loads[order]
    demand_hi = np.cumsum(demand)
    demand_lo = demand_hi - demand
    overlap = np.minimum(supply_hi[:, None], demand_hi[None, :]) - np.maximum(supply_lo[:, None], demand_lo[None, :])
    x = np.zeros((order.size, demand.size))
    x[order] = np.maximum(overlap, 0.0)
    return x


def route_by_priority(rank: np.ndarray, capacity: np.ndarray, demand: np.ndarray,
                      mask: np.ndarray) -> np.ndarray:
    """
    Successive shortest paths with DC-side costs, driven by a priority rank.

    Gateways are served in index order. For each one, a BFS over the residual
    graph (forward edges along the mask, reverse edges where flow exists) finds
    the reachable DC with spare capacity and the smallest rank, and flow is
    pushed along the BFS path.

    Raises:
        InfeasibleError: witness is the set of gateways reachable from the
            gateway that could not be served
    """
    n, n_gw = mask.shape
    tol = _tolerance(capacity, demand)
    x = np.zeros((n, n_gw))
    residual = np.array(capacity, dtype=float)
    allowed = [np.flatnonzero(mask[:, j]) for j in range(n_gw)]

    for j in range(n_gw):
        remaining = float(demand[j])
        while remaining > tol:
            dc_parent = np.full(n, -1)
            gw_parent = np.full(n_gw, -1)
            gw_seen = np.zeros(n_gw, dtype=bool)
            dc_seen = np.zeros(n, dtype=bool)
            gw_seen[j] = True
            queue = deque([j])
            while queue:
                g = queue.popleft()
                for i in allowed[g]:
                    if dc_seen[i]:
                        continue
                    dc_seen[i] = True
                    dc_parent[i] = g
                    for k in np.flatnonzero(x[i] > tol):
                        if not gw_seen[k]:
                            gw_seen[k] = True
                            gw_parent[k] = i
                            queue.append(k)
            candidates = np.flatnonzero(dc_seen & (residual > tol))
            if candidates.size == 0:
                raise InfeasibleError(np.flatnonzero(gw_seen))
            outlet = int(candidates[np.argmin(rank[candidates])])

            # Walk back to gateway j collecting the path and its bottleneck.
            forward, backward = [], []
            amount = min(remaining, float(residual[outlet]))
            i = outlet
            while True:
                g = int(dc_parent[i])
                forward.append((i, g))
                if g == j:
                    break
                i_prev = int(gw_parent[g])
                amount = min(amount, float(x[i_prev, g]))
                backward.append((i_prev, g))
                i = i_prev
            for i, g in forward:
                x[i, g] += amount
            for i, g in backward:
                x[i, g] -= amount
            residual[outlet] -= amount
            remaining -= amount
    np.maximum(x, 0.0, out=x)
    return x


def solve(inst: TransportInstance) -> Decision:
    """
    Minimum-cost routing for one transport instance.

    Ties among equal-cost DCs go to the lowest DC index.

    Raises:
        InfeasibleError: when total demand exceeds the capacity reachable under the mask
    """
    order = priority_order(inst.unit_cost)
    if inst.mask.all():
        total = float(inst.demand.sum())
        if total > inst.capacity.sum() + _tolerance(inst.capacity, inst.demand):
            raise InfeasibleError(np.flatnonzero(inst.demand > 0), detail="total demand exceeds total capacity")
        loads = greedy_loads(inst.unit_cost, inst.capacity, total)
        return Decision(x=northwest_corner(order, loads, inst.demand))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return Decision(x=route_by_priority(rank, inst.capacity, inst.demand, inst.mask))


def check_feasible(inst: TransportInstance) -> Feasibility:
    """Max-flow feasibility test; cost-independent."""
    try:
        route_by_priority(np.arange(inst.capacity.size), inst.capacity, inst.demand, inst.mask)
    except InfeasibleError as exc:
        return Feasibility(False, exc.gateways)
    return Feasibility(True, ())


def objective(inst: TransportInstance, decision: Decision) -> float:
    return float(inst.unit_cost @ decision.load)


def certificate(inst: TransportInstance, decision: Decision, tol: Optional[float] = None) -> Certificate:
    """
    Dual prices proving optimality of a routing.

    Bellman-Ford potentials on the residual graph (gateways, DCs, sink) give a
    DC value q_i; gateway prices are the gateway potentials and the rent on a
    DC is max(q_i - c_i, 0). A routing is optimal exactly when the residual
    graph has no negative cycle, in which case the prices are dual feasible
    and complementary.
    """
    n, n_gw = inst.mask.shape
    if tol is None:
        tol = 1e-9 * max(1.0, float(inst.demand.max(initial=0.0)))
    x = decision.x
    load = x.sum(axis=1)
    cost = inst.unit_cost
    sink = n_gw + n
    edges = []
    for i in range(n):
        for j in np.flatnonzero(inst.mask[i]):
            edges.append((j, n_gw + i, 0.0))
            if x[i, j] > tol:
                edges.append((n_gw + i, j, 0.0))
        if load[i] < inst.capacity[i] - tol:
            edges.append((n_gw + i, sink, cost[i]))
        if load[i] > tol:
            edges.append((sink, n_gw + i, -cost[i]))

    dist = np.zeros(sink + 1)
    for _ in range(sink + 1):
        changed = False
        for u, v, w in edges:
            if dist[u] + w < dist[v] - 1e-15:
                dist[v] = dist[u] + w
                changed = True
        if not changed:
            break
    else:
        raise ValueError("routing is not optimal: residual graph has a negative cycle")

    dc_value = dist[sink] - dist[n_gw:sink]
    gateway_price = dist[sink] - dist[:n_gw]
    dc_rent = np.maximum(dc_value - cost, 0.0)
    return Certificate(gateway_price=gateway_price, dc_rent=dc_rent)
