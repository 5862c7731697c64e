"""
Domain types and per-slot cost functions for equity-aware geographical load balancing.

Units are fixed throughout the package: load in MW, energy in MWh, money in USD,
carbon in ton and water in m3 (1 L/kWh is exactly 1 m3/MWh).
"""
import logging
from enum import Enum
from typing import NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.src.config import FEASIBILITY_TOL

logger = logging.getLogger(__name__)


def as_vector(value, dtype=float) -> np.ndarray:
    """Copy a sequence into a read-only 1-D array."""
    array = np.array(value, dtype=dtype)
    if array.ndim != 1:
        raise ValueError(f"expected a vector, got shape {array.shape}")
    array.setflags(write=False)
    return array


def as_matrix(value, dtype=float) -> np.ndarray:
    """Copy a nested sequence into a read-only 2-D array."""
    array = np.array(value, dtype=dtype)
    if array.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {array.shape}")
    array.setflags(write=False)
    return array


def _check_nonnegative(name: str, array: np.ndarray) -> None:
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be finite")
    if np.any(array < 0):
        raise ValueError(f"{name} must be nonnegative")


class NumericModel(BaseModel):
    """Base for immutable models holding numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class SizingMode(str, Enum):
    """How the powered fraction of a cluster follows its load."""
    PERFECT_RIGHT_SIZE = "perfect_right_size"
    ALWAYS_ON = "always_on"


class EnergyModel(NumericModel):
    """Per-DC server energy: static part scaled by rho plus a load-proportional part."""
    static_energy: np.ndarray = Field(..., description="MWh per slot at rho=1")
    dynamic_energy: np.ndarray = Field(..., description="MWh per slot at full utilization")
    sizing_mode: SizingMode = SizingMode.PERFECT_RIGHT_SIZE

    @field_validator("static_energy", "dynamic_energy", mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        if self.static_energy.shape != self.dynamic_energy.shape:
            raise ValueError("static_energy and dynamic_energy must have the same length")
        _check_nonnegative("static_energy", self.static_energy)
        if not np.all(self.dynamic_energy > 0):
            raise ValueError("dynamic_energy must be strictly positive")
        return self


class FleetSpec(NumericModel):
    """Static description of data centers, gateways and their connectivity."""
    capacity: np.ndarray = Field(..., description="M_i, MW of server power")
    connectivity: np.ndarray = Field(..., description="N x J, True where gateway j may route to DC i")
    energy_model: EnergyModel
    nearest_map: np.ndarray = Field(..., description="nearest DC index per gateway")
    slot_hours: float = Field(1.0, gt=0, description="duration of one slot in hours")

    @field_validator("capacity", mode="before")
    @classmethod
    def _capacity(cls, value):
        return as_vector(value)

    @field_validator("connectivity", mode="before")
    @classmethod
    def _connectivity(cls, value):
        return as_matrix(value, dtype=bool)

    @field_validator("nearest_map", mode="before")
    @classmethod
    def _nearest(cls, value):
        return as_vector(value, dtype=np.int64)

    @model_validator(mode="after")
    def _check(self):
        n, j = self.connectivity.shape
        if self.capacity.shape != (n,):
            raise ValueError(f"capacity has length {self.capacity.size}, expected {n}")
        if not np.all(self.capacity > 0):
            raise ValueError("capacity must be strictly positive")
        if self.energy_model.static_energy.shape != (n,):
            raise ValueError("energy model length does not match the number of data centers")
        if not np.all(self.connectivity.any(axis=0)):
            orphans = np.flatnonzero(~self.connectivity.any(axis=0)).tolist()
            raise ValueError(f"gateways {orphans} have no allowed data center")
        if self.nearest_map.shape != (j,):
            raise ValueError(f"nearest_map has length {self.nearest_map.size}, expected {j}")
        if np.any(self.nearest_map < 0) or np.any(self.nearest_map >= n):
            raise ValueError("nearest_map holds an out-of-range data center index")
        allowed = self.connectivity[self.nearest_map, np.arange(j)]
        if not np.all(allowed):
            bad = np.flatnonzero(~allowed).tolist()
            raise ValueError(f"nearest_map violates connectivity for gateways {bad}")
        return self

    @property
    def n_datacenters(self) -> int:
        return int(self.connectivity.shape[0])

    @property
    def n_gateways(self) -> int:
        return int(self.connectivity.shape[1])

    @property
    def fully_flexible(self) -> bool:
        return bool(self.connectivity.all())


class SlotInput(NumericModel):
    """Exogenous inputs revealed at one time slot."""
    t: int = Field(..., ge=0)
    load: np.ndarray = Field(..., description="lambda_j, MW per gateway")
    price: np.ndarray = Field(..., description="USD/MWh")
    pue: np.ndarray = Field(..., description="gamma, dimensionless")
    carbon_intensity: np.ndarray = Field(..., description="ton/MWh")
    wue_direct: np.ndarray = Field(..., description="epsilon, m3/MWh of server energy")
    wue_indirect: np.ndarray = Field(..., description="beta, m3/MWh of facility energy")

    @field_validator("load", "price", "pue", "carbon_intensity", "wue_direct", "wue_indirect",
                     mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        n = self.price.size
        for name in ("pue", "carbon_intensity", "wue_direct", "wue_indirect"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} has length {getattr(self, name).size}, expected {n}")
        for name in ("load", "price", "pue", "carbon_intensity", "wue_direct", "wue_indirect"):
            _check_nonnegative(name, getattr(self, name))
        return self

    def check_dimensions(self, spec: FleetSpec) -> None:
        if self.price.size != spec.n_datacenters or self.load.size != spec.n_gateways:
            raise ValueError(
                f"slot {self.t} has {self.price.size} DCs / {self.load.size} gateways, "
                f"fleet has {spec.n_datacenters} / {spec.n_gateways}"
            )


class EquitySpec(NumericModel):
    """Linear equity penalties H_i(v) = theta_i * v and their weights."""
    theta_carbon: np.ndarray = Field(..., description="USD/ton slope per DC")
    theta_water: np.ndarray = Field(..., description="USD/m3 slope per DC")
    mu_carbon: float = Field(..., ge=0)
    mu_water: float = Field(..., ge=0)
    normalize_by_capacity: bool = False
    carbon_unit: float = Field(1.0, gt=0, description="footprint multiplier for the carbon multipliers")
    water_unit: float = Field(1.0, gt=0, description="footprint multiplier for the water multipliers")

    @field_validator("theta_carbon", "theta_water", mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        if self.theta_carbon.shape != self.theta_water.shape:
            raise ValueError("theta_carbon and theta_water must have the same length")
        _check_nonnegative("theta_carbon", self.theta_carbon)
        _check_nonnegative("theta_water", self.theta_water)
        return self

    @classmethod
    def uniform(cls, n_datacenters: int, mu_carbon: float, mu_water: float,
                theta: float = 1.0, normalize_by_capacity: bool = False) -> "EquitySpec":
        return cls(
            theta_carbon=np.full(n_datacenters, theta),
            theta_water=np.full(n_datacenters, theta),
            mu_carbon=mu_carbon,
            mu_water=mu_water,
            normalize_by_capacity=normalize_by_capacity,
        )

    def scale(self, spec: FleetSpec) -> np.ndarray:
        """Multiplier taking raw footprints into the space the H functions see."""
        if self.normalize_by_capacity:
            return 1.0 / spec.capacity
        return np.ones(spec.n_datacenters)

    # The units only change the coordinates the multipliers live in: footprints
    # are multiplied by the unit and the slopes divided by it, so
    # theta * footprint (and the objective) is unchanged.

    def carbon_scale(self, spec: FleetSpec) -> np.ndarray:
        return self.scale(spec) * self.carbon_unit

    def water_scale(self, spec: FleetSpec) -> np.ndarray:
        return self.scale(spec) * self.water_unit

    @property
    def carbon_slope(self) -> np.ndarray:
        """theta_carbon in multiplier units."""
        return self.theta_carbon / self.carbon_unit

    @property
    def water_slope(self) -> np.ndarray:
        return self.theta_water / self.water_unit

    @property
    def theta_max(self) -> float:
        """Largest slope of any H, in multiplier units."""
        return float(max(self.carbon_slope.max(initial=0.0), self.water_slope.max(initial=0.0)))


class Decision(NumericModel):
    """Routing matrix x(t): MW sent from gateway j (column) to DC i (row)."""
    x: np.ndarray

    @field_validator("x", mode="before")
    @classmethod
    def _matrix(cls, value):
        return as_matrix(value)

    @model_validator(mode="after")
    def _check(self):
        if not np.all(np.isfinite(self.x)) or np.any(self.x < 0):
            raise ValueError("routing entries must be finite and nonnegative")
        return self

    @property
    def load(self) -> np.ndarray:
        """Per-DC assigned load."""
        return self.x.sum(axis=1)

    def violations(self, spec: FleetSpec, demand: np.ndarray, tol: float = FEASIBILITY_TOL) -> list:
        """List human-readable feasibility violations (empty when feasible)."""
        problems = []
        if self.x.shape != spec.connectivity.shape:
            return [f"shape {self.x.shape} != {spec.connectivity.shape}"]
        masked = self.x[~spec.connectivity]
        if masked.size and masked.max() > 0:
            problems.append("load routed over a forbidden gateway/DC pair")
        served = self.x.sum(axis=0)
        gap = np.abs(served - demand)
        if np.any(gap > tol * np.maximum(demand, 1.0)):
            problems.append(f"gateway demand not met: max deviation {gap.max():.3g} MW")
        over = self.load - spec.capacity
        if np.any(over > tol):
            problems.append(f"capacity exceeded by {over.max():.3g} MW")
        return problems

    def is_feasible(self, spec: FleetSpec, demand: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return not self.violations(spec, demand, tol)


class CostFactors(NamedTuple):
    """Per-MWh-of-server-energy multipliers for one slot."""
    energy: np.ndarray  # p * gamma, USD/MWh
    carbon: np.ndarray  # alpha * gamma, ton/MWh
    water: np.ndarray   # epsilon + beta * gamma, m3/MWh


class Marginals(NamedTuple):
    """Slopes of the slot costs with respect to per-DC load."""
    energy: np.ndarray  # USD/MW
    carbon: np.ndarray  # ton/MW
    water: np.ndarray   # m3/MW


def _routing(x: Union[Decision, np.ndarray]) -> np.ndarray:
    return x.x if isinstance(x, Decision) else np.asarray(x, dtype=float)


def static_energy(spec: FleetSpec) -> np.ndarray:
    """Energy incurred regardless of routing (the rho=1 term under AlwaysOn)."""
    model = spec.energy_model
    if model.sizing_mode is SizingMode.ALWAYS_ON:
        return np.asarray(model.static_energy)
    return np.zeros(spec.n_datacenters)


def energy_slope(spec: FleetSpec) -> np.ndarray:
    """d e_i / d load_i in MWh per MW."""
    model = spec.energy_model
    if model.sizing_mode is SizingMode.ALWAYS_ON:
        return model.dynamic_energy / spec.capacity
    return (model.dynamic_energy + model.static_energy) / spec.capacity


def max_server_energy(spec: FleetSpec) -> np.ndarray:
    """Server energy with every DC running at full capacity."""
    return static_energy(spec) + spec.capacity * energy_slope(spec)


def server_energy_from_load(spec: FleetSpec, load: np.ndarray) -> np.ndarray:
    """Server energy for per-DC loads; broadcasts over leading axes."""
    return static_energy(spec) + load * energy_slope(spec)


def server_energy(spec: FleetSpec, x: Union[Decision, np.ndarray]) -> np.ndarray:
    """
    Per-DC server energy e_i(x) for one slot.

    Args:
        spec: Fleet description
        x: Routing decision (N x J)

    Returns:
        Vector of MWh, one entry per data center
    """
    routing = _routing(x)
    if routing.shape != spec.connectivity.shape:
        raise ValueError(f"routing shape {routing.shape} does not match fleet {spec.connectivity.shape}")
    return server_energy_from_load(spec, routing.sum(axis=1))


def cost_factors(slot: SlotInput) -> CostFactors:
    return CostFactors(
        energy=slot.price * slot.pue,
        carbon=slot.carbon_intensity * slot.pue,
        water=slot.wue_direct + slot.wue_indirect * slot.pue,
    )


def energy_cost(spec: FleetSpec, slot: SlotInput, x: Union[Decision, np.ndarray]) -> float:
    """Total energy cost g_t = sum_i p_i * gamma_i * e_i(x) in USD."""
    slot.check_dimensions(spec)
    return float(np.sum(cost_factors(slot).energy * server_energy(spec, x)))


def carbon_footprint(spec: FleetSpec, slot: SlotInput, x: Union[Decision, np.ndarray]) -> np.ndarray:
    """Per-DC carbon footprint alpha_i * gamma_i * e_i(x) in ton."""
    slot.check_dimensions(spec)
    return cost_factors(slot).carbon * server_energy(spec, x)


def water_footprint(spec: FleetSpec, slot: SlotInput, x: Union[Decision, np.ndarray]) -> np.ndarray:
    """Per-DC water footprint (epsilon_i + beta_i * gamma_i) * e_i(x) in m3.

    Direct WUE multiplies server energy only; PUE enters through the indirect term.
    """
    slot.check_dimensions(spec)
    return cost_factors(slot).water * server_energy(spec, x)


def marginal_coefficients(spec: FleetSpec, slot: SlotInput) -> Marginals:
    """Slopes of energy cost, carbon and water with respect to per-DC load."""
    slot.check_dimensions(spec)
    factors = cost_factors(slot)
    slope = energy_slope(spec)
    return Marginals(
        energy=factors.energy * slope,
        carbon=factors.carbon * slope,
        water=factors.water * slope,
    )
