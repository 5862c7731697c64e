"""
Dual state and the mirror-descent step on the equity multipliers.

The multiplier vector stacks the carbon block (first N entries) on the water
block (last N entries).
"""
import logging
from enum import Enum

import numpy as np
from pydantic import field_validator, model_validator

from app.src.errors import ConfigurationError
from app.src.model import NumericModel, as_vector

logger = logging.getLogger(__name__)


class ReferenceFunction(str, Enum):
    """Mirror map used by the dual update. Only h(a) = 0.5 * ||a||^2 is supported."""
    QUADRATIC = "quadratic"


def mirror_map(reference: ReferenceFunction, a: np.ndarray) -> float:
    if reference is ReferenceFunction.QUADRATIC:
        return 0.5 * float(a @ a)
    raise ConfigurationError(f"unsupported reference function {reference}")


def mirror_map_grad(reference: ReferenceFunction, a: np.ndarray) -> np.ndarray:
    if reference is ReferenceFunction.QUADRATIC:
        return np.asarray(a, dtype=float)
    raise ConfigurationError(f"unsupported reference function {reference}")


def bregman_divergence(reference: ReferenceFunction, a: np.ndarray, b: np.ndarray) -> float:
    """V_h(a, b) = h(a) - h(b) - grad h(b)^T (a - b)."""
    return mirror_map(reference, a) - mirror_map(reference, b) - float(mirror_map_grad(reference, b) @ (a - b))


class DualState(NumericModel):
    kappa: np.ndarray
    eta: float
    reference: ReferenceFunction = ReferenceFunction.QUADRATIC

    @field_validator("kappa", mode="before")
    @classmethod
    def _vector(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        if self.kappa.size % 2:
            raise ValueError("kappa must stack two blocks of equal length")
        if not np.all(np.isfinite(self.kappa)) or np.any(self.kappa < 0):
            raise ValueError("kappa must be finite and nonnegative")
        return self

    @classmethod
    def zeros(cls, n_datacenters: int, eta: float) -> "DualState":
        check_learning_rate(eta)
        return cls(kappa=np.zeros(2 * n_datacenters), eta=eta)

    @property
    def n_datacenters(self) -> int:
        return self.kappa.size // 2

    @property
    def kappa_carbon(self) -> np.ndarray:
        return self.kappa[: self.n_datacenters]

    @property
    def kappa_water(self) -> np.ndarray:
        return self.kappa[self.n_datacenters:]


def check_learning_rate(eta: float) -> None:
    if not np.isfinite(eta) or eta <= 0:
        raise ConfigurationError(f"learning rate must be a positive finite number, got {eta}")


def subgradient(z_carbon: np.ndarray, z_water: np.ndarray,
                carbon: np.ndarray, water: np.ndarray) -> np.ndarray:
    """
    Stochastic subgradient of the dual objective at the current slot.

    Args:
        z_carbon: Auxiliary carbon variables
        z_water: Auxiliary water variables
        carbon: Realized carbon footprints (equity space)
        water: Realized water footprints (equity space)

    Returns:
        d = [z_c; z_w] - [carbon; water]
    """
    n = len(z_carbon)
    if len(z_water) != n or len(carbon) != n or len(water) != n:
        raise ValueError("subgradient blocks must all have the same length")
    return np.concatenate((np.asarray(z_carbon) - carbon, np.asarray(z_water) - water))


def update(state: DualState, d: np.ndarray) -> DualState:
    """
    One mirror-descent step.

    With the quadratic reference the Bregman-projected step
    argmin_{k >= 0} <d, k> + V_h(k, kappa) / eta has the closed form
    max(kappa - eta * d, 0).
    """
    check_learning_rate(state.eta)
    d = np.asarray(d, dtype=float)
    if d.shape != state.kappa.shape:
        raise ValueError(f"subgradient has shape {d.shape}, expected {state.kappa.shape}")
    if state.reference is not ReferenceFunction.QUADRATIC:
        raise ConfigurationError(f"unsupported reference function {state.reference}")
    kappa = np.maximum(state.kappa - state.eta * d, 0.0)
    return DualState(kappa=kappa, eta=state.eta, reference=state.reference)
