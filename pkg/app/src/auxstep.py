"""
Exact minimizer of mu * max_i(theta_i z_i) - kappa^T z over the box [0, zbar].
"""
import logging
from typing import NamedTuple, Tuple

import numpy as np
from pydantic import field_validator, model_validator

from app.src.model import NumericModel, as_vector

logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


class AuxBlock(NumericModel):
    """One equity block (carbon or water) of the auxiliary step."""
    mu: float
    theta: np.ndarray
    kappa: np.ndarray
    zbar: np.ndarray

    @field_validator("theta", "kappa", "zbar", mode="before")
    @classmethod
    def _vectors(cls, value):
        return as_vector(value)

    @model_validator(mode="after")
    def _check(self):
        n = self.theta.size
        if self.kappa.size != n or self.zbar.size != n:
            raise ValueError("theta, kappa and zbar must have the same length")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        for name in ("theta", "kappa", "zbar"):
            values = getattr(self, name)
            if not np.all(np.isfinite(values)) or np.any(values < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        return self


class AuxSolution(NamedTuple):
    z_carbon: np.ndarray
    z_water: np.ndarray
    value: float


def block_value(mu: float, theta: np.ndarray, kappa: np.ndarray, z: np.ndarray) -> float:
    peak = float(np.max(theta * z)) if z.size else 0.0
    return mu * peak - float(kappa @ z)


def minimize_box(mu: float, theta: np.ndarray, kappa: np.ndarray,
                 zbar: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Breakpoint scan over the common max-level m.

    For a trial level m every component with kappa_i > 0 rises to
    min(zbar_i, m / theta_i); components with kappa_i = 0 stay at 0 and
    components with theta_i = 0 saturate at zbar_i. The objective along this
    path is convex piecewise linear in m with kinks at theta_i * zbar_i, so the
    minimum sits at 0 or at one of those kinks. Ties go to the smaller m.

    Returns:
        (z, value)
    """
    active = kappa > 0
    z = np.zeros_like(zbar, dtype=float)
    free = active & (theta == 0)
    z[free] = zbar[free]
    ranked = active & (theta > 0)
    if not ranked.any():
        return z, block_value(mu, theta, kappa, z)

    th, kp, zb = theta[ranked], kappa[ranked], zbar[ranked]
    levels = np.concatenate(([0.0], np.sort(th * zb)))
    # levels x components
    path = np.minimum(zb[None, :], levels[:, None] / th[None, :])
    values = mu * levels - path @ kp
    best = values.min()
    pick = int(np.flatnonzero(values <= best + TIE_TOL * max(1.0, abs(best)))[0])
    z[ranked] = path[pick]
    return z, block_value(mu, theta, kappa, z)


def minimize_block(block: AuxBlock) -> Tuple[np.ndarray, float]:
    """
    Solve one auxiliary block exactly.

    Args:
        block: Validated block data

    Returns:
        Minimizing z in [0, zbar] and the attained objective value
    """
    return minimize_box(block.mu, block.theta, block.kappa, block.zbar)


def minimize_aux(carbon: AuxBlock, water: AuxBlock) -> AuxSolution:
    """The carbon and water blocks share no variables, so they are solved separately."""
    z_c, v_c = minimize_block(carbon)
    z_w, v_w = minimize_block(water)
    return AuxSolution(z_carbon=z_c, z_water=z_w, value=v_c + v_w)
