"""
Orchestration of algorithm runs: single runs by name, the comparison suite and sweeps.
"""
import logging
import time
from datetime import datetime
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.src import baselines, eglb, offline
from app.src.config import DEFAULT_ETA, DEFAULT_MPC_WINDOW, OFFLINE_MAX_ITERS, OFFLINE_TOL
from app.src.errors import ConfigurationError
from app.src.metrics import comparison_frame, format_table
from app.src.model import EquitySpec, FleetSpec, SlotInput
from app.src.schemas import RunReport
from app.src.slot_solver import SlotSolver

logger = logging.getLogger(__name__)

ALGORITHMS = ("energy", "carbon", "water", "c2", "all", "nearest", "eglb", "eglb-off", "eglb-mpc")


def run_algorithm(name: str, trace: Sequence[SlotInput], spec: FleetSpec, config=None,
                  solver: Optional[SlotSolver] = None, **kwargs):
    """
    Run one algorithm by name.

    Args:
        name: One of ALGORITHMS
        trace: Slots
        spec: Fleet description
        config: RunConfig or EquitySpec; equity weights default to the configured mu
        solver: Primal step; homogeneous unless given
        **kwargs: eta and kappa_init (eglb), window (eglb-mpc), tol and max_iters (eglb-off, eglb-mpc),
            w_carbon and w_water (c2, all)

    Returns:
        (Schedule, RunReport)

    Raises:
        ConfigurationError: unknown algorithm or options it does not take
    """
    if name not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    trace = list(trace)
    if isinstance(config, eglb.RunConfig):
        equity = config.equity
    else:
        equity = config or baselines.default_equity(spec)

    if name == "eglb":
        if not isinstance(config, eglb.RunConfig):
            config = eglb.RunConfig.for_trace(trace, spec, equity, eta=kwargs.pop("eta", DEFAULT_ETA),
                                              kappa_init=kwargs.pop("kappa_init", None), solver=solver)
        _reject(name, kwargs)
        return eglb.run(trace, spec, config, solver=solver)
    if name == "eglb-off":
        tol = kwargs.pop("tol", OFFLINE_TOL)
        max_iters = kwargs.pop("max_iters", OFFLINE_MAX_ITERS)
        _reject(name, kwargs)
        return offline.run_offline(trace, spec, equity, tol=tol, max_iters=max_iters, solver=solver)
    if name == "eglb-mpc":
        window = kwargs.pop("window", DEFAULT_MPC_WINDOW)
        tol = kwargs.pop("tol", OFFLINE_TOL)
        max_iters = kwargs.pop("max_iters", None)
        _reject(name, kwargs)
        return offline.run_mpc(trace, spec, equity, window=window, tol=tol, max_iters=max_iters, solver=solver)
    if name in ("c2", "all"):
        runner = baselines.run_c2 if name == "c2" else baselines.run_all
        weights = {k: kwargs.pop(k) for k in ("w_carbon", "w_water") if k in kwargs}
        if name == "c2" and "w_water" in weights:
            raise ConfigurationError("c2 takes no water weight")
        _reject(name, kwargs)
        return runner(trace, spec, equity=equity, solver=solver, **weights)

    _reject(name, kwargs)
    runner = {
        "energy": baselines.run_energy,
        "carbon": baselines.run_carbon,
        "water": baselines.run_water,
        "nearest": baselines.run_nearest,
    }[name]
    return runner(trace, spec, equity=equity, solver=solver)


def _reject(name: str, kwargs: dict) -> None:
    if kwargs:
        raise ConfigurationError(f"{name} does not take options {sorted(kwargs)}")


def check_weighted_baselines(reports: Dict[str, RunReport]) -> Dict[str, bool]:
    """
    Whether GLB-C2 and GLB-All beat eGLB-Off on total footprints.

    GLB-C2 must emit less carbon; GLB-All must emit less carbon and use less
    water. Weights failing this are not a meaningful comparison point.

    Returns:
        Mapping from baseline name to the outcome; empty without eglb-off
    """
    reference = reports.get("eglb-off")
    if reference is None:
        return {}
    outcome = {}
    if "c2" in reports:
        outcome["c2"] = reports["c2"].carbon.total < reference.carbon.total
    if "all" in reports:
        rep = reports["all"]
        outcome["all"] = rep.carbon.total < reference.carbon.total and rep.water.total < reference.water.total
    for name, passed in outcome.items():
        if not passed:
            logger.warning(f"GLB-{name.upper() if name == 'c2' else 'All'} weights do not reduce "
                           f"total footprints below eGLB-Off; consider larger weights")
    return outcome


class ComparisonSuite:
    """Runs every algorithm on one trace and collects their reports."""

    def __init__(self, trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec,
                 eta: float = DEFAULT_ETA, window: int = DEFAULT_MPC_WINDOW,
                 algorithms: Iterable[str] = ALGORITHMS, solver: Optional[SlotSolver] = None,
                 kappa_init: Optional[np.ndarray] = None):
        """
        Initialize the comparison suite.

        Args:
            trace: Slots
            spec: Fleet description
            equity: Weights used by eGLB variants and for every objective value
            eta: eGLB learning rate
            window: eGLB-MPC window
            algorithms: Names to run, in order
            solver: Primal step shared by all runs
            kappa_init: Initial eGLB multipliers, zero unless given
        """
        self.trace = list(trace)
        self.spec = spec
        self.equity = equity
        self.eta = eta
        self.window = window
        self.algorithms = tuple(algorithms)
        self.solver = solver
        self.kappa_init = kappa_init
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigurationError(f"unknown algorithms {unknown}")
        logger.info(f"Comparison suite initialized with {len(self.algorithms)} algorithms, "
                    f"{len(self.trace)} slots")

    def _options(self, name: str) -> dict:
        if name == "eglb":
            return {"eta": self.eta, "kappa_init": self.kappa_init}
        if name == "eglb-mpc":
            return {"window": self.window}
        return {}

    def run(self) -> Dict[str, Tuple[object, RunReport]]:
        """Run every algorithm in order; returns name -> (Schedule, RunReport)."""
        start_time = datetime.now()
        logger.info(f"=== Comparison started at {start_time} ===")
        results = {}
        for step, name in enumerate(self.algorithms, start=1):
            logger.info(f"Step {step}/{len(self.algorithms)}: running {name}...")
            started = time.perf_counter()
            results[name] = run_algorithm(name, self.trace, self.spec, self.equity,
                                          solver=self.solver, **self._options(name))
            logger.info(f"{name} done in {time.perf_counter() - started:.2f}s, "
                        f"objective {results[name][1].objective:.6g}")
        check_weighted_baselines({name: rep for name, (_, rep) in results.items()})
        duration = (datetime.now() - start_time).total_seconds()
        logger.info(f"=== Comparison completed in {duration:.2f} seconds ===")
        return results


def compare(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec, eta: float = DEFAULT_ETA,
            window: int = DEFAULT_MPC_WINDOW, algorithms: Iterable[str] = ALGORITHMS,
            solver: Optional[SlotSolver] = None,
            kappa_init: Optional[np.ndarray] = None) -> Tuple[Dict[str, RunReport], pd.DataFrame, str]:
    """
    Run the comparison suite once.

    Returns:
        (reports by algorithm, comparison frame, text table)
    """
    results = ComparisonSuite(trace, spec, equity, eta, window, algorithms, solver, kappa_init).run()
    reports = {name: rep for name, (_, rep) in results.items()}
    return reports, comparison_frame(reports), format_table(reports)


def _sweep_row(report: RunReport) -> dict:
    return {
        "objective": report.objective,
        "energy_cost_avg": report.energy_cost_avg,
        "carbon_max": report.carbon.max,
        "carbon_max_over_avg": report.carbon.max_over_avg,
        "water_max": report.water.max,
        "water_max_over_avg": report.water.max_over_avg,
    }


def sweep_eta(trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec, etas: Iterable[float],
              solver: Optional[SlotSolver] = None,
              kappa_init: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    eGLB once per learning rate.

    Returns:
        One row per eta: objective, average energy cost, max and max/avg footprints
    """
    trace = list(trace)
    rows = []
    for eta in etas:
        logger.info(f"Sweep: eta = {eta:g}")
        config = eglb.RunConfig.for_trace(trace, spec, equity, eta=float(eta),
                                          kappa_init=kappa_init, solver=solver)
        _, report = eglb.run(trace, spec, config, solver=solver)
        rows.append({"eta": float(eta), **_sweep_row(report)})
    return pd.DataFrame(rows)


def sweep_weights(trace: Sequence[SlotInput], spec: FleetSpec, weights: Iterable[Tuple[float, float]],
                  eta: float = DEFAULT_ETA, algorithms: Iterable[str] = ("eglb", "eglb-off"),
                  solver: Optional[SlotSolver] = None, calibrate_units: bool = False) -> pd.DataFrame:
    """
    eGLB variants once per (mu_carbon, mu_water) pair, with uniform slopes.

    With `calibrate_units` the multiplier units are re-fit to each pair at `eta`.

    Returns:
        One row per (algorithm, weights) pair
    """
    trace = list(trace)
    rows = []
    for mu_carbon, mu_water in weights:
        equity = EquitySpec.uniform(spec.n_datacenters, mu_carbon, mu_water)
        if calibrate_units:
            equity, _ = eglb.calibrate(trace, spec, equity, eta=eta, solver=solver)
        for name in algorithms:
            logger.info(f"Sweep: {name} with mu_carbon = {mu_carbon:g}, mu_water = {mu_water:g}")
            options = {"eta": eta} if name == "eglb" else {}
            _, report = run_algorithm(name, trace, spec, equity, solver=solver, **options)
            rows.append({"algorithm": name, "mu_carbon": mu_carbon, "mu_water": mu_water, **_sweep_row(report)})
    return pd.DataFrame(rows)
