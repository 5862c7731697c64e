"""
Evaluation metrics and the equity-aware objective of a finished schedule.
"""
import logging
from typing import Dict, Sequence, Tuple

import numpy as np
import pandas as pd

from app.src.model import EquitySpec, FleetSpec, SlotInput, cost_factors
from app.src.schemas import FootprintSummary, RunReport

logger = logging.getLogger(__name__)


def slot_costs(schedule, trace: Sequence[SlotInput]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-slot energy cost and per-slot, per-DC raw footprints of a schedule.

    Returns:
        (energy cost T, carbon T x N, water T x N)
    """
    if schedule.n_slots == 0:
        raise ValueError("schedule is empty")
    if len(trace) != schedule.n_slots:
        raise ValueError(f"schedule has {schedule.n_slots} slots, trace has {len(trace)}")
    factors = [cost_factors(slot) for slot in trace]
    energy = schedule.server_energy
    energy_factor = np.stack([f.energy for f in factors])
    carbon = np.stack([f.carbon for f in factors]) * energy
    water = np.stack([f.water for f in factors]) * energy
    return (energy_factor * energy).sum(axis=1), carbon, water


def equity_objective(operational: np.ndarray, carbon: np.ndarray, water: np.ndarray,
                     spec: FleetSpec, equity: EquitySpec) -> float:
    """
    Time-averaged operational cost plus mu-weighted worst-region penalties.

    Args:
        operational: Per-slot energy (plus performance) cost, length T
        carbon: Raw carbon footprints, T x N
        water: Raw water footprints, T x N

    Returns:
        mean(operational) + mu_c * max_i theta_c,i * mean_t(carbon_i * s_i) + same for water
    """
    scale = equity.scale(spec)
    avg_carbon = carbon.mean(axis=0) * scale
    avg_water = water.mean(axis=0) * scale
    return (
        float(np.mean(operational))
        + equity.mu_carbon * float(np.max(equity.theta_carbon * avg_carbon))
        + equity.mu_water * float(np.max(equity.theta_water * avg_water))
    )


def objective(schedule, trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec) -> float:
    energy_cost, carbon, water = slot_costs(schedule, trace)
    return equity_objective(energy_cost + schedule.performance_cost, carbon, water, spec, equity)


def summarize(per_dc: np.ndarray) -> FootprintSummary:
    total = float(per_dc.sum())
    avg = total / per_dc.size
    peak = float(per_dc.max())
    return FootprintSummary(
        per_dc=[float(v) for v in per_dc],
        total=total,
        avg=avg,
        max=peak,
        max_over_avg=peak / avg if avg > 0 else 1.0,
    )


def report(schedule, trace: Sequence[SlotInput], spec: FleetSpec, equity: EquitySpec) -> RunReport:
    """
    Build the run report of a schedule.

    Args:
        schedule: Decisions and per-slot energy of one algorithm
        trace: The slots the schedule was computed on
        spec: Fleet description
        equity: Weights used for the objective value

    Returns:
        RunReport with energy cost, footprint summaries and the objective
    """
    energy_cost, carbon, water = slot_costs(schedule, trace)
    n = spec.n_datacenters
    total_cost = float(energy_cost.sum())
    return RunReport(
        algorithm=schedule.algorithm,
        n_slots=schedule.n_slots,
        n_datacenters=n,
        energy_cost_total=total_cost,
        energy_cost_avg=total_cost / n,
        energy_cost_per_slot=[float(v) for v in energy_cost],
        performance_cost=float(schedule.performance_cost.sum()),
        carbon=summarize(carbon.sum(axis=0)),
        water=summarize(water.sum(axis=0)),
        objective=equity_objective(energy_cost + schedule.performance_cost, carbon, water, spec, equity),
    )


def comparison_frame(reports: Dict[str, RunReport]) -> pd.DataFrame:
    """Rows per metric, one column per algorithm."""
    rows = {}
    for name, rep in reports.items():
        rows[name] = {
            ("energy", "avg"): rep.energy_cost_avg,
            ("water", "avg"): rep.water.avg,
            ("water", "max"): rep.water.max,
            ("water", "max/avg"): rep.water.max_over_avg,
            ("carbon", "avg"): rep.carbon.avg,
            ("carbon", "max"): rep.carbon.max,
            ("carbon", "max/avg"): rep.carbon.max_over_avg,
            ("objective", "value"): rep.objective,
        }
    frame = pd.DataFrame(rows)
    frame.index = pd.MultiIndex.from_tuples(frame.index, names=["metric", "stat"])
    return frame


def format_table(reports: Dict[str, RunReport]) -> str:
    """Aligned text table, metrics as rows and algorithms as columns."""
    frame = comparison_frame(reports)
    header = ["metric", "stat"] + list(frame.columns)
    lines = []
    for (metric, stat), values in frame.iterrows():
        lines.append([metric, stat] + [_format_number(v) for v in values])
    widths = [max(len(str(row[k])) for row in [header] + lines) for k in range(len(header))]

    def render(row):
        return "  ".join(str(cell).rjust(width) for cell, width in zip(row, widths))

    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([render(header), rule] + [render(row) for row in lines])


def _format_number(value: float) -> str:
    if abs(value) >= 100:
        return f"{value:.1f}"
    return f"{value:.4g}" if abs(value) < 10 else f"{value:.2f}"
