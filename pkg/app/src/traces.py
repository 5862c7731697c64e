"""
Trace loading, saving, augmentation and synthesis.

A trace directory holds five long-format CSV files plus an optional trace.json:

    workloads.csv      t,gateway,load_mw
    datacenters.csv    t,dc,price_usd_per_mwh,pue,carbon_ton_per_mwh,wue_direct_m3_per_mwh,wue_indirect_m3_per_mwh
    fleet.csv          dc,capacity_mw,static_energy_mwh,dynamic_energy_mwh
    connectivity.csv   dc,gateway,allowed
    nearest.csv        gateway,dc

Floats are written in shortest round-trip form and read back with pandas'
round-trip parser, so load(save(trace)) reproduces every value bit for bit.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import Field, ValidationError, model_validator

from app.src.config import AUGMENT_PERTURBATION, DEFAULT_SEED
from app.src.errors import InfeasibleError, TraceFormatError
from app.src.locations import full_flexibility, partial_flexibility
from app.src.model import EnergyModel, FleetSpec, NumericModel, SizingMode, SlotInput
from app.src.schemas import SynthProfile, TraceMetadata
from app.src.transport import TransportInstance, check_feasible
from app.src.validation import find_invalid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

COLUMNS = {
    "workloads.csv": ["t", "gateway", "load_mw"],
    "datacenters.csv": ["t", "dc", "price_usd_per_mwh", "pue", "carbon_ton_per_mwh",
                        "wue_direct_m3_per_mwh", "wue_indirect_m3_per_mwh"],
    "fleet.csv": ["dc", "capacity_mw", "static_energy_mwh", "dynamic_energy_mwh"],
    "connectivity.csv": ["dc", "gateway", "allowed"],
    "nearest.csv": ["gateway", "dc"],
}
METADATA_FILE = "trace.json"

# Slot series stored in datacenters.csv, keyed by SlotInput field.
SLOT_SERIES = {
    "price": "price_usd_per_mwh",
    "pue": "pue",
    "carbon_intensity": "carbon_ton_per_mwh",
    "wue_direct": "wue_direct_m3_per_mwh",
    "wue_indirect": "wue_indirect_m3_per_mwh",
}


class Trace(NumericModel):
    """Slots of exogenous inputs over a fixed fleet."""
    slots: Tuple[SlotInput, ...]
    fleet: FleetSpec
    provenance: str = Field("", description="Where the trace came from")

    @model_validator(mode="after")
    def _check(self):
        if not self.slots:
            raise ValueError("a trace needs at least one slot")
        for slot in self.slots:
            slot.check_dimensions(self.fleet)
        steps = np.diff([slot.t for slot in self.slots])
        if np.any(steps <= 0):
            raise ValueError("slot indices must be strictly increasing")
        return self

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def select(self, start: int, stop: int) -> "Trace":
        return Trace(slots=self.slots[start:stop], fleet=self.fleet, provenance=self.provenance)


def check_slots_feasible(slots: Sequence[SlotInput], fleet: FleetSpec) -> None:
    """
    Raise InfeasibleError for the first slot no routing can serve.

    Raises:
        InfeasibleError: carrying the slot index and the violating gateway set
    """
    zeros = np.zeros(fleet.n_datacenters)
    for slot in slots:
        inst = TransportInstance(unit_cost=zeros, capacity=fleet.capacity, demand=slot.load,
                                 mask=fleet.connectivity)
        result = check_feasible(inst)
        if not result.feasible:
            raise InfeasibleError(result.witness, slot=slot.t)


# ========== LOADING ==========

def _read(directory: Path, name: str) -> pd.DataFrame:
    path = directory / name
    if not path.is_file():
        raise TraceFormatError(name, None, "missing file")
    try:
        frame = pd.read_csv(path, float_precision="round_trip", encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise TraceFormatError(name, None, f"unreadable CSV: {exc}") from exc
    missing = [c for c in COLUMNS[name] if c not in frame.columns]
    if missing:
        raise TraceFormatError(name, 1, f"header lacks columns {missing}")
    if frame.empty:
        raise TraceFormatError(name, 2, "no data rows")
    problems = find_invalid(frame[COLUMNS[name]])
    if problems:
        row, column, value = problems[0]
        # Line 1 is the header.
        raise TraceFormatError(name, row + 2, f"invalid {column} value {value!r}")
    return frame


def _grid(frame: pd.DataFrame, name: str, row_key: str, col_key: str,
          columns: List[str], shape: Tuple[int, int]) -> Dict[str, np.ndarray]:
    """Scatter long-format rows into dense (row_key x col_key) arrays, one per column."""
    rows = frame[row_key].to_numpy(dtype=np.int64)
    cols = frame[col_key].to_numpy(dtype=np.int64)
    out_of_range = np.flatnonzero((rows >= shape[0]) | (cols >= shape[1]))
    if out_of_range.size:
        line = int(out_of_range[0]) + 2
        raise TraceFormatError(name, line, f"{row_key}/{col_key} index out of range {shape}")
    seen = np.zeros(shape, dtype=bool)
    for position, (r, c) in enumerate(zip(rows, cols)):
        if seen[r, c]:
            raise TraceFormatError(name, position + 2, f"duplicate row for {row_key}={r}, {col_key}={c}")
        seen[r, c] = True
    if not seen.all():
        r, c = (int(v) for v in np.argwhere(~seen)[0])
        raise TraceFormatError(name, None, f"no row for {row_key}={r}, {col_key}={c}")
    arrays = {}
    for column in columns:
        dense = np.empty(shape)
        dense[rows, cols] = frame[column].to_numpy(dtype=float)
        arrays[column] = dense
    return arrays


def _count(frame: pd.DataFrame, column: str) -> int:
    return int(frame[column].max()) + 1


def load(dir_path: PathLike) -> Trace:
    """
    Load and validate a trace directory.

    Args:
        dir_path: Directory holding the trace CSV files

    Returns:
        Validated Trace

    Raises:
        TraceFormatError: missing file, malformed or out-of-range row, inconsistent sizes
        InfeasibleError: a slot's demand cannot be served by the fleet
    """
    directory = Path(dir_path)
    logger.info(f"Loading trace from {directory}")
    frames = {name: _read(directory, name) for name in COLUMNS}

    metadata = TraceMetadata()
    meta_path = directory / METADATA_FILE
    if meta_path.is_file():
        try:
            metadata = TraceMetadata.model_validate_json(meta_path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            raise TraceFormatError(METADATA_FILE, None, str(exc)) from exc

    workloads = frames["workloads.csv"]
    datacenters = frames["datacenters.csv"]
    fleet_frame = frames["fleet.csv"]
    # Slot indices need only increase; rows are placed by their rank among them.
    ts = np.unique(workloads["t"].to_numpy(dtype=np.int64))
    dc_ts = np.unique(datacenters["t"].to_numpy(dtype=np.int64))
    if not np.array_equal(ts, dc_ts):
        raise TraceFormatError("datacenters.csv", None,
                               f"covers {dc_ts.size} slots, workloads.csv covers {ts.size}")
    n_slots = ts.size
    n_gateways = _count(workloads, "gateway")
    n_dcs = len(fleet_frame)
    workloads = workloads.assign(t=np.searchsorted(ts, workloads["t"].to_numpy(dtype=np.int64)))
    datacenters = datacenters.assign(t=np.searchsorted(ts, datacenters["t"].to_numpy(dtype=np.int64)))

    loads = _grid(workloads, "workloads.csv", "t", "gateway", ["load_mw"], (n_slots, n_gateways))["load_mw"]
    series = _grid(datacenters, "datacenters.csv", "t", "dc", list(SLOT_SERIES.values()), (n_slots, n_dcs))
    fleet_rows = _grid(fleet_frame.assign(_col=0), "fleet.csv", "dc", "_col",
                       COLUMNS["fleet.csv"][1:], (n_dcs, 1))
    allowed = _grid(frames["connectivity.csv"], "connectivity.csv", "dc", "gateway", ["allowed"],
                    (n_dcs, n_gateways))["allowed"]
    nearest = _grid(frames["nearest.csv"].assign(_col=0), "nearest.csv", "gateway", "_col", ["dc"],
                    (n_gateways, 1))["dc"][:, 0]

    try:
        fleet = FleetSpec(
            capacity=fleet_rows["capacity_mw"][:, 0],
            connectivity=allowed.astype(bool),
            energy_model=EnergyModel(
                static_energy=fleet_rows["static_energy_mwh"][:, 0],
                dynamic_energy=fleet_rows["dynamic_energy_mwh"][:, 0],
                sizing_mode=SizingMode(metadata.sizing_mode),
            ),
            nearest_map=nearest.astype(np.int64),
            slot_hours=metadata.slot_hours,
        )
    except ValidationError as exc:
        raise TraceFormatError("fleet.csv", None, str(exc)) from exc

    slots = tuple(
        SlotInput(t=int(ts[k]), load=loads[k], **{field: series[column][k] for field, column in SLOT_SERIES.items()})
        for k in range(n_slots)
    )
    check_slots_feasible(slots, fleet)
    logger.info(f"Loaded trace: {n_slots} slots, {n_dcs} data centers, {n_gateways} gateways")
    return Trace(slots=slots, fleet=fleet, provenance=metadata.provenance or str(directory))


# ========== SAVING ==========

def save(trace: Trace, dir_path: PathLike) -> Path:
    """
    Write a trace in the canonical CSV encoding.

    Returns:
        The directory written to
    """
    directory = Path(dir_path)
    directory.mkdir(parents=True, exist_ok=True)
    fleet = trace.fleet
    n, j = fleet.n_datacenters, fleet.n_gateways
    ts = np.array([slot.t for slot in trace.slots], dtype=np.int64)

    workloads = pd.DataFrame({
        "t": np.repeat(ts, j),
        "gateway": np.tile(np.arange(j), len(ts)),
        "load_mw": np.concatenate([slot.load for slot in trace.slots]),
    })
    datacenters = pd.DataFrame({"t": np.repeat(ts, n), "dc": np.tile(np.arange(n), len(ts))})
    for field, column in SLOT_SERIES.items():
        datacenters[column] = np.concatenate([getattr(slot, field) for slot in trace.slots])
    fleet_frame = pd.DataFrame({
        "dc": np.arange(n),
        "capacity_mw": fleet.capacity,
        "static_energy_mwh": fleet.energy_model.static_energy,
        "dynamic_energy_mwh": fleet.energy_model.dynamic_energy,
    })
    dc_idx, gw_idx = np.meshgrid(np.arange(n), np.arange(j), indexing="ij")
    connectivity = pd.DataFrame({
        "dc": dc_idx.ravel(),
        "gateway": gw_idx.ravel(),
        "allowed": fleet.connectivity.ravel().astype(int),
    })
    nearest = pd.DataFrame({"gateway": np.arange(j), "dc": fleet.nearest_map})

    for name, frame in [("workloads.csv", workloads), ("datacenters.csv", datacenters),
                        ("fleet.csv", fleet_frame), ("connectivity.csv", connectivity),
                        ("nearest.csv", nearest)]:
        frame.to_csv(directory / name, index=False, encoding="utf-8", lineterminator="\n")
    metadata = TraceMetadata(
        provenance=trace.provenance,
        sizing_mode=fleet.energy_model.sizing_mode.value,
        slot_hours=fleet.slot_hours,
    )
    (directory / METADATA_FILE).write_text(metadata.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Saved {trace.n_slots}-slot trace to {directory}")
    return directory


# ========== AUGMENTATION AND SYNTHESIS ==========

def _generator(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _relabel(slot: SlotInput, t: int, load: Optional[np.ndarray] = None) -> SlotInput:
    fields = slot.model_dump()
    fields["t"] = t
    if load is not None:
        fields["load"] = load
    return SlotInput(**fields)


def distribute_to_gateways(single_load: Sequence[float], n_gateways: int,
                           perturbation_frac: float, seed: int = DEFAULT_SEED) -> np.ndarray:
    """
    Split one workload series across gateways with a small per-slot perturbation.

    Args:
        single_load: Total load per slot (MW)
        n_gateways: Number of gateways J
        perturbation_frac: Half-width of the uniform multiplicative perturbation
        seed: PCG64 seed

    Returns:
        T x J array of gateway loads, all nonnegative
    """
    if n_gateways < 1:
        raise ValueError("n_gateways must be at least 1")
    if perturbation_frac < 0:
        raise ValueError("perturbation_frac must be nonnegative")
    base = np.asarray(single_load, dtype=float) / n_gateways
    rng = _generator(seed)
    noise = rng.uniform(-perturbation_frac, perturbation_frac, size=(base.size, n_gateways))
    return np.maximum(base[:, None] * (1.0 + noise), 0.0)


def augment(trace: Trace, target_slots: int, perturbation_frac: float = AUGMENT_PERTURBATION,
            seed: int = DEFAULT_SEED) -> Trace:
    """
    Extend a trace by appending perturbed copies of its workloads.

    The first block is the original trace. Each further copy multiplies every
    gateway load by its own (1 + u), u uniform in [-perturbation_frac,
    perturbation_frac]; prices, PUE, intensities and WUE repeat unchanged.

    Raises:
        ValueError: target_slots is shorter than the trace
        InfeasibleError: a perturbed slot no longer fits the fleet
    """
    base = trace.n_slots
    if target_slots < base:
        raise ValueError(f"target_slots {target_slots} is shorter than the trace ({base})")
    rng = _generator(seed)
    slots = list(trace.slots)
    while len(slots) < target_slots:
        for original in trace.slots[: target_slots - len(slots)]:
            factor = 1.0 + rng.uniform(-perturbation_frac, perturbation_frac, size=original.load.size)
            slots.append(_relabel(original, len(slots), np.maximum(original.load * factor, 0.0)))
    slots = [slot if slot.t == k else _relabel(slot, k) for k, slot in enumerate(slots)]
    check_slots_feasible(slots[base:], trace.fleet)
    logger.info(f"Augmented trace from {base} to {target_slots} slots")
    return Trace(slots=tuple(slots), fleet=trace.fleet,
                 provenance=f"{trace.provenance} + augmented to {target_slots} (seed {seed})")


def _diurnal(hours: np.ndarray, period_hours: float) -> np.ndarray:
    return np.sin(2.0 * np.pi * hours / period_hours)


def _noisy(level: np.ndarray, swing: np.ndarray, shape: np.ndarray, noise: float,
           rng: np.random.Generator) -> np.ndarray:
    values = level * (1.0 + swing * shape)
    if noise > 0:
        values = values * (1.0 + rng.uniform(-noise, noise, size=values.shape))
    return np.maximum(values, 0.0)


def synth(spec_params: SynthProfile, n_slots: int, seed: int = DEFAULT_SEED,
          provenance: Optional[str] = None) -> Trace:
    """
    Synthesize a trace with diurnal load, price, carbon and WUE series.

    Every DC follows a sinusoid of period `period_slots` shifted by its UTC
    offset, scaled by its levels and swings, times uniform noise. Total load
    swings between the trough and peak fractions of total capacity in UTC and
    is split across gateways with distribute_to_gateways.

    Args:
        spec_params: Synthesis profile
        n_slots: Number of slots T
        seed: PCG64 seed; identical seeds give identical traces

    Returns:
        Trace over the profile's fleet
    """
    if n_slots < 1:
        raise ValueError("n_slots must be at least 1")
    profile = spec_params
    dcs = profile.datacenters
    n = len(dcs)
    n_gateways = profile.n_gateways or n
    seeds = np.random.SeedSequence(seed).spawn(2)
    rng = _generator(seeds[0])

    def column(field: str) -> np.ndarray:
        return np.array([getattr(dc, field) for dc in dcs], dtype=float)

    period = profile.period_slots * profile.slot_hours
    hours = np.arange(n_slots)[:, None] * profile.slot_hours
    local = _diurnal(hours + column("utc_offset"), period)

    series = {
        "price": _noisy(column("price_usd_per_mwh"), column("price_swing"), local, profile.noise, rng),
        "carbon_intensity": _noisy(column("carbon_ton_per_mwh"), column("carbon_swing"), local, profile.noise, rng),
        "wue_direct": _noisy(column("wue_direct_m3_per_mwh"), column("wue_swing"), local, profile.noise, rng),
        "wue_indirect": _noisy(column("wue_indirect_m3_per_mwh"), np.zeros(n), local, profile.noise, rng),
    }
    pue = column("pue")

    capacity = column("capacity_mw")
    mid = 0.5 * (profile.load_peak_fraction + profile.load_trough_fraction)
    amplitude = 0.5 * (profile.load_peak_fraction - profile.load_trough_fraction)
    fraction = mid + amplitude * _diurnal(hours[:, 0], period)
    if profile.noise > 0:
        fraction = fraction * (1.0 + rng.uniform(-profile.noise, profile.noise, size=n_slots))
    total = np.clip(fraction, 0.0, profile.load_peak_fraction) * capacity.sum()
    loads = distribute_to_gateways(total, n_gateways, profile.gateway_perturbation,
                                   seed=int(seeds[1].generate_state(1)[0]))

    if profile.flexibility == "partial":
        connectivity = partial_flexibility(dcs)
    else:
        connectivity = full_flexibility(n, n_gateways)
    nearest = np.arange(n_gateways) % n
    fleet = FleetSpec(
        capacity=capacity,
        connectivity=connectivity,
        energy_model=EnergyModel(
            static_energy=column("static_energy_mwh"),
            dynamic_energy=column("dynamic_energy_mwh"),
            sizing_mode=SizingMode(profile.sizing_mode),
        ),
        nearest_map=nearest,
        slot_hours=profile.slot_hours,
    )
    slots = tuple(
        SlotInput(t=t, load=loads[t], pue=pue, **{name: values[t] for name, values in series.items()})
        for t in range(n_slots)
    )
    check_slots_feasible(slots, fleet)
    logger.info(f"Synthesized {n_slots} slots for {n} data centers (seed {seed})")
    return Trace(slots=slots, fleet=fleet,
                 provenance=provenance or f"synthetic, {n_slots} slots, seed {seed}")


def load_profile(path: PathLike) -> SynthProfile:
    """Read a synthesis profile from JSON."""
    try:
        return SynthProfile.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        raise TraceFormatError(str(path), None, f"bad profile: {exc}") from exc
