"""
Pydantic models for every JSON document the tool reads or writes.
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class FootprintSummary(BaseModel):
    """Per-DC totals of one footprint over a run, plus the equity metrics."""
    per_dc: List[float] = Field(..., description="Total footprint per data center")
    total: float = Field(..., description="Sum over data centers")
    avg: float = Field(..., description="total / N")
    max: float = Field(..., description="Largest per-DC total")
    max_over_avg: float = Field(..., description="1 means every region carries the same footprint")


class BoundConstants(BaseModel):
    """Constants of the online-vs-offline cost bound."""
    B: float = Field(..., ge=0)
    C: float = Field(..., ge=0)
    D: float = Field(..., ge=0)
    M: float = Field(..., ge=0, description="Largest DC capacity (MW)")
    theta_m: float = Field(..., ge=0, description="Largest slope of any equity penalty")
    c_m: float = Field(..., ge=0, description="Largest per-MW carbon footprint at full capacity")
    w_m: float = Field(..., ge=0, description="Largest per-MW water footprint at full capacity")


class BoundCheck(BaseModel):
    """Outcome of one inequality check: passes when lhs <= rhs."""
    name: str
    passed: bool
    lhs: float
    rhs: float
    slack: float = Field(..., description="rhs - lhs")


class BoundsReport(BaseModel):
    constants: BoundConstants
    cost_bound: Optional[BoundCheck] = None
    dual_norm: Optional[BoundCheck] = None


class RunReport(BaseModel):
    """Aggregate metrics of one algorithm on one trace."""
    algorithm: str
    n_slots: int
    n_datacenters: int
    energy_cost_total: float = Field(..., description="USD over the run")
    energy_cost_avg: float = Field(..., description="USD per data center location")
    energy_cost_per_slot: List[float]
    performance_cost: float = Field(0.0, description="USD of accuracy loss; zero for homogeneous fleets")
    carbon: FootprintSummary = Field(..., description="ton")
    water: FootprintSummary = Field(..., description="m3")
    objective: float = Field(..., description="Time-averaged cost plus equity penalties")
    gap_estimate: Optional[float] = Field(None, description="Offline primal-dual gap")
    converged: Optional[bool] = None
    bounds: Optional[BoundsReport] = None

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "algorithm": "eglb",
            "n_slots": 432,
            "n_datacenters": 10,
            "energy_cost_total": 310521.4,
            "energy_cost_avg": 31052.1,
        }
    })


class DatacenterProfile(BaseModel):
    """Levels and diurnal swings of one synthetic data center."""
    name: str
    continent: str = "unknown"
    utc_offset: float = Field(0.0, description="Hours; shifts the diurnal phase")
    capacity_mw: float = Field(1.0, gt=0)
    static_energy_mwh: float = Field(0.0, ge=0)
    dynamic_energy_mwh: float = Field(1.0, gt=0)
    pue: float = Field(1.1, ge=1)
    price_usd_per_mwh: float = Field(..., ge=0)
    price_swing: float = Field(0.2, ge=0, le=1, description="Relative diurnal amplitude")
    carbon_ton_per_mwh: float = Field(..., ge=0)
    carbon_swing: float = Field(0.1, ge=0, le=1)
    wue_direct_m3_per_mwh: float = Field(..., ge=0)
    wue_swing: float = Field(0.3, ge=0, le=1)
    wue_indirect_m3_per_mwh: float = Field(..., ge=0)


class SynthProfile(BaseModel):
    """Input of trace synthesis (`gen --profile`)."""
    datacenters: List[DatacenterProfile]
    n_gateways: Optional[int] = Field(None, ge=1, description="Defaults to one gateway per data center")
    flexibility: Literal["full", "partial"] = "full"
    load_peak_fraction: float = Field(0.6, gt=0, le=1, description="Peak total load / total capacity")
    load_trough_fraction: float = Field(0.25, ge=0, le=1)
    noise: float = Field(0.05, ge=0, le=1, description="Uniform multiplicative noise half-width")
    gateway_perturbation: float = Field(0.05, ge=0, lt=1)
    period_slots: int = Field(24, ge=1)
    sizing_mode: Literal["perfect_right_size", "always_on"] = "perfect_right_size"
    slot_hours: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.datacenters:
            raise ValueError("profile needs at least one data center")
        if self.load_trough_fraction > self.load_peak_fraction:
            raise ValueError("load_trough_fraction must not exceed load_peak_fraction")
        if self.flexibility == "partial" and self.n_gateways not in (None, len(self.datacenters)):
            raise ValueError("partial flexibility co-locates one gateway with each data center")
        return self


class ModelEntry(BaseModel):
    """One AI model size in a hetero file; scalars apply to every DC."""
    name: str
    energy_per_load: List[float] | float = Field(..., description="MWh per MW, scalar or per DC")
    resource_per_load: List[float] | float = Field(1.0, description="capacity units per MW, scalar or per DC")
    perf_cost_per_load: float = Field(0.0, ge=0)


class HeteroModelFile(BaseModel):
    """Input of `run --hetero`."""
    phi: float = Field(0.0, ge=0)
    models: List[ModelEntry] = Field(..., min_length=1)


class TraceMetadata(BaseModel):
    """Optional trace.json next to the trace CSVs."""
    provenance: str = ""
    sizing_mode: Literal["perfect_right_size", "always_on"] = "perfect_right_size"
    slot_hours: float = Field(1.0, gt=0)


class RunManifest(BaseModel):
    """Everything needed to re-check a stored run."""
    algorithm: str
    trace: str
    n_slots: int
    eta: Optional[float] = None
    mu_carbon: float
    mu_water: float
    theta_carbon: List[float]
    theta_water: List[float]
    normalize_by_capacity: bool = False
    carbon_unit: float = 1.0
    water_unit: float = 1.0
    window: Optional[int] = None
    zbar_carbon: Optional[List[float]] = None
    zbar_water: Optional[List[float]] = None
    hetero: Optional[str] = None
    warm_start: Optional[str] = Field(None, description="History trace the initial multipliers came from")
