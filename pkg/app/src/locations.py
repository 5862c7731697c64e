"""
Reference data-center locations and the routing-flexibility presets built on them.
"""
from typing import List, Mapping, Optional

import numpy as np

from app.src.config import DEFAULT_PUE, GATEWAY_PERTURBATION
from app.src.schemas import DatacenterProfile, SynthProfile

# name, continent, UTC offset (h), total WUE (m3/MWh), carbon (ton/MWh), price (USD/MWh)
# 18-day averages, late September to mid October.
LOCATIONS = [
    # North America
    ("Texas", "north_america", -5, 5.7397, 0.4011, 64.931),
    ("Virginia", "north_america", -4, 5.9755, 0.3741, 77.793),
    ("Georgia", "north_america", -4, 5.9001, 0.4188, 80.566),
    ("Nevada", "north_america", -7, 4.9306, 0.2980, 84.738),

    # Europe
    ("Germany", "europe", 2, 4.5889, 0.3295, 315.233),
    ("Belgium", "europe", 2, 4.9316, 0.4802, 247.083),
    ("Netherlands", "europe", 2, 3.0928, 0.4454, 248.258),
    ("Denmark", "europe", 2, 3.8900, 0.1391, 213.773),

    # Asia
    ("Japan", "asia", 9, 2.4989, 0.3280, 129.269),
    ("Singapore", "asia", 8, 5.8652, 0.5260, 155.462),
]

# Water consumed per MWh generated, by fuel (m3/MWh).
EWIF = {
    "coal": 1.7,
    "nuclear": 2.3,
    "natural_gas": 1.1,
    "solar": 0.0,
    "wind": 0.0,
    "other": 1.8,
    "hydro": 68.0,
}

# Grid average EWIF; used to split total WUE into its on-site and off-site parts.
AVERAGE_EWIF = 1.8

# Cross-continent routes allowed under partial flexibility, as (DC continent or name, gateway continent or name).
PARTIAL_ROUTES = [
    ("Nevada", "asia"),
    ("asia", "Nevada"),
    ("Virginia", "europe"),
    ("Georgia", "europe"),
    ("europe", "Virginia"),
    ("europe", "Georgia"),
]


def indirect_wue(fuel_mix: Mapping[str, float], include_hydro: bool = True) -> float:
    """
    Off-site water intensity of electricity for a fuel mix.

    Args:
        fuel_mix: Share of generation per fuel; shares are normalized to sum to 1
        include_hydro: Count evaporation from hydro reservoirs

    Returns:
        Share-weighted EWIF in m3/MWh
    """
    unknown = set(fuel_mix) - set(EWIF)
    if unknown:
        raise ValueError(f"unknown fuel types: {sorted(unknown)}")
    total = sum(fuel_mix.values())
    if total <= 0 or any(v < 0 for v in fuel_mix.values()):
        raise ValueError("fuel shares must be nonnegative with a positive sum")
    water = 0.0
    for fuel, share in fuel_mix.items():
        factor = EWIF[fuel] if (fuel != "hydro" or include_hydro) else 0.0
        water += factor * share / total
    return water


def datacenter_profiles(pue: float = DEFAULT_PUE) -> List[DatacenterProfile]:
    """Synthesis levels for every reference location, 1 MW each."""
    profiles = []
    for name, continent, offset, total_wue, carbon, price in LOCATIONS:
        profiles.append(DatacenterProfile(
            name=name,
            continent=continent,
            utc_offset=offset,
            capacity_mw=1.0,
            pue=pue,
            price_usd_per_mwh=price,
            carbon_ton_per_mwh=carbon,
            wue_direct_m3_per_mwh=total_wue - pue * AVERAGE_EWIF,
            wue_indirect_m3_per_mwh=AVERAGE_EWIF,
        ))
    return profiles


def default_profile(flexibility: str = "full") -> SynthProfile:
    """The ten reference locations with one co-located gateway each."""
    return SynthProfile(
        datacenters=datacenter_profiles(),
        flexibility=flexibility,
        gateway_perturbation=GATEWAY_PERTURBATION,
    )


def skewed_profile(water_factor: float = 2.5, carbon_factor: float = 2.0) -> SynthProfile:
    """
    Reference profile with one cheap, water-hungry DC and one cheap, carbon-heavy DC.

    Cost-only routing piles load onto both, so the regional footprints diverge.
    """
    profiles = datacenter_profiles()
    profiles[0] = profiles[0].model_copy(update={
        "wue_direct_m3_per_mwh": profiles[0].wue_direct_m3_per_mwh * water_factor,
    })
    profiles[1] = profiles[1].model_copy(update={
        "carbon_ton_per_mwh": profiles[1].carbon_ton_per_mwh * carbon_factor,
    })
    return SynthProfile(datacenters=profiles, gateway_perturbation=GATEWAY_PERTURBATION)


def full_flexibility(n_datacenters: int, n_gateways: int) -> np.ndarray:
    """Every gateway may use every DC."""
    return np.ones((n_datacenters, n_gateways), dtype=bool)


def _matches(tag: str, name: str, continent: str) -> bool:
    return tag == name or tag == continent


def partial_flexibility(datacenters: Optional[List[DatacenterProfile]] = None) -> np.ndarray:
    """
    Routing mask with gateway j co-located with DC j.

    Routing inside a continent is free; across continents only the routes in
    PARTIAL_ROUTES are open.
    """
    datacenters = datacenters or datacenter_profiles()
    n = len(datacenters)
    mask = np.zeros((n, n), dtype=bool)
    for i, dc in enumerate(datacenters):
        for j, gw in enumerate(datacenters):
            if dc.continent == gw.continent:
                mask[i, j] = True
                continue
            mask[i, j] = any(
                _matches(dc_tag, dc.name, dc.continent) and _matches(gw_tag, gw.name, gw.continent)
                for dc_tag, gw_tag in PARTIAL_ROUTES
            )
    return mask

