"""
Range checks for trace records.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class TraceValidator:
    """Validates the numeric columns of trace CSV files."""

    # Valid ranges
    PRICE_MIN = 0.0        # USD/MWh
    PRICE_MAX = 20000.0    # USD/MWh (scarcity pricing caps)
    PUE_MIN = 1.0
    PUE_MAX = 5.0
    CARBON_MIN = 0.0       # ton/MWh
    CARBON_MAX = 2.0       # ton/MWh (lignite)
    WUE_MIN = 0.0          # m3/MWh
    WUE_MAX = 100.0        # m3/MWh (hydro-heavy grids)
    LOAD_MIN = 0.0         # MW

    @staticmethod
    def _finite(value: Optional[float]) -> bool:
        return value is not None and bool(np.isfinite(value))

    @staticmethod
    def is_valid_load(load: Optional[float]) -> bool:
        """
        Check if a gateway load is usable.

        Args:
            load: Load in MW

        Returns:
            True if valid, False otherwise
        """
        return TraceValidator._finite(load) and load >= TraceValidator.LOAD_MIN

    @staticmethod
    def is_valid_price(price: Optional[float]) -> bool:
        return TraceValidator._finite(price) and TraceValidator.PRICE_MIN <= price <= TraceValidator.PRICE_MAX

    @staticmethod
    def is_valid_pue(pue: Optional[float]) -> bool:
        return TraceValidator._finite(pue) and TraceValidator.PUE_MIN <= pue <= TraceValidator.PUE_MAX

    @staticmethod
    def is_valid_carbon_intensity(carbon: Optional[float]) -> bool:
        return TraceValidator._finite(carbon) and TraceValidator.CARBON_MIN <= carbon <= TraceValidator.CARBON_MAX

    @staticmethod
    def is_valid_wue(wue: Optional[float]) -> bool:
        """
        Check if a direct or indirect WUE is within the valid range.

        Args:
            wue: Water usage effectiveness in m3/MWh

        Returns:
            True if valid, False otherwise
        """
        return TraceValidator._finite(wue) and TraceValidator.WUE_MIN <= wue <= TraceValidator.WUE_MAX

    @staticmethod
    def is_valid_energy(energy: Optional[float]) -> bool:
        return TraceValidator._finite(energy) and energy >= 0

    @staticmethod
    def is_valid_capacity(capacity: Optional[float]) -> bool:
        return TraceValidator._finite(capacity) and capacity > 0

    @staticmethod
    def is_valid_index(value: Optional[float]) -> bool:
        return TraceValidator._finite(value) and value >= 0 and float(value).is_integer()

    @staticmethod
    def is_valid_flag(value: Optional[float]) -> bool:
        return TraceValidator._finite(value) and value in (0, 1)


COLUMN_CHECKS = {
    "t": TraceValidator.is_valid_index,
    "dc": TraceValidator.is_valid_index,
    "gateway": TraceValidator.is_valid_index,
    "load_mw": TraceValidator.is_valid_load,
    "price_usd_per_mwh": TraceValidator.is_valid_price,
    "pue": TraceValidator.is_valid_pue,
    "carbon_ton_per_mwh": TraceValidator.is_valid_carbon_intensity,
    "wue_direct_m3_per_mwh": TraceValidator.is_valid_wue,
    "wue_indirect_m3_per_mwh": TraceValidator.is_valid_wue,
    "capacity_mw": TraceValidator.is_valid_capacity,
    "static_energy_mwh": TraceValidator.is_valid_energy,
    "dynamic_energy_mwh": TraceValidator.is_valid_capacity,
    "allowed": TraceValidator.is_valid_flag,
}


def find_invalid(frame: pd.DataFrame) -> List[Tuple[int, str, object]]:
    """
    Every out-of-range cell of a trace frame.

    Rows are reported by their position in the frame; cells of columns without
    a registered check are skipped.

    Returns:
        (row position, column, value) tuples in row order
    """
    problems = []
    for column in frame.columns:
        check = COLUMN_CHECKS.get(column)
        if check is None:
            continue
        values = pd.to_numeric(frame[column], errors="coerce")
        for position, value in enumerate(values):
            if not check(None if pd.isna(value) else float(value)):
                problems.append((position, column, frame[column].iloc[position]))
    problems.sort(key=lambda p: p[0])
    return problems
