import numpy as np
import pandas as pd
import pytest

from app.src.validation import TraceValidator, find_invalid


@pytest.mark.parametrize("value,expected", [
    (0.0, True),
    (64.931, True),
    (-0.01, False),
    (25000.0, False),
    (None, False),
    (np.nan, False),
])
def test_price_range(value, expected):
    assert TraceValidator.is_valid_price(value) is expected


def test_pue_must_be_at_least_one():
    assert TraceValidator.is_valid_pue(1.0)
    assert TraceValidator.is_valid_pue(1.58)
    assert not TraceValidator.is_valid_pue(0.9)


def test_wue_and_carbon_ranges():
    assert TraceValidator.is_valid_wue(0.0)
    assert not TraceValidator.is_valid_wue(150.0)
    assert TraceValidator.is_valid_carbon_intensity(0.4011)
    assert not TraceValidator.is_valid_carbon_intensity(-0.1)


def test_index_and_flag_checks():
    assert TraceValidator.is_valid_index(3.0)
    assert not TraceValidator.is_valid_index(2.5)
    assert not TraceValidator.is_valid_index(-1)
    assert TraceValidator.is_valid_flag(1)
    assert not TraceValidator.is_valid_flag(2)
    assert not TraceValidator.is_valid_capacity(0.0)
    assert TraceValidator.is_valid_load(0.0)
    assert not TraceValidator.is_valid_load(float("inf"))


def test_find_invalid_reports_row_column_value():
    frame = pd.DataFrame({
        "t": [0, 0, 1],
        "gateway": [0, 1, 0],
        "load_mw": [0.5, -0.2, "x"],
        "note": ["a", "b", "c"],
    })
    assert find_invalid(frame) == [(1, "load_mw", -0.2), (2, "load_mw", "x")]
