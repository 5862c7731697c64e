import numpy as np
import pytest

from app.src.baselines import run_water
from app.src.errors import ConfigurationError
from app.src.schemas import FootprintSummary
from app.src.suite import (
    ALGORITHMS,
    ComparisonSuite,
    check_weighted_baselines,
    compare,
    run_algorithm,
    sweep_eta,
    sweep_weights,
)

FAST = ("energy", "carbon", "water", "c2", "all", "nearest", "eglb")


def test_run_algorithm_dispatches_by_name(small_trace, small_equity):
    schedule, rep = run_algorithm("water", small_trace.slots, small_trace.fleet, small_equity)
    expected, _ = run_water(small_trace.slots, small_trace.fleet, small_equity)
    assert rep.algorithm == "water"
    for a, b in zip(schedule.decisions, expected.decisions):
        np.testing.assert_array_equal(a.x, b.x)


def test_run_algorithm_rejects_bad_requests(small_trace, small_equity):
    spec = small_trace.fleet
    with pytest.raises(ConfigurationError, match="unknown algorithm"):
        run_algorithm("nosuch", small_trace.slots, spec, small_equity)
    with pytest.raises(ConfigurationError):
        run_algorithm("energy", small_trace.slots, spec, small_equity, eta=0.1)
    with pytest.raises(ConfigurationError):
        run_algorithm("c2", small_trace.slots, spec, small_equity, w_water=60.0)
    with pytest.raises(ConfigurationError):
        run_algorithm("eglb", small_trace.slots, spec, small_equity, eta=-1.0)


def test_eglb_options_pass_through(small_trace, small_equity):
    schedule, _ = run_algorithm("eglb", small_trace.slots, small_trace.fleet, small_equity, eta=3e-3)
    assert schedule.eta == pytest.approx(3e-3)
    schedule, _ = run_algorithm("eglb-mpc", small_trace.slots[:6], small_trace.fleet, small_equity,
                                window=3, max_iters=20)
    assert schedule.n_slots == 6


def test_compare_is_deterministic(small_trace, small_equity):
    first = compare(small_trace.slots, small_trace.fleet, small_equity, eta=2e-3, algorithms=FAST)
    second = compare(small_trace.slots, small_trace.fleet, small_equity, eta=2e-3, algorithms=FAST)
    assert first[2] == second[2]
    assert list(first[1].columns) == list(FAST)
    assert first[0]["eglb"].objective == second[0]["eglb"].objective


def test_suite_rejects_unknown_names(small_trace, small_equity):
    with pytest.raises(ConfigurationError):
        ComparisonSuite(small_trace.slots, small_trace.fleet, small_equity, algorithms=["energy", "bogus"])
    assert len(ALGORITHMS) == 9


def _report(name, carbon, water, small_report):
    return small_report.model_copy(update={
        "algorithm": name,
        "carbon": FootprintSummary(per_dc=[carbon], total=carbon, avg=carbon, max=carbon, max_over_avg=1.0),
        "water": FootprintSummary(per_dc=[water], total=water, avg=water, max=water, max_over_avg=1.0),
    })


def test_weighted_baseline_check(small_trace, small_equity):
    _, base = run_water(small_trace.slots, small_trace.fleet, small_equity)
    reports = {
        "eglb-off": _report("eglb-off", 10.0, 100.0, base),
        "c2": _report("c2", 9.0, 120.0, base),
        "all": _report("all", 9.0, 101.0, base),
    }
    assert check_weighted_baselines(reports) == {"c2": True, "all": False}
    assert check_weighted_baselines({"c2": reports["c2"]}) == {}


def test_sweeps(small_trace, small_equity):
    trace = small_trace.slots[:12]
    frame = sweep_eta(trace, small_trace.fleet, small_equity, [1e-4, 1e-2])
    assert frame["eta"].tolist() == [1e-4, 1e-2]
    assert {"objective", "carbon_max_over_avg", "water_max_over_avg"} <= set(frame.columns)

    frame = sweep_weights(trace, small_trace.fleet, [(0.0, 0.0), (1500.0, 60.0)], eta=1e-3,
                          algorithms=("eglb",))
    assert len(frame) == 2
    assert frame["mu_carbon"].tolist() == [0.0, 1500.0]
