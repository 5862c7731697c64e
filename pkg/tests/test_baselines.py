import numpy as np
import pytest
from scipy.optimize import linprog

from app.src.baselines import (
    run_all,
    run_c2,
    run_carbon,
    run_energy,
    run_nearest,
    run_water,
    run_weighted,
)
from app.src.errors import CapacityExceededError
from app.src.metrics import slot_costs
from app.src.model import cost_factors
from tests.builders import assert_same_decisions, make_fleet, make_slot


@pytest.fixture
def tradeoff_slot():
    # DC0 cheap but dirty, DC1 clean but thirsty, DC2 expensive and dry
    return make_slot(0, [1.0], [10.0, 20.0, 40.0], carbon=[0.9, 0.1, 0.5], wue_direct=[1.0, 8.0, 0.2])


def test_single_objective_baselines_pick_their_cheapest_site(tradeoff_slot):
    spec = make_fleet([1.0, 1.0, 1.0], n_gateways=1)
    energy, _ = run_energy([tradeoff_slot], spec)
    carbon, _ = run_carbon([tradeoff_slot], spec)
    water, _ = run_water([tradeoff_slot], spec)
    assert energy.loads[0] == pytest.approx([1.0, 0.0, 0.0])
    assert carbon.loads[0] == pytest.approx([0.0, 1.0, 0.0])
    assert water.loads[0] == pytest.approx([0.0, 0.0, 1.0])


def test_weighted_reduces_to_single_objectives(small_trace, small_equity):
    spec = small_trace.fleet
    cases = [((1.0, 0.0, 0.0), run_energy), ((0.0, 1.0, 0.0), run_carbon), ((0.0, 0.0, 1.0), run_water)]
    for weights, baseline in cases:
        weighted, _ = run_weighted(small_trace.slots, spec, *weights, equity=small_equity)
        expected, _ = baseline(small_trace.slots, spec, small_equity)
        assert_same_decisions(weighted.decisions, expected.decisions)


def test_all_matches_per_slot_lp(small_trace):
    spec = small_trace.fleet
    schedule, _ = run_all(small_trace.slots, spec, w_carbon=1500.0, w_water=60.0)
    energy_cost, carbon, water = slot_costs(schedule, small_trace.slots)
    achieved = energy_cost + 1500.0 * carbon.sum(axis=1) + 60.0 * water.sum(axis=1)
    for k, slot in enumerate(small_trace.slots):
        f = cost_factors(slot)
        unit = f.energy + 1500.0 * f.carbon + 60.0 * f.water
        # PRS with dynamic = capacity gives 1 MWh per MW, static 0
        result = linprog(unit, A_eq=np.ones((1, unit.size)), b_eq=[slot.load.sum()],
                         bounds=[(0, c) for c in spec.capacity], method="highs")
        assert result.status == 0
        assert achieved[k] == pytest.approx(result.fun, rel=1e-9)


def test_c2_ignores_water(small_trace):
    spec = small_trace.fleet
    c2, _ = run_c2(small_trace.slots, spec, w_carbon=1500.0)
    weighted, _ = run_weighted(small_trace.slots, spec, 1.0, 1500.0, 0.0)
    assert_same_decisions(c2.decisions, weighted.decisions)
    assert c2.algorithm == "c2"


def test_rejects_negative_weights(small_trace):
    with pytest.raises(ValueError):
        run_weighted(small_trace.slots, small_trace.fleet, 1.0, -1.0, 0.0)


def test_each_baseline_minimizes_its_own_metric(small_trace, small_equity):
    spec = small_trace.fleet
    runs = {name: fn(small_trace.slots, spec, equity=small_equity)[1]
            for name, fn in [("energy", run_energy), ("carbon", run_carbon), ("water", run_water),
                             ("all", run_all), ("c2", run_c2), ("nearest", run_nearest)]}
    for rep in runs.values():
        assert runs["energy"].energy_cost_total <= rep.energy_cost_total + 1e-9
        assert runs["carbon"].carbon.total <= rep.carbon.total + 1e-9
        assert runs["water"].water.total <= rep.water.total + 1e-9


def test_nearest_routes_each_gateway_home():
    spec = make_fleet([1.0, 1.0, 1.0], nearest=[0, 1, 2])
    slots = [make_slot(t, [0.3, 0.2, 0.5], [30.0, 10.0, 20.0]) for t in range(3)]
    schedule, rep = run_nearest(slots, spec)
    for decision in schedule.decisions:
        np.testing.assert_allclose(decision.x, np.diag([0.3, 0.2, 0.5]))
    assert rep.algorithm == "nearest"


def test_nearest_reports_overloaded_dc():
    spec = make_fleet([1.0, 0.4], nearest=[0, 1])
    slots = [make_slot(0, [0.5, 0.3], [1.0, 1.0]), make_slot(1, [0.5, 0.6], [1.0, 1.0])]
    with pytest.raises(CapacityExceededError) as info:
        run_nearest(slots, spec)
    assert info.value.dc == 1
    assert info.value.slot == 1
