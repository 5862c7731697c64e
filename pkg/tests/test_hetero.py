import numpy as np
import pytest
from pydantic import ValidationError
from scipy.optimize import linprog

from app.src.baselines import run_energy
from app.src.eglb import RunConfig, run
from app.src.errors import ConfigurationError
from app.src.hetero import HeteroModel, HeteroSolver, hetero_slot_cost, run_hetero, solve_hetero_slot
from app.src.model import EquitySpec, marginal_coefficients
from app.src.schemas import HeteroModelFile, ModelEntry
from tests.builders import assert_same_decisions, make_fleet, make_slot


def two_model(phi=100.0):
    """A small, less accurate model and a large, accurate one using twice the resources."""
    return HeteroModel(energy_per_load=[[0.5, 1.0]], resource_per_load=[[1.0, 2.0]],
                       perf_cost_per_load=[1.0, 0.0], phi=phi)


def lp_optimum(costs, model, spec, demand):
    """min sum c_il y_il over routing x and model split y, or None if infeasible."""
    n, n_models = costs.shape
    mask = spec.connectivity
    pairs = np.argwhere(mask)
    n_x = len(pairs)
    n_vars = n_x + n * n_models
    cost = np.concatenate((np.zeros(n_x), costs.ravel()))
    a_eq = np.zeros((mask.shape[1] + n, n_vars))
    for k, (i, g) in enumerate(pairs):
        a_eq[g, k] = 1.0
        a_eq[mask.shape[1] + i, k] = 1.0
    for i in range(n):
        a_eq[mask.shape[1] + i, n_x + i * n_models: n_x + (i + 1) * n_models] = -1.0
    b_eq = np.concatenate((demand, np.zeros(n)))
    a_ub = np.zeros((n, n_vars))
    for i in range(n):
        a_ub[i, n_x + i * n_models: n_x + (i + 1) * n_models] = model.resource_per_load[i]
    result = linprog(cost, A_ub=a_ub, b_ub=spec.capacity, A_eq=a_eq, b_eq=b_eq,
                     bounds=(0, None), method="highs")
    return float(result.fun) if result.status == 0 else None


def test_generalized_cost_example():
    spec = make_fleet([1.0], n_gateways=1)
    slot = make_slot(0, [0.5], [10.0])
    model = HeteroModel(energy_per_load=[[0.5]], resource_per_load=[[1.0]], perf_cost_per_load=[1.0], phi=2.0)
    assert hetero_slot_cost(model, slot, spec) == pytest.approx([[7.0]])


def test_single_model_cost_is_the_homogeneous_coefficient(small_trace):
    spec = small_trace.fleet
    single = HeteroModel.single(spec)
    for slot in small_trace.slots[:5]:
        np.testing.assert_allclose(hetero_slot_cost(single, slot, spec)[:, 0],
                                   marginal_coefficients(spec, slot).energy)


def test_accuracy_price_fills_the_accurate_model_first():
    spec = make_fleet([1.0], n_gateways=1)
    model = two_model()
    light = make_slot(0, [0.4], [10.0])
    _, y = solve_hetero_slot(hetero_slot_cost(model, light, spec), model, spec, light)
    assert y == pytest.approx([[0.0, 0.4]])

    heavy = make_slot(1, [0.8], [10.0])
    x, y = solve_hetero_slot(hetero_slot_cost(model, heavy, spec), model, spec, heavy)
    # The accurate model takes what the resource budget allows, the rest spills to the small one.
    assert y == pytest.approx([[0.6, 0.2]])
    assert x.load == pytest.approx(y.sum(axis=1))


def test_without_accuracy_price_the_lean_model_wins():
    spec = make_fleet([1.0], n_gateways=1)
    model = two_model(phi=0.0)
    slot = make_slot(0, [0.7], [10.0])
    _, y = solve_hetero_slot(hetero_slot_cost(model, slot, spec), model, spec, slot)
    assert y == pytest.approx([[0.7, 0.0]])


def test_matches_lp_oracle_on_random_instances():
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 150:
        n, j, n_models = (int(v) for v in rng.integers(1, 4, size=3))
        mask = rng.random((n, j)) < 0.7
        mask[rng.integers(0, n, size=j), np.arange(j)] = True
        spec = make_fleet(rng.uniform(0.5, 2.0, n), mask=mask)
        model = HeteroModel(
            energy_per_load=rng.uniform(0.2, 1.5, (n, n_models)),
            resource_per_load=rng.choice([0.5, 1.0, 1.5, 2.0], size=(n, n_models)),
            perf_cost_per_load=rng.uniform(0, 1, n_models),
            phi=float(rng.uniform(0, 30)),
        )
        slot = make_slot(0, rng.uniform(0.0, 1.0, j), rng.uniform(10, 90, n))
        costs = hetero_slot_cost(model, slot, spec)
        expected = lp_optimum(costs, model, spec, slot.load)
        if expected is None:
            continue
        x, y = solve_hetero_slot(costs, model, spec, slot)
        assert float((costs * y).sum()) == pytest.approx(expected, rel=1e-7, abs=1e-9)
        np.testing.assert_allclose(x.load, y.sum(axis=1), atol=1e-9)
        assert np.all((model.resource_per_load * y).sum(axis=1) <= spec.capacity + 1e-9)
        assert np.all(y >= 0)
        assert not x.violations(spec, slot.load)
        checked += 1


def test_single_model_reproduces_homogeneous_runs(small_trace, small_equity):
    spec = small_trace.fleet
    single = HeteroModel.single(spec)

    hetero, hetero_rep = run_hetero(small_trace.slots, spec, single, small_equity, algorithm="energy")
    plain, plain_rep = run_energy(small_trace.slots, spec, small_equity)
    assert_same_decisions(hetero.decisions, plain.decisions)
    assert hetero_rep.objective == pytest.approx(plain_rep.objective, rel=1e-12)

    config = RunConfig.for_trace(small_trace.slots, spec, small_equity, eta=5e-3)
    hetero, _ = run_hetero(small_trace.slots, spec, single, config, algorithm="eglb")
    plain, _ = run(small_trace.slots, spec, config)
    assert_same_decisions(hetero.decisions, plain.decisions)
    np.testing.assert_allclose(hetero.dual_trajectory, plain.dual_trajectory, rtol=1e-12)


def test_hetero_run_reports_mix_and_performance_cost():
    spec = make_fleet([1.0, 1.0], n_gateways=1)
    model = HeteroModel(energy_per_load=[[0.5, 1.0], [0.6, 1.1]], resource_per_load=[[1.0, 2.0], [1.0, 2.0]],
                        perf_cost_per_load=[1.0, 0.0], phi=20.0)
    slots = [make_slot(t, [1.2], [30.0, 40.0], carbon=[0.3, 0.5], wue_direct=[2.0, 1.0]) for t in range(6)]
    schedule, rep = run_hetero(slots, spec, model, EquitySpec.uniform(2, 50.0, 5.0), algorithm="energy")
    assert schedule.mix.shape == (6, 2, 2)
    np.testing.assert_allclose(schedule.mix.sum(axis=2), schedule.loads, atol=1e-9)
    expected_perf = 20.0 * (schedule.mix * model.perf_cost_per_load).sum()
    assert rep.performance_cost == pytest.approx(expected_perf)


def test_from_document():
    spec = make_fleet([1.0, 2.0], n_gateways=1)
    document = HeteroModelFile(phi=3.0, models=[
        ModelEntry(name="small", energy_per_load=0.4, resource_per_load=[1.0, 0.8], perf_cost_per_load=0.3),
        ModelEntry(name="large", energy_per_load=[1.0, 1.2], resource_per_load=2.0),
    ])
    model = HeteroModel.from_document(document, spec)
    assert model.names == ("small", "large")
    np.testing.assert_allclose(model.energy_per_load, [[0.4, 1.0], [0.4, 1.2]])
    np.testing.assert_allclose(model.resource_per_load, [[1.0, 2.0], [0.8, 2.0]])
    assert model.phi == 3.0

    bad = HeteroModelFile(models=[ModelEntry(name="x", energy_per_load=[1.0, 1.0, 1.0])])
    with pytest.raises(ConfigurationError):
        HeteroModel.from_document(bad, spec)


def test_model_validation():
    with pytest.raises(ValidationError):
        HeteroModel(energy_per_load=[[0.5]], resource_per_load=[[0.0]], perf_cost_per_load=[0.0])
    with pytest.raises(ValidationError):
        HeteroModel(energy_per_load=[[0.5, 1.0]], resource_per_load=[[1.0, 1.0]], perf_cost_per_load=[0.0])
    with pytest.raises(ConfigurationError):
        HeteroSolver(spec=make_fleet([1.0], n_gateways=1))
