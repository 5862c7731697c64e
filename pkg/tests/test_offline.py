import numpy as np
import pytest
from scipy.optimize import linprog

from app.src.baselines import run_energy
from app.src.errors import ConfigurationError
from app.src.model import EquitySpec, cost_factors
from app.src.offline import run_mpc, run_offline, solve_offline, solve_window, warm_start
from tests.builders import assert_same_decisions, make_fleet, make_slot


def lp_optimum(trace, spec, equity):
    """Equity-aware optimum of a fully flexible, proportional fleet via HiGHS."""
    t_len, n = len(trace), spec.n_datacenters
    factors = [cost_factors(s) for s in trace]
    scale = equity.scale(spec)
    n_vars = t_len * n + 2
    cost = np.zeros(n_vars)
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for t, f in enumerate(factors):
        cost[t * n:(t + 1) * n] = f.energy / t_len
        row = np.zeros(n_vars)
        row[t * n:(t + 1) * n] = 1.0
        a_eq.append(row)
        b_eq.append(trace[t].load.sum())
    cost[-2], cost[-1] = equity.mu_carbon, equity.mu_water
    for block, theta, epigraph in (("carbon", equity.theta_carbon, -2), ("water", equity.theta_water, -1)):
        for i in range(n):
            row = np.zeros(n_vars)
            for t, f in enumerate(factors):
                row[t * n + i] = theta[i] * getattr(f, block)[i] * scale[i] / t_len
            row[epigraph] = -1.0
            a_ub.append(row)
            b_ub.append(0.0)
    bounds = [(0, c) for _ in range(t_len) for c in spec.capacity] + [(0, None), (0, None)]
    result = linprog(cost, A_ub=np.array(a_ub), b_ub=b_ub, A_eq=np.array(a_eq), b_eq=b_eq,
                     bounds=bounds, method="highs")
    assert result.status == 0
    return float(result.fun)


def random_trace(rng, t_len=2, n=2):
    return [
        make_slot(t, [float(rng.uniform(0.3, 1.5))], rng.uniform(20, 80, n),
                  carbon=rng.uniform(0.1, 0.9, n), wue_direct=rng.uniform(0.5, 6, n))
        for t in range(t_len)
    ]


def test_zero_weights_reduce_to_energy_baseline(small_trace):
    spec = small_trace.fleet
    equity = EquitySpec.uniform(spec.n_datacenters, 0.0, 0.0)
    solution = solve_offline(small_trace.slots, spec, equity)
    energy, energy_rep = run_energy(small_trace.slots, spec, equity)
    assert solution.converged
    assert solution.iterations == 1
    assert solution.gap_estimate == 0.0
    assert_same_decisions(solution.decisions, energy.decisions)
    assert solution.objective == pytest.approx(energy_rep.objective)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_brackets_lp_optimum(seed):
    rng = np.random.default_rng(seed)
    spec = make_fleet([1.0, 1.0], n_gateways=1)
    trace = random_trace(rng)
    equity = EquitySpec(theta_carbon=rng.uniform(0.5, 2, 2), theta_water=rng.uniform(0.5, 2, 2),
                        mu_carbon=40.0, mu_water=2.0)
    optimum = lp_optimum(trace, spec, equity)
    solution = solve_offline(trace, spec, equity, tol=1e-5, max_iters=3000)
    assert solution.dual_bound <= optimum + 1e-9
    assert solution.objective >= optimum - 1e-9
    assert solution.objective - optimum <= solution.gap_estimate + 1e-9
    assert solution.objective <= optimum * 1.05
    for decision, slot in zip(solution.decisions, trace):
        assert decision.is_feasible(spec, slot.load)


def test_weak_duality_holds_along_the_run(small_trace, small_equity):
    solution = solve_offline(small_trace.slots, small_trace.fleet, small_equity, max_iters=200)
    best_dual = solution.dual_history.max()
    assert np.all(solution.primal_history >= best_dual - 1e-9)
    assert solution.dual_bound == pytest.approx(best_dual)
    assert solution.objective <= solution.primal_history.min() + 1e-9
    assert solution.iterations == len(solution.primal_history)


def test_offline_is_no_worse_than_energy_baseline(small_trace, small_equity):
    spec = small_trace.fleet
    schedule, rep = run_offline(small_trace.slots, spec, small_equity, max_iters=300)
    _, energy_rep = run_energy(small_trace.slots, spec, small_equity)
    assert rep.objective <= energy_rep.objective + rep.gap_estimate + 1e-9
    assert rep.gap_estimate is not None and rep.converged is not None
    assert schedule.algorithm == "eglb-off"


def test_full_window_mpc_matches_offline_with_defaults(small_trace, small_equity):
    spec = small_trace.fleet
    trace = small_trace.slots[:24]
    offline, off_rep = run_offline(trace, spec, small_equity)
    for window in (len(trace), len(trace) + 5):
        mpc, mpc_rep = run_mpc(trace, spec, small_equity, window=window)
        assert_same_decisions(mpc.decisions, offline.decisions)
        assert mpc_rep.objective == off_rep.objective
        assert mpc.algorithm == "eglb-mpc"


def test_returned_multipliers_attain_the_dual_bound(small_trace, small_equity):
    spec = small_trace.fleet
    trace = small_trace.slots[:12]
    solution = solve_offline(trace, spec, small_equity, max_iters=150)
    assert np.all(solution.kappa >= 0)
    n = spec.n_datacenters
    again = solve_window(trace, spec, small_equity, np.zeros(n), np.zeros(n), max_iters=1, kappa_init=solution.kappa)
    assert again.dual_history[0] == pytest.approx(solution.dual_bound, rel=1e-9)


def test_warm_start_returns_offline_multipliers(small_trace, small_equity):
    spec = small_trace.fleet
    history = small_trace.slots[:12]
    kappa = warm_start(history, spec, small_equity, max_iters=100)
    np.testing.assert_array_equal(kappa, solve_offline(history, spec, small_equity, max_iters=100).kappa)
    assert kappa.shape == (2 * spec.n_datacenters,)
    with pytest.raises(ConfigurationError):
        warm_start([], spec, small_equity)


def test_single_slot_window_without_weights_matches_energy(small_trace):
    spec = small_trace.fleet
    equity = EquitySpec.uniform(spec.n_datacenters, 0.0, 0.0)
    mpc, _ = run_mpc(small_trace.slots, spec, equity, window=1)
    energy, _ = run_energy(small_trace.slots, spec, equity)
    assert_same_decisions(mpc.decisions, energy.decisions)


def test_mpc_decisions_are_feasible(small_trace, small_equity):
    spec = small_trace.fleet
    schedule, _ = run_mpc(small_trace.slots[:10], spec, small_equity, window=4, max_iters=50)
    assert schedule.n_slots == 10
    for decision, slot in zip(schedule.decisions, small_trace.slots[:10]):
        assert decision.is_feasible(spec, slot.load)


def test_carried_footprint_pushes_load_away():
    spec = make_fleet([1.0, 1.0], n_gateways=1)
    window = [make_slot(1, [1.0], [10.0, 11.0], carbon=1.0)]
    equity = EquitySpec.uniform(2, 10.0, 0.0)
    fresh = solve_window(window, spec, equity, np.zeros(2), np.zeros(2), elapsed=1)
    loaded = solve_window(window, spec, equity, np.array([5.0, 0.0]), np.zeros(2), elapsed=1)
    assert loaded.decisions[0].load == pytest.approx([0.0, 1.0], abs=1e-6)
    assert loaded.decisions[0].load[0] <= fresh.decisions[0].load[0]
    assert loaded.objective == pytest.approx(30.5, rel=1e-6)


def test_invalid_settings(small_trace, small_equity):
    spec = small_trace.fleet
    with pytest.raises(ConfigurationError):
        run_mpc(small_trace.slots, spec, small_equity, window=0)
    with pytest.raises(ConfigurationError):
        solve_offline(small_trace.slots, spec, small_equity, max_iters=0)
    with pytest.raises(ConfigurationError):
        solve_offline(small_trace.slots, spec, small_equity, tol=-1.0)
    with pytest.raises(ConfigurationError):
        solve_window([], spec, small_equity, np.zeros(3), np.zeros(3))


def _split_grid(load, step=0.01):
    """Every two-DC split of one gateway's load on a grid of `step` MW."""
    first = np.arange(0.0, load + step / 2, step)
    return np.stack((first, load - first), axis=1)


def _aux_value(footprint, theta, mu, zbar):
    """min over z in [0, zbar] of (mu / T) sum_t max_i theta_i z_i(t) s.t. mean_t z_i(t) >= mean_t footprint_i(t)."""
    t_len, n = footprint.shape
    n_z = t_len * n
    cost = np.concatenate((np.zeros(n_z), np.full(t_len, mu / t_len)))
    a_ub, b_ub = [], []
    for t in range(t_len):
        for i in range(n):
            row = np.zeros(n_z + t_len)
            row[t * n + i] = theta[i]
            row[n_z + t] = -1.0
            a_ub.append(row)
            b_ub.append(0.0)
    for i in range(n):
        row = np.zeros(n_z + t_len)
        row[i:n_z:n] = -1.0 / t_len
        a_ub.append(row)
        b_ub.append(-footprint[:, i].mean())
    bounds = [(0.0, zbar[i]) for _ in range(t_len) for i in range(n)] + [(0.0, None)] * t_len
    result = linprog(cost, A_ub=np.array(a_ub), b_ub=b_ub, bounds=bounds, method="highs")
    assert result.status == 0
    return float(result.fun)


@pytest.mark.slow
def test_auxiliary_reformulation_has_the_same_optimum():
    spec = make_fleet([1.0, 1.0], n_gateways=1)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        trace = [
            make_slot(t, [int(rng.integers(3, 9)) / 100], rng.uniform(20, 80, 2),
                      carbon=rng.uniform(0.1, 0.9, 2), wue_direct=rng.uniform(0.5, 6, 2))
            for t in range(2)
        ]
        equity = EquitySpec(theta_carbon=rng.uniform(0.5, 2, 2), theta_water=rng.uniform(0.5, 2, 2),
                            mu_carbon=float(rng.uniform(10, 100)), mu_water=float(rng.uniform(1, 5)))
        factors = [cost_factors(s) for s in trace]
        zbar_c = np.max([f.carbon * spec.capacity for f in factors], axis=0)
        zbar_w = np.max([f.water * spec.capacity for f in factors], axis=0)

        minimax, reformulated = np.inf, np.inf
        for first in _split_grid(float(trace[0].load.sum())):
            for second in _split_grid(float(trace[1].load.sum())):
                x = np.stack((first, second))
                energy = float(sum(f.energy @ row for f, row in zip(factors, x))) / 2
                carbon = np.stack([f.carbon * row for f, row in zip(factors, x)])
                water = np.stack([f.water * row for f, row in zip(factors, x)])
                minimax = min(minimax, energy
                              + equity.mu_carbon * float(np.max(equity.theta_carbon * carbon.mean(axis=0)))
                              + equity.mu_water * float(np.max(equity.theta_water * water.mean(axis=0))))
                reformulated = min(reformulated, energy
                                   + _aux_value(carbon, equity.theta_carbon, equity.mu_carbon, zbar_c)
                                   + _aux_value(water, equity.theta_water, equity.mu_water, zbar_w))
        assert reformulated == pytest.approx(minimax, abs=1e-6), f"seed {seed}"
