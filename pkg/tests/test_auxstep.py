import numpy as np
import pytest
from pydantic import ValidationError
from scipy.optimize import linprog

from app.src.auxstep import AuxBlock, block_value, minimize_aux, minimize_block, minimize_box


def block(mu, theta, kappa, zbar):
    return AuxBlock(mu=mu, theta=theta, kappa=kappa, zbar=zbar)


def lp_value(mu, theta, kappa, zbar):
    """min mu * s - kappa^T z  s.t.  theta_i z_i <= s, 0 <= z <= zbar."""
    n = len(theta)
    cost = np.concatenate((-np.asarray(kappa), [mu]))
    a_ub = np.hstack((np.diag(theta), -np.ones((n, 1))))
    bounds = [(0, zb) for zb in zbar] + [(0, None)]
    result = linprog(cost, A_ub=a_ub, b_ub=np.zeros(n), bounds=bounds, method="highs")
    assert result.status == 0
    return float(result.fun)


def test_zero_multipliers_give_zero():
    z, value = minimize_block(block(1.0, [1.0, 2.0], [0.0, 0.0], [3.0, 1.0]))
    np.testing.assert_array_equal(z, [0.0, 0.0])
    assert value == 0.0


def test_small_multiplier_keeps_z_at_zero():
    z, value = minimize_block(block(1.0, [1.0], [0.5], [2.0]))
    assert z == pytest.approx([0.0])
    assert value == pytest.approx(0.0)


def test_large_multiplier_saturates_z():
    z, value = minimize_block(block(1.0, [1.0], [1.5], [2.0]))
    assert z == pytest.approx([2.0])
    assert value == pytest.approx(-1.0)


def test_zero_slope_component_saturates():
    z, value = minimize_block(block(2.0, [0.0, 1.0], [0.3, 0.1], [4.0, 1.0]))
    assert z == pytest.approx([4.0, 0.0])
    assert value == pytest.approx(-1.2)


def test_negative_inputs_rejected():
    with pytest.raises(ValidationError):
        block(1.0, [1.0], [-0.1], [1.0])
    with pytest.raises(ValidationError):
        block(-1.0, [1.0], [0.1], [1.0])
    with pytest.raises(ValidationError):
        block(1.0, [1.0, 1.0], [0.1], [1.0])


def test_minimize_aux_composes_blocks():
    carbon = block(1.0, [1.0], [1.5], [2.0])
    water = block(1.0, [1.0], [0.0], [2.0])
    solution = minimize_aux(carbon, water)
    assert solution.z_carbon == pytest.approx([2.0])
    assert solution.z_water == pytest.approx([0.0])
    assert solution.value == pytest.approx(-1.0)

    idle = minimize_aux(water, water)
    assert idle.z_carbon == pytest.approx([0.0])
    assert idle.z_water == pytest.approx([0.0])


def test_symmetric_blocks_give_symmetric_outputs():
    b = block(1.0, [1.0, 2.0], [0.7, 0.6], [1.0, 0.5])
    solution = minimize_aux(b, b)
    np.testing.assert_array_equal(solution.z_carbon, solution.z_water)


def random_block(rng, n):
    return (
        float(rng.uniform(0.1, 3.0)),
        rng.uniform(0.1, 2.0, n),
        np.where(rng.random(n) < 0.2, 0.0, rng.uniform(0.0, 2.0, n)),
        rng.uniform(0.0, 3.0, n),
    )


def test_matches_lp_oracle():
    rng = np.random.default_rng(2)
    for _ in range(500):
        mu, theta, kappa, zbar = random_block(rng, int(rng.integers(1, 5)))
        z, value = minimize_box(mu, theta, kappa, zbar)
        assert np.all(z >= 0) and np.all(z <= zbar)
        assert value == pytest.approx(block_value(mu, theta, kappa, z), abs=1e-12)
        assert value == pytest.approx(lp_value(mu, theta, kappa, zbar), abs=1e-7)


def test_matches_grid_search_in_two_dimensions():
    rng = np.random.default_rng(4)
    steps = 200
    for _ in range(30):
        mu, theta, kappa, zbar = random_block(rng, 2)
        z, value = minimize_box(mu, theta, kappa, zbar)
        g0, g1 = np.meshgrid(np.linspace(0, zbar[0], steps + 1), np.linspace(0, zbar[1], steps + 1))
        grid = mu * np.maximum(theta[0] * g0, theta[1] * g1) - kappa[0] * g0 - kappa[1] * g1
        # The grid minimum is within one cell's Lipschitz slack of the true minimum.
        lipschitz = mu * theta.max() + kappa.sum()
        slack = lipschitz * zbar.max() / steps
        assert value <= grid.min() + 1e-12
        assert value >= grid.min() - slack


def test_monotone_in_kappa():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        mu, theta, kappa, zbar = random_block(rng, n)
        i = int(rng.integers(n))
        raised = kappa.copy()
        raised[i] += rng.uniform(0.01, 1.0)
        z, _ = minimize_box(mu, theta, kappa, zbar)
        z_raised, _ = minimize_box(mu, theta, raised, zbar)
        assert z_raised[i] >= z[i] - 1e-12


def test_scale_covariance():
    rng = np.random.default_rng(9)
    for _ in range(100):
        mu, theta, kappa, zbar = random_block(rng, 3)
        s = float(rng.uniform(0.5, 4.0))
        z, value = minimize_box(mu, theta, kappa, zbar)
        z_scaled, value_scaled = minimize_box(s * mu, theta, s * kappa, zbar)
        assert value_scaled == pytest.approx(s * value, rel=1e-9, abs=1e-12)
        # z stays optimal for the scaled problem
        assert block_value(s * mu, theta, s * kappa, z) == pytest.approx(value_scaled, rel=1e-9, abs=1e-12)
