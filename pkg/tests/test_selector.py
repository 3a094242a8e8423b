import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ousignal.noise import NoiseParams, observe, simulate_noise
from ousignal.selector import (SelectionConfig, WeightSequence, build_grid,
                               cost, default_epsilon, default_k_star,
                               estimate_sigma, estimate_theta,
                               estimate_theta_vector, oracle_weight_alpha0,
                               pinsker_weight, rho_schedule, select)
from ousignal.signals import get_signal
from ousignal.risklab import theta_hat_samples

PI = math.pi


def test_weight_sequence_invariants():
    w = WeightSequence(np.array([1.0, 0.5, 0.0]))
    assert w.support == 2
    assert w.energy == pytest.approx(1.25)
    assert np.array_equal(w.padded(5), np.array([1.0, 0.5, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        WeightSequence(np.array([1.2]))
    with pytest.raises(ValueError):
        WeightSequence(np.array([-0.1]))


def test_pinsker_weight_n1000():
    w = pinsker_weight(1, 1.0, 1000)
    tau1 = 6.0 / PI**2
    omega = (tau1 * 1000.0) ** (1.0 / 3.0)
    assert w.omega == pytest.approx(omega, rel=1e-12)
    j0 = math.floor(omega / math.log(1000))
    assert j0 == 1
    assert w.gamma[0] == 1.0
    assert w.gamma[1] == pytest.approx(1.0 - 2.0 / omega, rel=1e-12)
    assert w.padded(9)[8] == 0.0
    assert w.support == math.floor(omega)


def test_pinsker_weight_boundary_continuity():
    # Weights are one through j0 and vanish beyond the support edge.
    for beta, t, n in ((1, 0.5, 200), (2, 1.5, 1000), (3, 2.0, 5000)):
        w = pinsker_weight(beta, t, n)
        j0 = math.floor(w.omega / math.log(n))
        if j0 >= 1:
            assert np.all(w.gamma[:j0] == 1.0)
        assert np.all(w.gamma >= 0.0)
        assert np.all(np.diff(w.gamma) <= 1e-12)
        assert w.padded(int(w.omega) + 2)[-1] == 0.0


@given(st.integers(1, 4), st.floats(0.05, 4.0), st.integers(10, 100_000))
@settings(max_examples=60)
def test_pinsker_weight_properties(beta, t, n):
    w = pinsker_weight(beta, t, n)
    assert 0 <= w.support <= max(w.gamma.size, 1)
    assert w.energy <= w.support + 1e-12
    assert np.all((0.0 <= w.gamma) & (w.gamma <= 1.0))


def test_pinsker_weight_validation():
    with pytest.raises(ValueError):
        pinsker_weight(0, 1.0, 100)
    with pytest.raises(ValueError):
        pinsker_weight(1, -1.0, 100)
    with pytest.raises(ValueError):
        pinsker_weight(1, 1.0, 2)


def test_build_grid_defaults_n1000():
    g = build_grid(1000)
    assert g.epsilon == pytest.approx(1.0 / math.log(1001.0))
    assert g.m == math.floor(1.0 / g.epsilon**2) == 47
    assert g.k_star == math.ceil(math.sqrt(math.log(1001.0))) == 3
    assert g.nu == g.k_star * g.m == 141
    assert g.mu <= (1000.0 / g.epsilon) ** (1.0 / 3.0)


def test_build_grid_singleton():
    g = build_grid(100, k_star=1, epsilon=1.0)
    assert g.m == 1 and g.nu == 1
    with pytest.raises(ValueError):
        build_grid(100, epsilon=1.5)


def test_grid_support_energy_coherence():
    for n in (50, 200, 1000):
        g = build_grid(n)
        for w in g.members:
            assert w.energy <= w.support + 1e-12
            assert w.support <= n
        assert g.mu <= (n / g.epsilon) ** (1.0 / 3.0)


def test_grid_contains_alpha():
    g = build_grid(1000)
    assert g.contains_alpha((1, g.epsilon))
    assert g.contains_alpha((3, g.m * g.epsilon))
    assert not g.contains_alpha((4, g.epsilon))
    assert not g.contains_alpha((1, (g.m + 1) * g.epsilon))


def test_rho_schedule_values():
    assert rho_schedule(1) == pytest.approx(1.0 / (6.0 + math.log(2.0)))
    assert rho_schedule(1000) == pytest.approx(1.0 / (6.0 + math.log(1001.0)))
    values = [rho_schedule(n) for n in (1, 10, 100, 1000, 10**6)]
    assert all(0 < v < 1 / 3 for v in values)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_estimate_sigma_arithmetic():
    theta = np.full(100, 0.01)
    assert estimate_sigma(theta, 100) == pytest.approx(90.0 / 100**2)
    assert estimate_sigma(np.zeros(50), 50) == 0.0
    with pytest.raises(ValueError):
        estimate_sigma(np.zeros(3), 3)
    with pytest.raises(ValueError):
        estimate_sigma(np.zeros(5), 10)


def test_cost_trivials():
    zero = WeightSequence(np.zeros(4))
    assert cost(zero, np.ones(10), 1.0, 0.1, 20) == 0.0
    proj = WeightSequence(np.ones(5))
    got = cost(proj, np.zeros(5), 2.0, 0.25, 100)
    assert got == pytest.approx((2.0 + 0.25) * 5 * 2.0 / 100)


def test_cost_projection_simplification():
    # For 0/1 weights the cost reduces to minus the captured energy plus
    # (2 + rho) sigma d / n.
    rng = np.random.default_rng(7)
    theta = rng.standard_normal(12) * 0.3
    mask = np.array([1.0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0])
    w = WeightSequence(mask)
    sigma, rho, n = 1.7, 0.2, 50
    d = int(mask.sum())
    expect = -np.sum((mask * theta) ** 2) + (2 + rho) * sigma * d / n
    assert cost(w, theta, sigma, rho, n) == pytest.approx(expect, rel=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6),
       st.floats(0.0, 3.0), st.floats(0.01, 0.33, exclude_max=True))
@settings(max_examples=60)
def test_cost_identity_random(theta, sigma, rho):
    theta = np.asarray(theta)
    gamma = np.array([1.0, 0.8, 0.6, 0.4, 0.2, 0.1])
    w = WeightSequence(gamma)
    n = 30
    direct = (np.sum(gamma**2 * theta**2)
              - 2 * np.sum(gamma * (theta**2 - sigma / n))
              + rho * sigma * np.sum(gamma**2) / n)
    assert cost(w, theta, sigma, rho, n) == pytest.approx(direct, rel=1e-9,
                                                          abs=1e-12)


def test_cost_validation():
    w = WeightSequence(np.ones(3))
    with pytest.raises(ValueError):
        cost(w, np.ones(3), -1.0, 0.1, 10)
    with pytest.raises(ValueError):
        cost(w, np.ones(3), 1.0, 0.5, 10)
    with pytest.raises(ValueError):
        cost(w, np.ones(3), 1.0, 0.1, 2)


def test_penalty_monotone_in_support():
    theta = np.zeros(10)
    sigma, rho, n = 1.0, 0.1, 100
    costs = [
        cost(WeightSequence(np.ones(d)), theta, sigma, rho, n)
        for d in range(1, 8)
    ]
    assert all(b > a for a, b in zip(costs, costs[1:]))


def test_select_singleton_and_tiebreak():
    g1 = build_grid(100, k_star=1, epsilon=1.0)
    theta = np.zeros(100)
    res = select(theta, g1, SelectionConfig(sigma_mode="known",
                                            sigma_known=1.0))
    assert res.selected == 0
    full = build_grid(100)
    res2 = select(theta, full, SelectionConfig(sigma_mode="known",
                                               sigma_known=0.0))
    # All costs vanish at sigma = 0 with zero data: smallest index wins.
    assert res2.selected == int(np.argmin(res2.costs))
    assert res2.selected == 0


def test_select_noiseless_prefers_largest_window_per_slice():
    sig = get_signal("trigpoly")
    n = 100
    grid = build_grid(n)
    theta = sig.coeffs(n)
    res = select(theta, grid, SelectionConfig(sigma_mode="known",
                                              sigma_known=0.0))
    costs = res.costs
    # Brute force: inside each smoothness slice the cost is minimal at the
    # largest grid coordinate (weights closest to one on the support).
    for beta in range(1, grid.k_star + 1):
        sl = [i for i, w in enumerate(grid.members) if w.alpha[0] == beta]
        best = min(sl, key=lambda i: costs[i])
        assert best == sl[-1]
    assert res.alpha == grid.members[res.selected].alpha


def test_select_deterministic_and_costs_consistent(ref_params):
    sig = get_signal("expcos")
    n = 100
    theta = theta_hat_samples(sig, ref_params, n, 1, 555, j_max=n)[0]
    grid = build_grid(n)
    cfg = SelectionConfig()
    r1 = select(theta, grid, cfg)
    r2 = select(theta, grid, cfg)
    assert r1.selected == r2.selected
    assert r1.sigma_value == r2.sigma_value
    direct = np.array([
        cost(w, theta, r1.sigma_value, r1.rho, n) for w in grid.members
    ])
    assert np.allclose(direct, r1.costs)
    assert r1.selected == int(np.argmin(direct))
    assert np.allclose(
        r1.coeffs,
        grid.members[r1.selected].padded(r1.coeffs.size)
        * theta[: r1.coeffs.size],
    )


def test_selection_invariant_under_cost_shift():
    rng = np.random.default_rng(11)
    costs = rng.standard_normal(25)
    assert int(np.argmin(costs)) == int(np.argmin(costs + 13.7))


def test_estimate_theta_noiseless(ref_params):
    # The left-endpoint rule carries an O(dt) deterministic bias (phi at the
    # left edge against the cell integral), so the noiseless error must be
    # small at the grid scale and halve with the step.
    silent = NoiseParams(0.0, 0.0, 0.0, 0.0)
    sig = get_signal("trigpoly")
    theta = sig.coeffs(8)
    errs = {}
    for dt in (1 / 256, 1 / 512):
        path = simulate_noise(silent, 10, dt, seed=4)
        obs = observe(sig, path)
        got = estimate_theta_vector(obs, 8)
        errs[dt] = np.max(np.abs(got - theta))
        assert errs[dt] <= 4.0 * dt
    assert errs[1 / 512] <= 0.6 * errs[1 / 256]
    path = simulate_noise(silent, 10, 1 / 512, seed=4)
    obs = observe(sig, path)
    assert estimate_theta(obs, 2) == pytest.approx(theta[1], abs=4 / 512)
    const_obs = observe(get_signal("zero"), path)
    assert estimate_theta(const_obs, 1) == pytest.approx(0.0, abs=1e-12)


def test_estimate_theta_rejects_large_index(ref_params):
    path = simulate_noise(ref_params, 5, 1 / 64, seed=6)
    obs = observe(get_signal("zero"), path)
    with pytest.raises(ValueError):
        estimate_theta(obs, 6)
    with pytest.raises(ValueError):
        estimate_theta_vector(obs, 0)


def test_estimate_theta_variance_brownian():
    # Under pure Brownian noise each coefficient has variance 1/n.
    brown = NoiseParams(0.0, 0.0, 1.0, 0.0)
    n, reps = 100, 2000
    theta = theta_hat_samples(get_signal("zero"), brown, n, reps, 8888,
                              j_max=6)
    scaled = theta * math.sqrt(n)
    for j in range(6):
        var = scaled[:, j].var(ddof=1)
        assert abs(var - 1.0) <= 3 * math.sqrt(2.0 / (reps - 1))


def test_oracle_weight_alpha0():
    w = oracle_weight_alpha0(1, 1.0, 1.0, 1000, epsilon=0.25)
    assert w.alpha == (1, 1.0)
    w2 = oracle_weight_alpha0(1, 0.5, 1.0, 1000, epsilon=0.14476)
    assert w2.alpha[1] == pytest.approx(3 * 0.14476)
    with pytest.raises(ValueError):
        oracle_weight_alpha0(1, 0.1, 1.0, 1000, epsilon=0.25)
    with pytest.warns(UserWarning):
        oracle_weight_alpha0(1, 10.0, 1.0, 1000, epsilon=0.25)


def test_defaults():
    assert default_epsilon(1000) == pytest.approx(1.0 / math.log(1001.0))
    assert default_k_star(1000) == 3
