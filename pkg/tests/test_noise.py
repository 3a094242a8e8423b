import io
import math

import numpy as np
import pytest

from ousignal.basis import phi_periodic
from ousignal.noise import (FamilyBounds, NoiseParams, iter_path_batches,
                            ito_integral, ito_integrals_at_jumps, observe,
                            ObservationSchemaError, read_observation_csv,
                            replicate_seed, simulate_noise,
                            write_jumps_csv, write_observation_csv)
from ousignal.signals import get_signal
from ousignal.transforms import cov_I, tau_fg

ONE = lambda t: np.ones_like(np.asarray(t, dtype=float))


def test_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(a=0.5, lam=1.0, rho1=1.0, rho2=1.0)
    with pytest.raises(ValueError):
        NoiseParams(a=0.0, lam=-1.0, rho1=1.0, rho2=1.0)
    with pytest.raises(ValueError):
        NoiseParams(a=0.0, lam=1.0, rho1=1.0, rho2=1.0, jump_law="cauchy")
    p = NoiseParams(a=-0.5, lam=2.0, rho1=1.0, rho2=0.5)
    assert p.rho_star == pytest.approx(1.5)
    assert p.y_fourth_moment == 1.0
    assert NoiseParams(0, 1, 1, 1, "gaussian").y_fourth_moment == 3.0


def test_family_bounds():
    b = FamilyBounds(a_max=1.0, lambda_max=1.0,
                     rho_star_min=1.0, rho_star_max=2.0)
    assert b.contains(NoiseParams(-1.0, 1.0, 1.0, 1.0))
    assert not b.contains(NoiseParams(-2.0, 1.0, 1.0, 1.0))
    assert not b.contains(NoiseParams(0.0, 0.0, 0.5, 0.0))


def test_simulation_determinism_and_invariants(ref_params):
    p1 = simulate_noise(ref_params, 10, 1 / 128, seed=99)
    p2 = simulate_noise(ref_params, 10, 1 / 128, seed=99)
    assert np.array_equal(p1.xi, p2.xi)
    assert np.array_equal(p1.dw, p2.dw)
    assert np.array_equal(p1.jump_times, p2.jump_times)
    p1.validate()
    p3 = simulate_noise(ref_params, 10, 1 / 128, seed=100)
    assert not np.array_equal(p1.xi, p3.xi)


def test_simulation_rejects_bad_grid(ref_params):
    with pytest.raises(ValueError):
        simulate_noise(ref_params, 10, -0.1, seed=1)
    with pytest.raises(ValueError):
        simulate_noise(ref_params, 10, 0.3, seed=1)
    with pytest.raises(ValueError):
        simulate_noise(ref_params, 10, 1 / 64, seed=None)


def test_zero_scales_give_zero_path():
    p = simulate_noise(NoiseParams(0.0, 0.0, 0.0, 0.0), 5, 1 / 64, seed=3)
    assert np.all(p.xi == 0.0)
    assert p.jump_times.size == 0


def test_jump_count_and_sizes(ref_params):
    p = simulate_noise(ref_params, 20, 1 / 128, seed=11)
    t_mid = 10.0
    assert p.jump_count(t_mid) == int(np.sum(p.jump_times <= t_mid))
    jumps = p.xi[p.jump_nodes] - p.xi_left[p.jump_nodes]
    assert np.allclose(jumps, ref_params.rho2 * p.jump_marks)


def test_pinned_jump_times(ref_params):
    arr = np.array([0.5, 1.25])
    p = simulate_noise(ref_params, 4, 1 / 64, seed=21, jump_times=arr)
    assert np.array_equal(p.jump_times, arr)
    assert np.all(np.isin(arr, p.times))


def test_brownian_terminal_variance():
    # Degenerate config: the path is standard Brownian motion.
    params = NoiseParams(a=0.0, lam=0.0, rho1=1.0, rho2=0.0)
    n, reps = 20, 4000
    last = np.empty(reps)
    for batch in iter_path_batches(params, n, 64, reps, 424242):
        last[batch.offset:batch.offset + batch.size] = batch.xi[:, -1]
    scaled = last / math.sqrt(n)
    var = scaled.var(ddof=1)
    se = math.sqrt(2.0 / (reps - 1))  # SE of a chi-square variance estimate
    assert abs(var - 1.0) <= 3 * se
    assert abs(scaled.mean()) <= 3 / math.sqrt(reps)


def test_stationary_variance_matches_transform_oracle(ref_params):
    n, reps = 20, 4000
    last = np.empty(reps)
    for batch in iter_path_batches(ref_params, n, 128, reps, 77):
        last[batch.offset:batch.offset + batch.size] = batch.xi[:, -1]
    target = cov_I(ONE, ONE, ref_params, float(n))
    assert target == pytest.approx(
        ref_params.rho_star * (1 - math.exp(2 * ref_params.a * n)) / 2.0,
        rel=1e-9,
    )
    se = (last**2).std(ddof=1) / math.sqrt(reps)
    assert abs(np.mean(last**2) - target) <= 3 * se
    assert abs(last.mean()) <= 3 * last.std(ddof=1) / math.sqrt(reps)


def test_observe_identities(ref_params):
    zero = get_signal("zero")
    path = simulate_noise(ref_params, 10, 1 / 128, seed=5)
    obs = observe(zero, path)
    assert np.allclose(obs.y_increments, np.diff(path.xi))

    one_sig = get_signal("trigpoly")
    obs2 = observe(one_sig, path)
    theta1 = one_sig.coeffs(1)[0]
    assert obs2.y_increments.sum() - 10 * theta1 == pytest.approx(
        path.xi[-1], abs=1e-10
    )


def test_observe_constant_signal_noiseless():
    silent = NoiseParams(0.0, 0.0, 0.0, 0.0)
    path = simulate_noise(silent, 5, 1 / 64, seed=8)
    sig = get_signal("zero")
    obs = observe(sig, path)
    assert np.allclose(np.cumsum(obs.y_increments), 0.0)


def test_ito_integral_trivials(ref_params):
    path = simulate_noise(ref_params, 20, 1 / 256, seed=13)
    zero_f = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    assert ito_integral(zero_f, path) == 0.0
    # Telescoping: exact when a = 0, quadrature-limited otherwise.
    assert abs(ito_integral(ONE, path) - path.xi[-1]) < 0.05
    p0 = simulate_noise(NoiseParams(0.0, 1.0, 1.0, 1.0), 20, 1 / 256, seed=13)
    assert ito_integral(ONE, p0) == pytest.approx(p0.xi[-1], abs=1e-10)


def test_ito_integral_martingale_and_variance_bound(ref_params):
    # Mean zero within noise and second moment below 3 rho* int f^2.
    n, reps = 20, 1500
    for j in (1, 2, 5):
        f = phi_periodic(j)
        vals = np.array([
            ito_integral(f, simulate_noise(ref_params, n, 1 / 128,
                                           seed=replicate_seed((3511, j), r)))
            for r in range(reps)
        ])
        se = vals.std(ddof=1) / math.sqrt(reps)
        assert abs(vals.mean()) <= 3 * se
        cap = 3.0 * ref_params.rho_star * n
        m2 = np.mean(vals**2)
        m2_se = (vals**2).std(ddof=1) / math.sqrt(reps)
        assert m2 <= cap + 3 * m2_se


def test_ito_refinement_stability(ref_params):
    # Halving the step on a shared Brownian/jump refinement moves the
    # integral by O(dt): only the drift quadrature depends on the grid.
    f = phi_periodic(2)
    diffs = {}
    for dt in (1 / 64, 1 / 128):
        fine = simulate_noise(ref_params, 10, dt / 2, seed=31415)
        i_fine = ito_integral(f, fine)
        # Coarsen: drop every other uniform node by rebuilding the cells.
        keep = np.ones(fine.times.size, dtype=bool)
        uniform = np.isclose(fine.times * (2 / dt) % 2.0, 1.0)
        keep &= ~uniform
        times = fine.times[keep]
        idx = np.searchsorted(fine.times, times)
        xi = fine.xi[idx]
        xi_left = fine.xi_left[idx]
        dw = np.add.reduceat(fine.dw, idx[:-1])
        coarse = type(fine)(
            params=fine.params, n=fine.n, dt=dt, seed=fine.seed,
            times=times, xi=xi, xi_left=xi_left, dw=dw,
            jump_times=fine.jump_times, jump_marks=fine.jump_marks,
            jump_nodes=np.searchsorted(times, fine.jump_times),
        )
        diffs[dt] = abs(ito_integral(f, coarse) - i_fine)
    scale = 10 * abs(ref_params.a) * math.sqrt(10 * ref_params.rho_star)
    for dt, d in diffs.items():
        assert d <= scale * dt, (dt, d)


def test_batch_matches_single_path_law(ref_params):
    # Same seeds feed both engines differently, but the batch terminal
    # variance must agree with the exact transform value.
    n, reps = 6, 3000
    term = np.empty(reps)
    for b in iter_path_batches(ref_params, n, 64, reps, 909):
        term[b.offset:b.offset + b.size] = b.xi[:, -1]
    target = cov_I(ONE, ONE, ref_params, float(n))
    se = (term**2).std(ddof=1) / math.sqrt(reps)
    assert abs(np.mean(term**2) - target) <= 3 * se


def test_batch_independent_of_batch_size(ref_params):
    a = np.empty((40, 3))
    for b in iter_path_batches(ref_params, 2, 32, 40, 5150, max_cells=10**9):
        a[b.offset:b.offset + b.size] = b.xi[:, :3]
    c = np.empty((40, 3))
    for b in iter_path_batches(ref_params, 2, 32, 40, 5150, max_cells=200):
        c[b.offset:b.offset + b.size] = b.xi[:, :3]
    assert np.array_equal(a, c)


def test_csv_round_trip(ref_params):
    sig = get_signal("trigpoly")
    path = simulate_noise(ref_params, 5, 1 / 64, seed=777)
    obs = observe(sig, path)
    buf = io.StringIO()
    write_observation_csv(obs, buf)
    buf.seek(0)
    times, incs = read_observation_csv(buf)
    assert np.array_equal(times, obs.noise.times)
    assert np.array_equal(incs, obs.y_increments)

    jbuf = io.StringIO()
    write_jumps_csv(path, jbuf)
    lines = jbuf.getvalue().strip().splitlines()
    assert lines[0] == "T_k,Y_k"
    assert len(lines) == 1 + path.jump_times.size


def test_csv_schema_errors():
    with pytest.raises(ObservationSchemaError):
        read_observation_csv(io.StringIO(""))
    with pytest.raises(ObservationSchemaError):
        read_observation_csv(io.StringIO("a,b\n1,2\n"))
    bad = "t,xi,y_increment\n0.0,0.0,0.0\n2.0,0.1,0.2\n1.0,0.1,0.2\n"
    with pytest.raises(ObservationSchemaError):
        read_observation_csv(io.StringIO(bad))


def test_ito_integrals_at_jumps_prefix(ref_params):
    arr = np.array([0.7, 1.9])
    path = simulate_noise(ref_params, 5, 1 / 128, seed=2024, jump_times=arr)
    f = phi_periodic(2)
    vals = ito_integrals_at_jumps(f, path)
    assert vals.shape == (2,)
    # First arrival sees no prior jump contribution in its own terms:
    # recomputing I over [0, T_1) from the stored cells must agree.
    node = path.jump_nodes[0]
    delta = np.diff(path.times[: node + 1])
    fv = f(path.times[: node + 1])
    drift = path.params.a * np.sum(
        0.5 * delta * (fv[:-1] * path.xi[:node]
                       + fv[1:] * path.xi_left[1:node + 1])
    )
    brown = path.params.rho1 * np.sum(fv[:-1] * path.dw[:node])
    assert vals[0] == pytest.approx(drift + brown, rel=1e-12)
