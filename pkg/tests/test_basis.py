import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from ousignal.basis import (QuadratureConfig, QuadratureError, basis_matrix,
                            fourier_coeff, integrate_period, parseval_sq_distance,
                            phi, phi_periodic, synthesize)
from ousignal.signals import get_signal

SQRT2 = math.sqrt(2.0)


def test_phi_values():
    assert phi(1, 0.73) == 1.0
    assert abs(phi(2, 0.25)) < 1e-15           # sqrt(2) cos(pi/2)
    assert phi(3, 0.25) == pytest.approx(SQRT2, abs=1e-12)
    assert phi(2, 0.0) == pytest.approx(SQRT2)
    assert phi(5, 0.125) == pytest.approx(SQRT2 * math.sin(math.pi / 2))


def test_phi_rejects_bad_inputs():
    with pytest.raises(ValueError):
        phi(0, 0.5)
    with pytest.raises(ValueError):
        phi(2, 1.5)
    with pytest.raises(ValueError):
        phi(2, -0.1)


def test_phi_periodic_extension():
    f = phi_periodic(2)
    x = np.array([0.25, 1.25, 7.25])
    assert np.allclose(f(x), f(np.array([0.25, 0.25, 0.25])))


def test_orthonormality_50x50():
    quad_cfg = QuadratureConfig()
    x = (np.arange(quad_cfg.n_points) + 0.5) / quad_cfg.n_points
    mat = basis_matrix(50, x)
    gram = mat.T @ mat / quad_cfg.n_points
    assert np.max(np.abs(gram - np.eye(50))) < 1e-10


def test_fourier_coeff_constant_signal():
    const = lambda x: np.full_like(np.asarray(x, dtype=float), 3.7)
    assert fourier_coeff(const, 1) == pytest.approx(3.7, abs=1e-12)
    for j in (2, 3, 8):
        assert fourier_coeff(const, j) == pytest.approx(0.0, abs=1e-12)


def test_fourier_coeff_pure_mode_against_quad_oracle():
    signal = lambda x: SQRT2 * np.cos(2 * np.pi * np.asarray(x, dtype=float))
    got = fourier_coeff(signal, 2)
    oracle, err = quad(
        lambda x: SQRT2 * math.cos(2 * math.pi * x)
        * SQRT2 * math.cos(2 * math.pi * x), 0.0, 1.0, epsabs=1e-13,
    )
    assert err < 1e-8
    assert got == pytest.approx(oracle, abs=1e-8)
    assert got == pytest.approx(1.0, abs=1e-10)


def test_fourier_coeff_matches_catalogue_analytic():
    sig = get_signal("trigpoly")
    for j in range(1, 8):
        assert fourier_coeff(sig, j) == pytest.approx(
            sig.coeffs(8)[j - 1], abs=1e-10
        )


def test_fourier_coeff_nonconvergence_reports_estimate():
    rng = np.random.default_rng(5)
    rough = lambda x: rng.standard_normal(np.shape(x))
    with pytest.raises(QuadratureError) as err:
        fourier_coeff(rough, 3, QuadratureConfig(n_points=64, check_tol=1e-12))
    assert err.value.error_estimate > 0


def test_synthesize():
    assert synthesize(np.array([5.0]), 0.123) == pytest.approx(5.0)
    assert synthesize(np.array([0.0, 1.0]), 0.0) == pytest.approx(SQRT2)
    coeffs = np.array([0.0, 0.0, 1.0])  # sqrt(2) sin(2 pi t)
    assert synthesize(coeffs, 0.25) == pytest.approx(SQRT2, abs=1e-12)
    xs = np.linspace(0, 1, 7)
    vals = synthesize(coeffs, xs)
    assert vals.shape == xs.shape


def test_synthesis_converges_in_l2():
    sig = get_signal("expcos")
    x = (np.arange(4096) + 0.5) / 4096
    target = sig.evaluator(x)
    residuals = []
    for j_max in (1, 3, 5, 9, 17):
        approx = synthesize(sig.coeffs(j_max), x)
        residuals.append(np.mean((approx - target) ** 2))
    assert all(a >= b - 1e-15 for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] < 1e-6


def test_parseval_sq_distance_basics():
    c = np.array([1.0, -2.0, 3.0])
    assert parseval_sq_distance(c, c) == 0.0
    assert parseval_sq_distance(np.array([1.0, 0.0]),
                                np.array([0.0, 1.0])) == pytest.approx(2.0)
    theta = np.array([0.3, 0.2, -0.1])
    assert parseval_sq_distance(np.zeros(3), theta) == pytest.approx(
        np.sum(theta**2)
    )


def test_parseval_pads_to_common_truncation():
    assert parseval_sq_distance(np.array([1.0]),
                                np.array([1.0, 2.0])) == pytest.approx(4.0)


def test_parseval_matches_direct_quadrature_for_bandlimited():
    c1 = np.array([0.5, 1.0, 0.0, -0.25])
    c2 = np.array([0.0, 0.3, 0.7])
    f = lambda x: synthesize(c1, x)
    g = lambda x: synthesize(c2, x)
    direct = integrate_period(lambda x: (f(x) - g(x)) ** 2)
    assert parseval_sq_distance(c1, c2) == pytest.approx(direct, abs=1e-8)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12),
       st.lists(st.floats(-10, 10), min_size=1, max_size=12))
def test_parseval_symmetric_nonnegative(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    d1 = parseval_sq_distance(a, b)
    d2 = parseval_sq_distance(b, a)
    assert d1 == d2
    assert d1 >= 0.0
