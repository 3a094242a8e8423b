"""Catalogue of 1-periodic test signals with smoothness metadata.

Each catalogue entry carries the evaluator, an analytic derivative (when the
signal is differentiable), Sobolev-ball metadata (k, r), the total-variation
norm of the derivative, and a table of Fourier coefficients used for exact
tail-energy accounting in risk computations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import QuadratureConfig, integrate_period

__all__ = [
    "SignalSpec",
    "MembershipResult",
    "ellipsoid_weight",
    "check_sobolev_membership",
    "get_signal",
    "catalogue",
]

# Grid used for the cached coefficient table; coefficients are alias-free up
# to frequency _COEFF_GRID/2, i.e. for basis indices beyond the table depth.
_COEFF_GRID = 8192
_COEFF_DEPTH = 2048


def ellipsoid_weight(j: int, k: int) -> float:
    """Sobolev ellipsoid weight a_j = sum_{i=0}^{k} (2*pi*[j/2])^(2i).

    For j = 1 the frequency [j/2] is zero and every term of the sum counts
    as one, so a_1 = k + 1.
    """
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    if k < 1:
        raise ValueError(f"smoothness order must be >= 1, got {k}")
    freq = j // 2
    if freq == 0:
        return float(k + 1)
    base = (2.0 * np.pi * freq) ** 2
    return float(np.sum(base ** np.arange(k + 1)))


def ellipsoid_weights(j_max: int, k: int) -> np.ndarray:
    """Vector (a_1, ..., a_{j_max})."""
    return np.array([ellipsoid_weight(j, k) for j in range(1, j_max + 1)])


@dataclass
class SignalSpec:
    """A 1-periodic test signal with smoothness metadata.

    Attributes
    ----------
    name : str
        Catalogue key.
    evaluator : callable
        Vectorized map [0, 1] -> R (extended 1-periodically when sampled on
        longer horizons).
    k : int
        Smoothness order of the Sobolev ball the signal is declared in.
    r : float
        Sobolev radius.
    derivative : callable, optional
        Analytic derivative, required for the total-variation norm.
    analytic_coeffs : ndarray, optional
        Exact Fourier coefficients for band-limited signals.
    dS_l1 : float, optional
        Integral of |dS/dt| over one period; absent for non-differentiable
        signals.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    k: int
    r: float
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    analytic_coeffs: Optional[np.ndarray] = None
    dS_l1: Optional[float] = None
    _coeff_table: Optional[np.ndarray] = field(default=None, repr=False)
    _energy: Optional[float] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("smoothness order k must be >= 1")
        if self.r <= 0:
            raise ValueError("Sobolev radius r must be positive")
        if self.dS_l1 is None and self.derivative is not None:
            self.dS_l1 = float(
                integrate_period(lambda x: np.abs(self.derivative(x)))
            )

    def coeffs(self, j_max: int) -> np.ndarray:
        """Fourier coefficients (theta_1, ..., theta_{j_max})."""
        if self.analytic_coeffs is not None:
            out = np.zeros(j_max)
            m = min(j_max, self.analytic_coeffs.size)
            out[:m] = self.analytic_coeffs[:m]
            return out
        if self._coeff_table is None:
            self._coeff_table = _coeff_table_fft(self.evaluator)
        if j_max > self._coeff_table.size:
            raise ValueError(
                f"coefficient table depth {self._coeff_table.size} exceeded "
                f"(requested {j_max})"
            )
        return self._coeff_table[:j_max].copy()

    @property
    def energy(self) -> float:
        """Squared L2 norm of the signal over one period."""
        if self._energy is None:
            if self.analytic_coeffs is not None:
                self._energy = float(np.sum(self.analytic_coeffs**2))
            else:
                self._energy = float(
                    integrate_period(lambda x: self.evaluator(x) ** 2)
                )
        return self._energy

    def tail_energy(self, j_max: int) -> float:
        """Coefficient energy beyond index j_max, from the exact signal
        energy minus the truncated Parseval sum."""
        head = float(np.sum(self.coeffs(j_max) ** 2))
        return max(self.energy - head, 0.0)

    def cell_integrals(self, n_per: int, gauss_order: int = 5) -> np.ndarray:
        """Integrals of the signal over the cells of a uniform grid with
        ``n_per`` cells per period (Gauss-Legendre panels)."""
        nodes, wts = np.polynomial.legendre.leggauss(gauss_order)
        left = np.arange(n_per) / n_per
        h = 1.0 / n_per
        x = left[:, None] + 0.5 * h * (nodes[None, :] + 1.0)
        vals = self.evaluator(x % 1.0)
        return 0.5 * h * vals @ wts


def _coeff_table_fft(evaluator: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Coefficient table via FFT of uniform samples (rectangle rule, which is
    spectrally accurate for smooth periodic integrands)."""
    x = np.arange(_COEFF_GRID) / _COEFF_GRID
    samples = np.asarray(evaluator(x), dtype=float)
    spec = np.fft.rfft(samples) / _COEFF_GRID
    out = np.zeros(_COEFF_DEPTH)
    out[0] = spec[0].real
    for j in range(2, _COEFF_DEPTH + 1):
        f = j // 2
        if j % 2 == 0:
            out[j - 1] = np.sqrt(2.0) * spec[f].real
        else:
            out[j - 1] = -np.sqrt(2.0) * spec[f].imag
    return out


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    margin: float
    truncation: int


def check_sobolev_membership(signal: SignalSpec, j_max: int,
                             tol: float = 1e-9) -> MembershipResult:
    """Check the ellipsoid constraint sum_j a_j theta_j^2 <= r on truncated
    coefficients.

    ``margin`` is r minus the truncated weighted sum; membership is declared
    when the margin is nonnegative.  A warning is emitted when the margin is
    within ``tol`` of zero: at this truncation the question is undecidable.
    """
    theta = signal.coeffs(j_max)
    weights = ellipsoid_weights(j_max, signal.k)
    margin = float(signal.r - np.sum(weights * theta**2))
    if abs(margin) <= tol:
        warnings.warn(
            f"Sobolev membership of {signal.name!r} undecidable at "
            f"truncation {j_max}: margin {margin:.3e} within tolerance",
            stacklevel=2,
        )
    return MembershipResult(member=margin >= 0.0, margin=margin, truncation=j_max)


# --------------------------------------------------------------------------
# Catalogue
# --------------------------------------------------------------------------

# Band-limited signal in the Sobolev ball W^1_1: coefficients were chosen so
# the k=1 ellipsoid sum is about 0.90, leaving a real margin below r = 1.
_TRIGPOLY_COEFFS = np.array([0.25, 0.11, 0.06, 0.025, 0.015])


def _trigpoly_eval(x):
    x = np.asarray(x, dtype=float)
    c = _TRIGPOLY_COEFFS
    s2 = np.sqrt(2.0)
    w1 = 2.0 * np.pi * x
    w2 = 4.0 * np.pi * x
    return (c[0]
            + c[1] * s2 * np.cos(w1) + c[2] * s2 * np.sin(w1)
            + c[3] * s2 * np.cos(w2) + c[4] * s2 * np.sin(w2))


def _trigpoly_deriv(x):
    x = np.asarray(x, dtype=float)
    c = _TRIGPOLY_COEFFS
    s2 = np.sqrt(2.0)
    w1 = 2.0 * np.pi * x
    w2 = 4.0 * np.pi * x
    return (2.0 * np.pi * s2 * (-c[1] * np.sin(w1) + c[2] * np.cos(w1))
            + 4.0 * np.pi * s2 * (-c[3] * np.sin(w2) + c[4] * np.cos(w2)))


def _expcos_eval(x):
    x = np.asarray(x, dtype=float)
    return np.exp(np.cos(2.0 * np.pi * x))


def _expcos_deriv(x):
    x = np.asarray(x, dtype=float)
    return -2.0 * np.pi * np.sin(2.0 * np.pi * x) * np.exp(np.cos(2.0 * np.pi * x))


def _build_catalogue() -> dict[str, SignalSpec]:
    zero = SignalSpec(
        name="zero",
        evaluator=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        derivative=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        k=1,
        r=1.0,
        analytic_coeffs=np.zeros(1),
        dS_l1=0.0,
    )
    trigpoly = SignalSpec(
        name="trigpoly",
        evaluator=_trigpoly_eval,
        derivative=_trigpoly_deriv,
        k=1,
        r=1.0,
        analytic_coeffs=_TRIGPOLY_COEFFS.copy(),
    )
    expcos = SignalSpec(
        name="expcos",
        evaluator=_expcos_eval,
        derivative=_expcos_deriv,
        k=2,
        r=2100.0,
        analytic_coeffs=None,
    )
    return {s.name: s for s in (zero, trigpoly, expcos)}


_CATALOGUE: dict[str, SignalSpec] | None = None


def catalogue() -> dict[str, SignalSpec]:
    """Catalogue of named test signals (built once, then shared)."""
    global _CATALOGUE
    if _CATALOGUE is None:
        _CATALOGUE = _build_catalogue()
    return _CATALOGUE


def get_signal(name: str) -> SignalSpec:
    cat = catalogue()
    if name not in cat:
        raise KeyError(f"unknown signal {name!r}; available: {sorted(cat)}")
    return cat[name]
