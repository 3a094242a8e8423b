"""Estimation core: coefficient estimates, the variance proxy, the Pinsker
weight grid, the penalized cost, and the model-selection rule.

Coefficient estimates are left-endpoint Riemann sums of the basis against
observation increments, matching the stochastic-integral convention of the
noise module.  Selection minimizes the penalized cost

    J_n(gamma) = sum gamma(j)^2 th_j^2 - 2 sum gamma(j) (th_j^2 - sigma/n)
               + rho * sigma * |gamma|^2 / n

over a finite grid of shrinkage sequences; ties break to the smallest grid
index so the procedure is deterministic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import basis_matrix
from .noise import ObservationPath

__all__ = [
    "WeightSequence",
    "WeightGrid",
    "SelectionConfig",
    "EstimationResult",
    "pinsker_weight",
    "build_grid",
    "default_epsilon",
    "default_k_star",
    "estimate_theta",
    "estimate_theta_vector",
    "estimate_sigma",
    "cost",
    "select",
    "rho_schedule",
    "oracle_weight_alpha0",
]


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """A shrinkage sequence gamma with values in [0, 1].

    ``alpha`` is the grid index (beta, t) for Pinsker-type members and None
    for custom sequences.  ``omega`` is the real support edge of Pinsker
    members.  An all-zero sequence is allowed as an inert member: grids at
    small horizons can contain cells whose support edge falls below 1, and
    the zero estimator is also useful in tests.
    """

    gamma: np.ndarray
    alpha: Optional[tuple[int, float]] = None
    omega: Optional[float] = None

    def __post_init__(self) -> None:
        g = np.asarray(self.gamma, dtype=float)
        object.__setattr__(self, "gamma", g)
        if g.ndim != 1:
            raise ValueError("gamma must be a one-dimensional sequence")
        if g.size and (g.min() < 0.0 or g.max() > 1.0):
            raise ValueError("weights must lie in [0, 1]")

    @property
    def support(self) -> int:
        """Number of nonzero weights."""
        return int(np.count_nonzero(self.gamma))

    @property
    def energy(self) -> float:
        """Squared l2 norm of the weights."""
        return float(np.sum(self.gamma**2))

    def padded(self, j_max: int) -> np.ndarray:
        out = np.zeros(j_max)
        m = min(j_max, self.gamma.size)
        out[:m] = self.gamma[:m]
        return out


def pinsker_weight(beta: int, t: float, n: int) -> WeightSequence:
    """The Pinsker-type weight sequence for grid index (beta, t).

    The support edge is omega = (tau_beta * t * n)^(1/(2*beta+1)) with
    tau_beta = (beta+1)(2*beta+1)/(pi^(2*beta) * beta); weights are one up
    to j0 = floor(omega / ln n), then decay as 1 - (j/omega)^beta, and
    vanish beyond omega.
    """
    if beta < 1:
        raise ValueError(f"beta must be a positive integer, got {beta}")
    if t <= 0:
        raise ValueError(f"grid coordinate t must be positive, got {t}")
    if n < 3:
        raise ValueError(f"need n >= 3 so that ln n > 1, got {n}")
    tau_beta = (beta + 1) * (2 * beta + 1) / (np.pi ** (2 * beta) * beta)
    omega = (tau_beta * t * n) ** (1.0 / (2 * beta + 1))
    j0 = int(np.floor(omega / np.log(n)))
    j_top = int(np.floor(omega))
    js = np.arange(1, j_top + 1)
    gamma = np.where(js <= j0, 1.0, 1.0 - (js / omega) ** beta)
    gamma = np.clip(gamma, 0.0, 1.0)
    return WeightSequence(gamma=gamma, alpha=(beta, float(t)), omega=float(omega))


def default_epsilon(n: int) -> float:
    return 1.0 / math.log(n + 1.0)


def default_k_star(n: int) -> int:
    return int(math.ceil(math.sqrt(math.log(n + 1.0))))


@dataclass(frozen=True, eq=False)
class WeightGrid:
    """The finite family of candidate weight sequences.

    Members are ordered by (beta, t); nu = k_star * m is the family size and
    mu the largest support.
    """

    n: int
    k_star: int
    epsilon: float
    m: int
    members: tuple[WeightSequence, ...]
    nu: int = field(init=False)
    mu: int = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nu", len(self.members))
        object.__setattr__(
            self, "mu", max((w.support for w in self.members), default=0)
        )

    @property
    def omega_max(self) -> float:
        out = 0.0
        for w in self.members:
            out = max(out, w.omega if w.omega is not None else float(w.support))
        return out

    def gamma_matrix(self, j_max: Optional[int] = None) -> np.ndarray:
        """Dense (j_max, nu) matrix of the member weights."""
        if j_max is None:
            j_max = max(self.mu, 1)
        out = np.zeros((j_max, self.nu))
        for col, w in enumerate(self.members):
            out[:, col] = w.padded(j_max)
        return out

    def contains_alpha(self, alpha: tuple[int, float],
                       tol: float = 1e-9) -> bool:
        beta, t = alpha
        if not (1 <= beta <= self.k_star):
            return False
        i = t / self.epsilon
        return (abs(i - round(i)) <= tol) and 1 <= round(i) <= self.m


def build_grid(n: int, k_star: Optional[int] = None,
               epsilon: Optional[float] = None) -> WeightGrid:
    """The default weight grid (beta, t) in {1..k*} x {eps, 2 eps, .., m eps}
    with m = floor(1/eps^2); defaults eps = 1/ln(n+1), k* = ceil(sqrt(ln(n+1))).
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if epsilon is None:
        epsilon = default_epsilon(n)
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"grid pitch must lie in (0, 1], got {epsilon}")
    if k_star is None:
        k_star = default_k_star(n)
    if k_star < 1:
        raise ValueError(f"k_star must be >= 1, got {k_star}")
    m = int(np.floor(1.0 / epsilon**2))
    members = []
    for beta in range(1, k_star + 1):
        for i in range(1, m + 1):
            members.append(pinsker_weight(beta, i * epsilon, n))
    grid = WeightGrid(n=n, k_star=k_star, epsilon=epsilon, m=m,
                      members=tuple(members))
    if grid.mu > n:
        raise ValueError(
            f"largest support {grid.mu} exceeds the horizon n={n}"
        )
    return grid


def rho_schedule(n: int) -> float:
    """Default penalty coefficient rho_n = 1/(6 + ln(n+1)), always in
    (0, 1/3) and decreasing in n."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return 1.0 / (6.0 + math.log(n + 1.0))


@dataclass(frozen=True)
class SelectionConfig:
    """Penalty coefficient and variance-proxy mode for the selection rule.

    ``rho=None`` uses the schedule 1/(6+ln(n+1)).  In "known" mode the
    effective noise variance must be supplied in ``sigma_known``; in
    "estimated" mode the proxy is computed from the high-frequency
    coefficients of the data.
    """

    rho: Optional[float] = None
    sigma_mode: str = "estimated"
    sigma_known: Optional[float] = None

    def __post_init__(self) -> None:
        if self.sigma_mode not in ("known", "estimated"):
            raise ValueError("sigma_mode must be 'known' or 'estimated'")
        if self.sigma_mode == "known" and self.sigma_known is None:
            raise ValueError("known sigma mode requires sigma_known")
        if self.rho is not None and not (0.0 < self.rho < 1.0 / 3.0):
            raise ValueError(f"rho must lie in (0, 1/3), got {self.rho}")

    def resolve_rho(self, n: int) -> float:
        return self.rho if self.rho is not None else rho_schedule(n)


def estimate_theta_vector(obs: ObservationPath, j_max: int) -> np.ndarray:
    """Left-endpoint Riemann estimates of the first ``j_max`` coefficients."""
    n = obs.n
    if not (1 <= j_max <= n):
        raise ValueError(
            f"coefficient indices must satisfy j <= n = {n}, got j_max={j_max}"
        )
    phases = obs.times[:-1] % 1.0
    mat = basis_matrix(j_max, phases)
    return (obs.y_increments @ mat) / n


def estimate_theta(obs: ObservationPath, j: int) -> float:
    """Estimate of the j-th coefficient, (1/n) sum phi_j(t_i) dy_i."""
    if j < 1:
        raise ValueError(f"basis index must be >= 1, got {j}")
    return float(estimate_theta_vector(obs, j)[j - 1])


def estimate_sigma(theta_hat: np.ndarray, n: int) -> float:
    """Variance proxy: the coefficient energy above index floor(sqrt(n)),
    sum_{j=l}^{n} th_j^2 with l = floor(sqrt(n)) + 1."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    if n < 4:
        raise ValueError(f"need n >= 4 for a nonempty sum, got {n}")
    if theta_hat.size < n:
        raise ValueError(
            f"need estimates for all j <= n = {n}, got {theta_hat.size}"
        )
    l = math.isqrt(n) + 1
    return float(np.sum(theta_hat[l - 1 : n] ** 2))


def cost(gamma: WeightSequence, theta_hat: np.ndarray, sigma_value: float,
         rho: float, n: int) -> float:
    """Penalized cost J_n(gamma) of one weight sequence."""
    if sigma_value < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma_value}")
    if not (0.0 < rho < 1.0 / 3.0):
        raise ValueError(f"rho must lie in (0, 1/3), got {rho}")
    if gamma.support > n:
        raise ValueError(
            f"weight support {gamma.support} exceeds the horizon n={n}"
        )
    g = gamma.gamma
    th = np.asarray(theta_hat, dtype=float)[: g.size]
    if th.size < g.size:
        raise ValueError(
            f"need estimates up to the support edge {g.size}, got {th.size}"
        )
    th_sq = th**2
    theta_tilde = th_sq - sigma_value / n
    penalty = rho * sigma_value * gamma.energy / n
    return float(np.sum(g**2 * th_sq) - 2.0 * np.sum(g * theta_tilde) + penalty)


@dataclass
class EstimationResult:
    """Outcome of the model-selection rule."""

    theta_hat: np.ndarray
    sigma_value: float
    sigma_mode: str
    rho: float
    costs: np.ndarray
    selected: int
    alpha: Optional[tuple[int, float]]
    coeffs: np.ndarray

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.coeffs))


def select(theta_hat: np.ndarray, grid: WeightGrid,
           config: SelectionConfig = SelectionConfig(sigma_mode="estimated")
           ) -> EstimationResult:
    """Minimize the penalized cost over the grid; ties break to the
    smallest grid index."""
    if grid.nu == 0:
        raise ValueError("weight grid is empty")
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = grid.n
    if config.sigma_mode == "known":
        sigma_value = float(config.sigma_known)
    else:
        sigma_value = estimate_sigma(theta_hat, n)
    rho = config.resolve_rho(n)
    costs = np.array([
        cost(w, theta_hat, sigma_value, rho, n) for w in grid.members
    ])
    selected = int(np.argmin(costs))
    winner = grid.members[selected]
    coeffs = winner.padded(max(winner.gamma.size, 1))
    coeffs = coeffs * theta_hat[: coeffs.size]
    return EstimationResult(
        theta_hat=theta_hat,
        sigma_value=sigma_value,
        sigma_mode=config.sigma_mode,
        rho=rho,
        costs=costs,
        selected=selected,
        alpha=winner.alpha,
        coeffs=coeffs,
    )


def oracle_weight_alpha0(k: int, r: float, sigma_star: float, n: int,
                         epsilon: Optional[float] = None) -> WeightSequence:
    """The known-smoothness weight: alpha_0 = (k, t_0) with
    t_0 = floor(rbar/eps)*eps and rbar = r/sigma_star.

    Raises when the grid pitch is too coarse to represent rbar at all, and
    warns when alpha_0 falls outside the default grid for this horizon.
    """
    if epsilon is None:
        epsilon = default_epsilon(n)
    if sigma_star <= 0 or r <= 0:
        raise ValueError("need positive r and sigma_star")
    rbar = r / sigma_star
    t0 = math.floor(rbar / epsilon + 1e-12) * epsilon
    if t0 <= 0:
        raise ValueError(
            f"grid pitch eps={epsilon:.4g} too coarse for rbar={rbar:.4g}: "
            "t_0 = 0"
        )
    m = int(np.floor(1.0 / epsilon**2))
    if t0 > m * epsilon + 1e-12 or k > default_k_star(n):
        warnings.warn(
            f"alpha_0 = ({k}, {t0:.4g}) falls outside the default grid at "
            f"n={n}",
            stacklevel=2,
        )
    return pinsker_weight(k, t0, n)
