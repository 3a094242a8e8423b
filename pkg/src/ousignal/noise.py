"""Ornstein-Uhlenbeck noise with compound-Poisson jumps and observations.

The noise solves d(xi) = a*xi dt + rho1 dw + rho2 dz with xi_0 = 0, where w
is standard Brownian motion and z a compound Poisson process with i.i.d.
standardized marks.  Paths are advanced by the exact transition between
consecutive event times (grid points merged with jump times), jointly with
the plain Brownian increment of each cell, so stochastic integrals decompose
exactly against the stored driving randomness:

    I_n(f) = a * int f(s) xi_s ds  +  rho1 * sum f(t_i) dw_i
           + rho2 * sum_k f(T_k) Y_k.

The only discretization error anywhere is the quadrature of the first term.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ._linrec import decay_recursion
from .signals import SignalSpec

__all__ = [
    "NoiseParams",
    "FamilyBounds",
    "NoisePath",
    "ObservationPath",
    "replicate_seed",
    "simulate_noise",
    "observe",
    "ito_integral",
    "ito_integrals_at_jumps",
    "write_observation_csv",
    "write_jumps_csv",
    "read_observation_csv",
    "PathBatch",
    "iter_path_batches",
]

_JUMP_LAWS = ("rademacher", "gaussian")


@dataclass(frozen=True)
class NoiseParams:
    """Parameters of the Levy-OU noise family.

    a <= 0 is the mean reversion, lam >= 0 the jump intensity per unit time,
    rho1 and rho2 the Brownian and jump scales.  Marks have zero mean, unit
    variance and finite fourth moment; the default Rademacher law has
    E Y^4 = 1, standardized Gaussian marks have E Y^4 = 3.
    """

    a: float
    lam: float
    rho1: float
    rho2: float
    jump_law: str = "rademacher"

    def __post_init__(self) -> None:
        if self.a > 0:
            raise ValueError(f"mean reversion must satisfy a <= 0, got {self.a}")
        if self.lam < 0:
            raise ValueError(f"jump intensity must be >= 0, got {self.lam}")
        if self.jump_law not in _JUMP_LAWS:
            raise ValueError(f"jump_law must be one of {_JUMP_LAWS}")

    @property
    def rho_star(self) -> float:
        """Effective per-coordinate noise variance rho1^2 + lam * rho2^2."""
        return self.rho1**2 + self.lam * self.rho2**2

    @property
    def y_fourth_moment(self) -> float:
        return 1.0 if self.jump_law == "rademacher" else 3.0

    def draw_marks(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.jump_law == "rademacher":
            return rng.integers(0, 2, size).astype(float) * 2.0 - 1.0
        return rng.standard_normal(size)


@dataclass(frozen=True)
class FamilyBounds:
    """Box constraints declaring the admissible noise family."""

    a_max: float
    lambda_max: float
    rho_star_min: float
    rho_star_max: float

    def __post_init__(self) -> None:
        if self.a_max < 0 or self.lambda_max < 0:
            raise ValueError("a_max and lambda_max must be nonnegative")
        if not (0 < self.rho_star_min <= self.rho_star_max):
            raise ValueError("need 0 < rho_star_min <= rho_star_max")

    def contains(self, params: NoiseParams, rtol: float = 1e-12) -> bool:
        slack = rtol * max(1.0, self.rho_star_max)
        return (
            -self.a_max <= params.a <= 0.0
            and 0.0 <= params.lam <= self.lambda_max
            and self.rho_star_min - slack
            <= params.rho_star
            <= self.rho_star_max + slack
        )


def replicate_seed(master_seed, index: int) -> np.random.SeedSequence:
    """Deterministic, statistically independent stream for replicate
    ``index`` of a run keyed by ``master_seed``.

    The key may be an integer or a sequence of integers (a master seed
    followed by experiment-cell coordinates).
    """
    if isinstance(master_seed, (int, np.integer)):
        entropy = int(master_seed)
    else:
        entropy = [int(v) for v in master_seed]
    return np.random.SeedSequence(entropy=entropy, spawn_key=(index,))


def _cell_transition(a: float, delta: np.ndarray):
    """Exact joint transition coefficients over cells of length ``delta``.

    Returns (decay, mu, s): the OU decay e^{a d}, the regression coefficient
    of the OU Gaussian innovation on the plain Brownian increment, and the
    conditional standard deviation of the innovation given that increment.
    """
    delta = np.asarray(delta, dtype=float)
    if a == 0.0:
        decay = np.ones_like(delta)
        mu = np.ones_like(delta)
        s = np.zeros_like(delta)
        return decay, mu, s
    decay = np.exp(a * delta)
    c = np.expm1(a * delta) / a          # Cov(dw, OU innovation)/rho1
    v = np.expm1(2.0 * a * delta) / (2.0 * a)   # Var(OU innovation)/rho1^2
    mu = c / delta
    s = np.sqrt(np.maximum(v - c**2 / delta, 0.0))
    return decay, mu, s


_ou_scan = decay_recursion


@dataclass
class NoisePath:
    """A simulated noise trajectory on the merged event grid.

    ``times`` contains the uniform grid points of step ``dt`` on [0, n]
    merged with all jump times.  ``xi`` holds right-continuous values;
    ``xi_left`` holds left limits (they differ exactly by rho2*Y at jump
    nodes).  ``dw`` holds the plain Brownian increment of each cell.
    """

    params: NoiseParams
    n: int
    dt: float
    seed: Optional[int]
    times: np.ndarray
    xi: np.ndarray
    xi_left: np.ndarray
    dw: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_nodes: np.ndarray = field(repr=False)

    def jump_count(self, t: float) -> int:
        """N_t: number of jumps in [0, t]."""
        return int(np.searchsorted(self.jump_times, t, side="right"))

    def validate(self) -> None:
        if self.xi[0] != 0.0:
            raise AssertionError("xi_0 must be 0")
        if np.any(np.diff(self.times) <= 0):
            raise AssertionError("times must be strictly increasing")
        if np.any(np.diff(self.jump_times) <= 0):
            raise AssertionError("jump times must be strictly increasing")
        jumps = self.xi[self.jump_nodes] - self.xi_left[self.jump_nodes]
        expect = self.params.rho2 * self.jump_marks
        if not np.allclose(jumps, expect, rtol=0, atol=1e-12):
            raise AssertionError("jump sizes must equal rho2 * Y_k")


def simulate_noise(params: NoiseParams, n: int, dt: float, seed: int,
                   jump_times: Optional[np.ndarray] = None) -> NoisePath:
    """Simulate the noise on [0, n] with grid step ``dt``.

    Between consecutive event times the path advances by the exact OU
    transition, sampled jointly with the plain Brownian increment of the
    cell; at each arrival T_k the path jumps by rho2*Y_k.  Identical seeds
    give bitwise-identical paths.  ``jump_times`` pins the arrival times
    (marks and Brownian randomness are still drawn), which supports
    conditional Monte Carlo given the arrivals.
    """
    if dt <= 0:
        raise ValueError(f"grid step must be positive, got {dt}")
    if seed is None:
        raise ValueError("a fixed seed is required; paths must be replayable")
    if n < 1:
        raise ValueError(f"horizon must be a positive integer, got {n}")
    n_cells = n / dt
    if abs(n_cells - round(n_cells)) > 1e-9:
        raise ValueError(f"n/dt must be an integer, got n={n}, dt={dt}")

    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
    grid = np.arange(round(n_cells) + 1) * dt
    grid[-1] = float(n)

    if jump_times is None:
        if params.lam > 0:
            k = int(rng.poisson(params.lam * n))
            jump_times = np.sort(rng.uniform(0.0, float(n), k))
        else:
            jump_times = np.empty(0)
    else:
        jump_times = np.sort(np.asarray(jump_times, dtype=float))
        if jump_times.size and (jump_times[0] <= 0 or jump_times[-1] >= n):
            raise ValueError("fixed jump times must lie strictly inside (0, n)")
    marks = params.draw_marks(rng, jump_times.size)

    times = np.union1d(grid, jump_times)
    m = times.size - 1
    delta = np.diff(times)
    z1 = rng.standard_normal(m)
    z2 = rng.standard_normal(m)

    dw = np.sqrt(delta) * z1
    decay, mu, s = _cell_transition(params.a, delta)
    gauss = params.rho1 * (mu * dw + s * z2)

    jump_nodes = np.searchsorted(times, jump_times)
    eta = gauss.copy()
    np.add.at(eta, jump_nodes - 1, params.rho2 * marks)

    xi = _ou_scan(params.a, times, eta)
    xi_left = xi.copy()
    xi_left[jump_nodes] -= params.rho2 * marks

    return NoisePath(
        params=params, n=n, dt=dt, seed=seed,
        times=times, xi=xi, xi_left=xi_left, dw=dw,
        jump_times=jump_times, jump_marks=marks, jump_nodes=jump_nodes,
    )


# --------------------------------------------------------------------------
# Observations
# --------------------------------------------------------------------------

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)


def _signal_cell_integrals(evaluator: Callable, t0: np.ndarray,
                           t1: np.ndarray) -> np.ndarray:
    """Integrals of a 1-periodic signal over the cells [t0, t1]."""
    h = t1 - t0
    x = t0[:, None] + 0.5 * h[:, None] * (_GAUSS_NODES[None, :] + 1.0)
    vals = np.asarray(evaluator(x % 1.0), dtype=float)
    return 0.5 * h * (vals @ _GAUSS_WEIGHTS)


@dataclass
class ObservationPath:
    """Observation increments dy = S dt + d(xi) on the noise grid."""

    noise: NoisePath
    signal: SignalSpec
    y_increments: np.ndarray

    @property
    def n(self) -> int:
        return self.noise.n

    @property
    def times(self) -> np.ndarray:
        return self.noise.times


def observe(signal: SignalSpec, noise: NoisePath) -> ObservationPath:
    """Compose observation increments over the noise grid."""
    t = noise.times
    sig = _signal_cell_integrals(signal.evaluator, t[:-1], t[1:])
    return ObservationPath(noise=noise, signal=signal,
                           y_increments=sig + np.diff(noise.xi))


# --------------------------------------------------------------------------
# Stochastic integrals against a stored path
# --------------------------------------------------------------------------

def _drift_cells(f_values: np.ndarray, f_left_limits: np.ndarray,
                 path: NoisePath) -> np.ndarray:
    """Trapezoid cells of int f(s) xi_s ds using left limits at right ends."""
    delta = np.diff(path.times)
    left = f_values[:-1] * path.xi[:-1]
    right = f_left_limits[1:] * path.xi_left[1:]
    return 0.5 * delta * (left + right)


def ito_integral(f: Callable[[np.ndarray], np.ndarray], path: NoisePath) -> float:
    """I_n(f) by the exact decomposition against the stored randomness.

    ``f`` is a deterministic bounded function of absolute time on [0, n]
    (vectorized).  The drift term a * int f xi ds is the only quadrature;
    the Brownian and jump terms are exact sums.
    """
    fv = np.asarray(f(path.times), dtype=float)
    drift = path.params.a * float(np.sum(_drift_cells(fv, fv, path)))
    brownian = path.params.rho1 * float(np.sum(fv[:-1] * path.dw))
    if path.jump_times.size:
        fj = np.asarray(f(path.jump_times), dtype=float)
        jumps = path.params.rho2 * float(np.sum(fj * path.jump_marks))
    else:
        jumps = 0.0
    return drift + brownian + jumps


def ito_integrals_at_jumps(f: Callable[[np.ndarray], np.ndarray],
                           path: NoisePath) -> np.ndarray:
    """Left limits I_{T_k-}(f) at every arrival time of the path."""
    if path.jump_times.size == 0:
        return np.empty(0)
    fv = np.asarray(f(path.times), dtype=float)
    drift_cum = np.concatenate(
        ([0.0], np.cumsum(_drift_cells(fv, fv, path)))
    ) * path.params.a
    brown_cum = np.concatenate(
        ([0.0], np.cumsum(fv[:-1] * path.dw))
    ) * path.params.rho1
    fj = np.asarray(f(path.jump_times), dtype=float)
    jump_terms = path.params.rho2 * fj * path.jump_marks
    prior_jumps = np.concatenate(([0.0], np.cumsum(jump_terms)))[:-1]
    nodes = path.jump_nodes
    return drift_cum[nodes] + brown_cum[nodes] + prior_jumps


# --------------------------------------------------------------------------
# CSV interchange
# --------------------------------------------------------------------------

def write_observation_csv(obs: ObservationPath, fileobj: io.TextIOBase) -> None:
    """Rows (t, xi, y_increment): the increment on row i covers the cell
    ending at t_i; the first row carries the starting node."""
    w = csv.writer(fileobj, lineterminator="\n")
    w.writerow(["t", "xi", "y_increment"])
    t = obs.noise.times
    xi = obs.noise.xi
    w.writerow([repr(float(t[0])), repr(float(xi[0])), repr(0.0)])
    for i in range(1, t.size):
        w.writerow([
            repr(float(t[i])),
            repr(float(xi[i])),
            repr(float(obs.y_increments[i - 1])),
        ])


def write_jumps_csv(path: NoisePath, fileobj: io.TextIOBase) -> None:
    w = csv.writer(fileobj, lineterminator="\n")
    w.writerow(["T_k", "Y_k"])
    for t, y in zip(path.jump_times, path.jump_marks):
        w.writerow([repr(float(t)), repr(float(y))])


class ObservationSchemaError(ValueError):
    """Raised when an ingested observation file violates the CSV schema."""


def read_observation_csv(fileobj: io.TextIOBase) -> tuple[np.ndarray, np.ndarray]:
    """Read (times, y_increments) from the observation schema.

    Returns the node times (length m+1) and per-cell increments (length m).
    """
    reader = csv.reader(fileobj)
    header = next(reader, None)
    if header is None:
        raise ObservationSchemaError("empty observation file")
    cols = [c.strip() for c in header]
    if "t" not in cols or "y_increment" not in cols:
        raise ObservationSchemaError(
            f"expected columns including 't' and 'y_increment', got {cols}"
        )
    it = cols.index("t")
    iy = cols.index("y_increment")
    times, incs = [], []
    for row in reader:
        if not row:
            continue
        try:
            times.append(float(row[it]))
            incs.append(float(row[iy]))
        except (ValueError, IndexError) as exc:
            raise ObservationSchemaError(f"malformed row {row!r}") from exc
    if len(times) < 2:
        raise ObservationSchemaError("need at least two rows of observations")
    t = np.asarray(times)
    if np.any(np.diff(t) <= 0):
        raise ObservationSchemaError("times must be strictly increasing")
    return t, np.asarray(incs)[1:]


# --------------------------------------------------------------------------
# Vectorized batch kernel for Monte Carlo work
# --------------------------------------------------------------------------

@dataclass
class PathBatch:
    """A batch of replicates simulated on a uniform grid of ``n_per`` cells
    per unit time.

    Jumps are folded into their cells with the exact decay factor
    e^{a(t_right - T)}, so node values follow the same law as the
    event-merged single-path simulation; jump times and marks are kept in
    flat arrays for exact marked-sum functionals.
    """

    params: NoiseParams
    n: int
    n_per: int
    xi: np.ndarray          # (B, N+1) node values
    dw: np.ndarray          # (B, N) Brownian increments
    jump_t: np.ndarray      # flat jump times
    jump_y: np.ndarray      # flat jump marks
    jump_rep: np.ndarray    # flat replicate index within the batch
    offset: int             # global index of the first replicate

    @property
    def size(self) -> int:
        return self.xi.shape[0]

    @property
    def dt(self) -> float:
        return 1.0 / self.n_per

    def phase_fold_nodes(self) -> np.ndarray:
        """Trapezoid-weighted sums of node values sharing a grid phase;
        column m corresponds to phase m/n_per."""
        b = self.xi.shape[0]
        n_cells = self.n * self.n_per
        fold = self.xi[:, :n_cells].reshape(b, self.n, self.n_per).sum(axis=1)
        fold[:, 0] += 0.5 * (self.xi[:, n_cells] - self.xi[:, 0])
        return fold

    def phase_fold_cells(self, values: np.ndarray) -> np.ndarray:
        """Sums of per-cell values sharing the phase of their left node."""
        b = values.shape[0]
        return values.reshape(b, self.n, self.n_per).sum(axis=1)

    def ito_matrix(self, phase_values: np.ndarray,
                   jump_values: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """I_n(f) for several integrands at once.

        ``phase_values`` has shape (n_per, nf) with f evaluated on the phase
        grid m/n_per; ``jump_values`` evaluates the same integrands at the
        flat jump times, returning (n_jumps, nf).
        """
        p = self.params
        drift = (p.a * self.dt) * (self.phase_fold_nodes() @ phase_values)
        brown = p.rho1 * (self.phase_fold_cells(self.dw) @ phase_values)
        out = drift + brown
        if self.jump_t.size:
            fj = np.asarray(jump_values(self.jump_t), dtype=float)
            weighted = fj * self.jump_y[:, None]
            for col in range(out.shape[1]):
                out[:, col] += p.rho2 * np.bincount(
                    self.jump_rep, weights=weighted[:, col], minlength=self.size
                )
        return out

    def delta_xi_fold(self) -> np.ndarray:
        """Phase-folded increments of xi, column m = sum over cells at
        phase m of (xi_{i+1} - xi_i)."""
        return self.phase_fold_cells(np.diff(self.xi, axis=1))


def iter_path_batches(params: NoiseParams, n: int, n_per: int,
                      replicates: int, master_seed: int,
                      max_cells: int = 16_000_000) -> Iterator[PathBatch]:
    """Yield batches of replicate paths; replicate r always consumes the
    stream ``replicate_seed(master_seed, r)`` regardless of batching, so
    results do not depend on the batch size."""
    n_cells = n * n_per
    batch = max(1, min(replicates, max_cells // max(n_cells, 1)))
    dt = 1.0 / n_per
    times = np.arange(n_cells + 1) * dt
    _, mu_arr, s_arr = _cell_transition(params.a, np.asarray([dt]))
    mu = float(mu_arr[0])
    s = float(s_arr[0])

    done = 0
    while done < replicates:
        b = min(batch, replicates - done)
        dw = np.empty((b, n_cells))
        eta = np.empty((b, n_cells))
        jt_parts, jy_parts, jr_parts = [], [], []
        for r in range(b):
            rng = np.random.default_rng(replicate_seed(master_seed, done + r))
            if params.lam > 0:
                k = int(rng.poisson(params.lam * n))
                jt = np.sort(rng.uniform(0.0, float(n), k))
            else:
                jt = np.empty(0)
            jy = params.draw_marks(rng, jt.size)
            z1 = rng.standard_normal(n_cells)
            z2 = rng.standard_normal(n_cells)
            dw[r] = np.sqrt(dt) * z1
            eta[r] = params.rho1 * (mu * dw[r] + s * z2)
            if jt.size:
                cell = np.minimum(
                    np.ceil(jt / dt).astype(int) - 1, n_cells - 1
                )
                cell = np.maximum(cell, 0)
                np.add.at(
                    eta[r], cell,
                    params.rho2 * jy * np.exp(params.a * (times[cell + 1] - jt)),
                )
                jt_parts.append(jt)
                jy_parts.append(jy)
                jr_parts.append(np.full(jt.size, r, dtype=np.int64))
        xi = _ou_scan(params.a, times, eta)
        yield PathBatch(
            params=params, n=n, n_per=n_per, xi=xi, dw=dw,
            jump_t=np.concatenate(jt_parts) if jt_parts else np.empty(0),
            jump_y=np.concatenate(jy_parts) if jy_parts else np.empty(0),
            jump_rep=(np.concatenate(jr_parts) if jr_parts
                      else np.empty(0, dtype=np.int64)),
            offset=done,
        )
        done += b
