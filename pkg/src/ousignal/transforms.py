"""Deterministic moment transforms for stochastic integrals of the noise.

Everything here is pure numerics.  The central objects are

    eps_f(t)   = a * int_0^t e^{a(t-v)} f(v) (1 + e^{2av}) dv
    tau_fg(t)  = 1/2 int_0^t (2 f g + f eps_g + eps_f g) ds
    L_f(x, z)  = a e^{ax} (f(z) + a int_0^x e^{av} f(v+z) dv)
    D_fg(x, z) = int_0^x [g(y+z) L_f(y,z) + f(y+z) L_g(y,z)] dy + f(z) g(z)
    H_fg(t)    = lam*rho1^2 tau_fg(t) + (lam*rho2)^2 int_0^t D_fg(t-z, z) dz

with E I_t(f) I_t(g) = rho_star * tau_fg(t).  All line integrals share one
quadrature engine: Gauss-Legendre panels on a uniform grid of [0, t], with
exponential-kernel cumulants advanced panel by panel so long horizons stay
stable.  The two-argument D transform is precomputed on an (x, z) grid and
interpolated linearly along x where it appears inside the H integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._linrec import decay_recursion
from .noise import FamilyBounds, NoiseParams

__all__ = [
    "TransformConfig",
    "MomentConstants",
    "epsilon_f",
    "tau_fg",
    "tau_profile",
    "cov_I",
    "cov_matrix",
    "L_f",
    "D_fg",
    "H_fg",
    "h_profile",
    "integrated_H",
    "cond_cov_at_jump",
    "correlation_measure",
    "sup_norm",
    "moment_constants",
    "second_order_bound",
]


@dataclass(frozen=True)
class TransformConfig:
    """Resolution knobs for the transform quadratures.

    ``cells`` panels cover [0, t] for line integrals; ``gauss_order`` points
    per panel; ``d_cells`` sets the (x, z) grid of the tabulated D transform;
    ``corr_lattice`` and ``corr_cells`` set the (v, t) lattice and the
    u-resolution of the correlation measure.
    """

    cells: int = 8192
    gauss_order: int = 5
    d_cells: int = 512
    corr_lattice: int = 512
    corr_cells: int = 4096


DEFAULT_CONFIG = TransformConfig()


class _LineGrid:
    """Gauss-Legendre panels on a uniform grid of [0, t]."""

    def __init__(self, t: float, cells: int, order: int):
        if t < 0:
            raise ValueError("horizon must be nonnegative")
        self.t = float(t)
        self.cells = cells
        self.edges = np.linspace(0.0, t, cells + 1)
        self.h = t / cells if cells else 0.0
        gn, gw = np.polynomial.legendre.leggauss(order)
        self.gn = gn
        self.nodes = self.edges[:-1, None] + 0.5 * self.h * (gn[None, :] + 1.0)
        self.node_weights = 0.5 * self.h * gw

    def integral_profile(self, values: np.ndarray) -> np.ndarray:
        """Cumulative plain integral at the panel edges for integrand values
        given on the panel nodes (cells, order)."""
        panel = values @ self.node_weights
        return np.concatenate(([0.0], np.cumsum(panel)))


class _DecayCumulative:
    """J(s) = int_0^s e^{a(s-v)} g(v) dv at panel edges and panel nodes."""

    def __init__(self, g: Callable[[np.ndarray], np.ndarray], a: float,
                 grid: _LineGrid):
        self.a = a
        self.grid = grid
        gv = np.asarray(g(grid.nodes), dtype=float)
        # Panel contributions carried to the right edge of each panel.
        kernel = np.exp(a * (grid.edges[1:, None] - grid.nodes))
        panel = (gv * kernel) @ grid.node_weights
        self.at_edges = decay_recursion(a, grid.edges, panel)
        # Partial integrals from the panel's left edge to each node.
        half = grid.nodes - grid.edges[:-1, None]          # (cells, order)
        inner = (grid.edges[:-1, None, None]
                 + 0.5 * half[:, :, None] * (grid.gn[None, None, :] + 1.0))
        gi = np.asarray(g(inner), dtype=float)
        ik = np.exp(a * (grid.nodes[:, :, None] - inner))
        _, gw = np.polynomial.legendre.leggauss(grid.nodes.shape[1])
        partial = np.einsum("cqi,cqi,i->cq", gi, ik, gw) * 0.5 * half
        self.at_nodes = (np.exp(a * half) * self.at_edges[:-1, None]
                         + partial)


def _epsilon_parts(f: Callable, a: float, grid: _LineGrid):
    """eps_f on the grid: returns (at_nodes, at_edges)."""
    if a == 0.0:
        return (np.zeros_like(grid.nodes),
                np.zeros(grid.edges.size))

    def g(v):
        return np.asarray(f(v), dtype=float) * (1.0 + np.exp(2.0 * a * v))

    dc = _DecayCumulative(g, a, grid)
    return a * dc.at_nodes, a * dc.at_edges


def epsilon_f(f: Callable[[np.ndarray], np.ndarray], a: float, t: float,
              config: TransformConfig = DEFAULT_CONFIG) -> float:
    """The decay transform eps_f(t); identically zero when a = 0."""
    _check_a(a)
    if a == 0.0 or t == 0.0:
        return 0.0
    grid = _LineGrid(t, config.cells, config.gauss_order)
    _, edges = _epsilon_parts(f, a, grid)
    return float(edges[-1])


def _check_a(a: float) -> None:
    if a > 0:
        raise ValueError(f"mean reversion must satisfy a <= 0, got {a}")


def tau_profile(f: Callable, g: Callable, a: float, t: float,
                config: TransformConfig = DEFAULT_CONFIG
                ) -> tuple[np.ndarray, np.ndarray]:
    """(edges, tau_fg at edges) over [0, t]."""
    _check_a(a)
    grid = _LineGrid(t, config.cells, config.gauss_order)
    fv = np.asarray(f(grid.nodes), dtype=float)
    gv = np.asarray(g(grid.nodes), dtype=float)
    if a == 0.0:
        integrand = fv * gv
    else:
        ef, _ = _epsilon_parts(f, a, grid)
        eg, _ = _epsilon_parts(g, a, grid)
        integrand = fv * gv + 0.5 * (fv * eg + ef * gv)
    return grid.edges, grid.integral_profile(integrand)


def tau_fg(f: Callable, g: Callable, a: float, t: float,
           config: TransformConfig = DEFAULT_CONFIG) -> float:
    """The covariance transform tau_fg(t)."""
    if t == 0.0:
        return 0.0
    _, prof = tau_profile(f, g, a, t, config)
    return float(prof[-1])


def cov_I(f: Callable, g: Callable, params: NoiseParams, t: float,
          config: TransformConfig = DEFAULT_CONFIG) -> float:
    """Exact covariance E I_t(f) I_t(g) = rho_star * tau_fg(t)."""
    return params.rho_star * tau_fg(f, g, params.a, t, config)


def cov_matrix(fs: Sequence[Callable], params: NoiseParams, t: float,
               config: TransformConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Matrix [E I_t(f_i) I_t(f_j)] with epsilon profiles computed once."""
    _check_a(params.a)
    grid = _LineGrid(t, config.cells, config.gauss_order)
    vals = [np.asarray(f(grid.nodes), dtype=float) for f in fs]
    if params.a == 0.0:
        eps = [np.zeros_like(v) for v in vals]
    else:
        eps = [_epsilon_parts(f, params.a, grid)[0] for f in fs]
    k = len(fs)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            integrand = (vals[i] * vals[j]
                         + 0.5 * (vals[i] * eps[j] + eps[i] * vals[j]))
            val = params.rho_star * float(
                grid.integral_profile(integrand)[-1]
            )
            out[i, j] = val
            out[j, i] = val
    return out


# --------------------------------------------------------------------------
# Jump transforms
# --------------------------------------------------------------------------

def L_f(f: Callable, a: float, x: float, z: float,
        config: TransformConfig = DEFAULT_CONFIG) -> float:
    """L_f(x, z) = a e^{ax} (f(z) + a int_0^x e^{av} f(v+z) dv)."""
    _check_a(a)
    if a == 0.0:
        return 0.0
    fz = float(np.asarray(f(np.asarray([z])), dtype=float)[0])
    if x == 0.0:
        return a * fz
    grid = _LineGrid(x, config.cells, config.gauss_order)
    inner = grid.integral_profile(
        np.exp(a * grid.nodes) * np.asarray(f(grid.nodes + z), dtype=float)
    )[-1]
    return a * float(np.exp(a * x)) * (fz + a * float(inner))


def _l_values_on_grid(f: Callable, a: float, z: np.ndarray,
                      grid: _LineGrid) -> np.ndarray:
    """L_f(y, z) at the panel nodes of ``grid`` for a batch of offsets z.

    Returns an array of shape (len(z), cells, order).
    """
    zcol = z[:, None, None]
    fz = np.asarray(f(np.asarray(z)), dtype=float)[:, None, None]
    fv = np.asarray(f(grid.nodes[None, :, :] + zcol), dtype=float)
    weighted = np.exp(a * grid.nodes)[None, :, :] * fv
    # Cumulative int_0^y e^{av} f(v+z) dv at panel edges, batched over z.
    panel = weighted @ grid.node_weights
    edges = np.concatenate(
        (np.zeros((z.size, 1)), np.cumsum(panel, axis=1)), axis=1
    )
    # Partial integrals from the panel's left edge to each node.
    half = grid.nodes - grid.edges[:-1, None]
    _, gw = np.polynomial.legendre.leggauss(grid.nodes.shape[1])
    inner = (grid.edges[:-1, None, None]
             + 0.5 * half[:, :, None] * (grid.gn[None, None, :] + 1.0))
    fi = np.asarray(f(inner[None, :, :, :] + zcol[:, :, :, None]),
                    dtype=float)
    wi = np.exp(a * inner)[None, :, :, :]
    partial = np.einsum("zcqi,i->zcq", fi * wi, gw) * (0.5 * half)[None, :, :]
    cum = edges[:, :-1, None] + partial
    return a * np.exp(a * grid.nodes)[None, :, :] * (fz + a * cum)


def D_fg(f: Callable, g: Callable, a: float, x: float, z: float,
         config: TransformConfig = DEFAULT_CONFIG) -> float:
    """Point evaluation of the two-argument jump transform D_fg(x, z)."""
    _check_a(a)
    fz = float(np.asarray(f(np.asarray([z])), dtype=float)[0])
    gz = float(np.asarray(g(np.asarray([z])), dtype=float)[0])
    if a == 0.0 or x == 0.0:
        return fz * gz
    grid = _LineGrid(x, config.cells, config.gauss_order)
    zarr = np.asarray([z], dtype=float)
    lf = _l_values_on_grid(f, a, zarr, grid)[0]
    lg = _l_values_on_grid(g, a, zarr, grid)[0]
    gv = np.asarray(g(grid.nodes + z), dtype=float)
    fv = np.asarray(f(grid.nodes + z), dtype=float)
    integral = grid.integral_profile(gv * lf + fv * lg)[-1]
    return float(integral) + fz * gz


class _DTable:
    """D_fg tabulated on an (x, z) grid over [0, t]^2 with linear
    interpolation along x."""

    def __init__(self, f: Callable, g: Callable, a: float, t: float,
                 config: TransformConfig):
        m = config.d_cells
        self.x_edges = np.linspace(0.0, t, m + 1)
        self.z_edges = np.linspace(0.0, t, m + 1)
        grid = _LineGrid(t, m, config.gauss_order)
        fz = np.asarray(f(self.z_edges), dtype=float)
        gz = np.asarray(g(self.z_edges), dtype=float)
        if a == 0.0:
            self.values = np.broadcast_to(
                (fz * gz)[None, :], (m + 1, m + 1)
            ).copy()
            return
        vals = np.empty((m + 1, m + 1))
        chunk = max(1, 2_000_000 // (m * grid.nodes.shape[1] ** 2))
        for lo in range(0, m + 1, chunk):
            hi = min(lo + chunk, m + 1)
            zs = self.z_edges[lo:hi]
            lf = _l_values_on_grid(f, a, zs, grid)
            lg = _l_values_on_grid(g, a, zs, grid)
            gv = np.asarray(g(grid.nodes[None, :, :] + zs[:, None, None]),
                            dtype=float)
            fv = np.asarray(f(grid.nodes[None, :, :] + zs[:, None, None]),
                            dtype=float)
            panel = np.einsum("zcq,q->zc", gv * lf + fv * lg,
                              grid.node_weights)
            cum = np.concatenate(
                (np.zeros((zs.size, 1)), np.cumsum(panel, axis=1)), axis=1
            )
            vals[:, lo:hi] = (cum + (fz[lo:hi] * gz[lo:hi])[:, None]).T
        self.values = vals

    def at(self, x: np.ndarray, z_idx: np.ndarray) -> np.ndarray:
        """Linear interpolation along x at tabulated z columns."""
        m = self.x_edges.size - 1
        t = self.x_edges[-1]
        pos = np.clip(x / t * m, 0.0, m)
        lo = np.minimum(pos.astype(int), m - 1)
        w = pos - lo
        return ((1.0 - w) * self.values[lo, z_idx]
                + w * self.values[lo + 1, z_idx])


def _h_values(f: Callable, g: Callable, params: NoiseParams, t: float,
              config: TransformConfig,
              v_edges: np.ndarray, tau_at_edges: np.ndarray) -> np.ndarray:
    lam, rho1, rho2 = params.lam, params.rho1, params.rho2
    out = lam * rho1**2 * tau_at_edges
    if lam == 0.0 or rho2 == 0.0:
        return out
    table = _DTable(f, g, params.a, t, config)
    z = table.z_edges
    hz = z[1] - z[0]
    z_idx = np.arange(z.size)
    for i, v in enumerate(v_edges):
        if v == 0.0:
            continue
        mask = z <= v
        idx = z_idx[mask]
        dv = table.at(v - z[mask], idx)
        # trapezoid over z in [0, v] on the table grid
        out[i] += (lam * rho2) ** 2 * (
            np.sum(dv) - 0.5 * (dv[0] + dv[-1])
        ) * hz
    return out


def H_fg(f: Callable, g: Callable, params: NoiseParams, t: float,
         config: TransformConfig = DEFAULT_CONFIG) -> float:
    """H_fg(t) = lam rho1^2 tau_fg(t) + (lam rho2)^2 int_0^t D_fg(t-z,z) dz."""
    if params.lam == 0.0:
        return 0.0
    edges, tau_edges = tau_profile(f, g, params.a, t, config)
    vals = _h_values(f, g, params, t, config,
                     np.asarray([edges[-1]]), np.asarray([tau_edges[-1]]))
    return float(vals[0])


def h_profile(f: Callable, g: Callable, params: NoiseParams, t: float,
              config: TransformConfig = DEFAULT_CONFIG
              ) -> tuple[np.ndarray, np.ndarray]:
    """(v grid, H_fg(v)) over [0, t] on the D-table resolution."""
    sub = TransformConfig(
        cells=config.d_cells, gauss_order=config.gauss_order,
        d_cells=config.d_cells, corr_lattice=config.corr_lattice,
        corr_cells=config.corr_cells,
    )
    edges, tau_edges = tau_profile(f, g, params.a, t, sub)
    if params.lam == 0.0:
        return edges, np.zeros_like(edges)
    vals = _h_values(f, g, params, t, config, edges, tau_edges)
    return edges, vals


def integrated_H(f: Callable, g: Callable, params: NoiseParams, t: float,
                 config: TransformConfig = DEFAULT_CONFIG) -> float:
    """int_0^t H_fg(v) dv by trapezoid on the H profile."""
    v, h = h_profile(f, g, params, t, config)
    return float(np.sum((h[1:] + h[:-1]) * np.diff(v)) / 2.0)


def cond_cov_at_jump(f: Callable, g: Callable, params: NoiseParams,
                     arrival_times: np.ndarray, k: int,
                     config: TransformConfig = DEFAULT_CONFIG) -> float:
    """Conditional covariance of I_{T_k-}(f) and I_{T_k-}(g) given the
    arrival times: rho1^2 tau_fg(T_k) + rho2^2 sum_{l<k} D_fg(T_k-T_l, T_l).
    """
    arrivals = np.sort(np.asarray(arrival_times, dtype=float))
    if k < 1 or k > arrivals.size:
        raise ValueError(
            f"jump index k={k} outside the available arrivals "
            f"(have {arrivals.size})"
        )
    t_k = arrivals[k - 1]
    out = params.rho1**2 * tau_fg(f, g, params.a, t_k, config)
    for l in range(k - 1):
        out += params.rho2**2 * D_fg(
            f, g, params.a, t_k - arrivals[l], arrivals[l], config
        )
    return float(out)


# --------------------------------------------------------------------------
# Correlation measure and moment constants
# --------------------------------------------------------------------------

def _varpi_one_sided(f: Callable, g: Callable, n: float,
                     config: TransformConfig) -> float:
    """max over the (v, t) lattice of |int_0^t f(u+v) g(u) du|."""
    best = 0.0
    for v in np.linspace(0.0, n, config.corr_lattice + 1):
        span = n - v
        if span <= 0:
            continue
        m = max(int(np.ceil(config.corr_cells * span / n)), 8)
        u = np.linspace(0.0, span, m + 1)
        vals = (np.asarray(f(u + v), dtype=float)
                * np.asarray(g(u), dtype=float))
        h = span / m
        cum = h * (np.cumsum(vals[:-1] + vals[1:]) / 2.0)
        best = max(best, float(np.max(np.abs(cum))))
    return best


def correlation_measure(f: Callable, g: Callable, n: float,
                        config: TransformConfig = DEFAULT_CONFIG) -> float:
    """The symmetrized sliding-window correlation measure of f and g."""
    return max(_varpi_one_sided(f, g, n, config),
               _varpi_one_sided(g, f, n, config))


def sup_norm(f: Callable, n: float,
             config: TransformConfig = DEFAULT_CONFIG) -> float:
    """Uniform norm of f on [0, n], estimated on a dense grid."""
    t = np.linspace(0.0, n, config.corr_cells + 1)
    return float(np.max(np.abs(np.asarray(f(t), dtype=float))))


@dataclass(frozen=True)
class MomentConstants:
    """Closed-form constants entering the second-order moment bounds."""

    rho_star: float
    lambda1: float
    lambda2: float
    rho3: float
    d1: float
    d2: float
    m_star: float
    l1_star: float
    sigma_q: float


def _m_star(params: NoiseParams) -> tuple[float, float, float, float, float]:
    lam, r1, r2 = params.lam, params.rho1, params.rho2
    rho_star = params.rho_star
    lambda2 = r1**2 * rho_star + lam * r2**2
    rho3 = lam * r2**4 * params.y_fourth_moment
    d1 = 4.0 * lam * r1**2 + 7.0 * lam**2 * r2**2
    d2 = 4.0 * r1**2 * rho_star + r2**2 * d1 + 23.0 * lambda2
    m_star = 4.0 * r1**2 + r2**2 * d1 + 80.0 * lambda2 + 12.0 * d2 + 21.0 * rho3
    return lambda2, rho3, d1, d2, m_star


def moment_constants(params: NoiseParams,
                     bounds: FamilyBounds) -> MomentConstants:
    """All closed-form moment constants for the given member and family."""
    lam, r1, r2 = params.lam, params.rho1, params.rho2
    lambda2, rho3, d1, d2, m_star = _m_star(params)
    return MomentConstants(
        rho_star=params.rho_star,
        lambda1=lam * r1**2 + (lam * r2) ** 2,
        lambda2=lambda2,
        rho3=rho3,
        d1=d1,
        d2=d2,
        m_star=m_star,
        l1_star=2.0 * (1.0 + bounds.a_max * (bounds.a_max + 1.0))
        * bounds.rho_star_max,
        sigma_q=3.0 * params.rho_star,
    )


def second_order_bound(f: Callable, g: Callable, params: NoiseParams,
                       n: float,
                       config: TransformConfig = DEFAULT_CONFIG) -> float:
    """Theoretical ceiling n M* (varpi* + |f| |g|) |f| |g| for the
    covariance of recentred squared integrals."""
    _, _, _, _, m_star = _m_star(params)
    if m_star == 0.0:
        return 0.0
    varpi = correlation_measure(f, g, n, config)
    nf = sup_norm(f, n, config)
    ng = sup_norm(g, n, config)
    return n * m_star * (varpi + nf * ng) * nf * ng
