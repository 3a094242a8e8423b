"""Stable vectorized solver for xi_{i+1} = e^{a*d_i} xi_i + eta_i.

Shared by the noise simulator and the transform quadrature engine.  The
recursion is solved in blocks whose time span keeps the rescaled cumulative
sums inside float64 range; within a block

    xi_k = e^{a(t_k - t_lo)} (xi_lo + sum_{j<k} e^{a(t_lo - t_{j+1})} eta_j),

which is a single cumulative sum.
"""

from __future__ import annotations

import numpy as np

# Maximum |a| * (time span) per block.
_SCAN_SPAN = 50.0


def scan_blocks(a: float, times: np.ndarray) -> list[tuple[int, int]]:
    """Node-index blocks [lo, hi] covering all cells of ``times``."""
    m = times.size - 1
    if a == 0.0:
        return [(0, m)]
    span = _SCAN_SPAN / abs(a)
    blocks = []
    lo = 0
    while lo < m:
        hi = int(np.searchsorted(times, times[lo] + span, side="right")) - 1
        hi = max(hi, lo + 1)
        hi = min(hi, m)
        blocks.append((lo, hi))
        lo = hi
    return blocks


def decay_recursion(a: float, times: np.ndarray,
                    innovations: np.ndarray) -> np.ndarray:
    """Solve the recursion along ``times`` with one innovation per cell.

    ``innovations`` may be (m,) or (B, m); the result gains one leading node
    with value 0.
    """
    eta = np.atleast_2d(innovations)
    b, m = eta.shape
    out = np.zeros((b, m + 1))
    for lo, hi in scan_blocks(a, times):
        local = times[lo:hi + 1] - times[lo]
        up = np.exp(-a * local[1:])
        acc = np.cumsum(eta[:, lo:hi] * up[None, :], axis=1)
        out[:, lo + 1:hi + 1] = np.exp(a * local[1:])[None, :] * (
            out[:, lo:lo + 1] + acc
        )
    if innovations.ndim == 1:
        return out[0]
    return out
