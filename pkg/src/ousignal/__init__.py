"""Adaptive periodic-signal estimation under Ornstein-Uhlenbeck noise with
jumps, with an analytic moment oracle and a Monte Carlo risk laboratory."""

__version__ = "0.1.0"

from . import basis, noise, risklab, selector, signals, transforms  # noqa: F401
