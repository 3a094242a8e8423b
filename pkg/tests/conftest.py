import numpy as np
import pytest

from ousignal.noise import FamilyBounds, NoiseParams


@pytest.fixture(scope="session")
def ref_params() -> NoiseParams:
    """The reference noise configuration used across the audits."""
    return NoiseParams(a=-1.0, lam=1.0, rho1=1.0, rho2=1.0,
                       jump_law="rademacher")


@pytest.fixture(scope="session")
def ref_bounds() -> FamilyBounds:
    return FamilyBounds(a_max=1.0, lambda_max=1.0,
                        rho_star_min=1.0, rho_star_max=2.0)


def mc_se(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=float)
    return float(samples.std(ddof=1) / np.sqrt(samples.size))
