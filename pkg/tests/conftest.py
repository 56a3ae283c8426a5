import numpy as np
import pytest

from chimeraq import NetworkParams


@pytest.fixture
def paper_params() -> NetworkParams:
    return NetworkParams(N=50, d=10, V=1.2, kappa2=0.2)


@pytest.fixture
def small_params() -> NetworkParams:
    return NetworkParams(N=6, d=2, V=0.9, kappa2=0.2)


def random_physical_cov(n_sites: int, hbar: float = 1.0, seed: int = 0, scale: float = 0.3) -> np.ndarray:
    """Physical covariance hbar/2 I + PSD noise; C >= hbar/2 I implies
    C + i hbar Omega / 2 >= 0."""
    rng = np.random.default_rng(seed)
    m = scale * rng.standard_normal((2 * n_sites, 2 * n_sites))
    return 0.5 * hbar * np.eye(2 * n_sites) + hbar * (m @ m.T)
