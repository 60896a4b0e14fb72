import numpy as np
import pytest

from snctrl import DiscreteLtiPlant, MlpPolicy, normalize


def random_stable_plant(rng, n=2, m=1, rho=0.8):
    """Random Schur-stable plant with spectral radius exactly rho."""
    A = rng.normal(size=(n, n))
    A *= rho / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.normal(size=(n, m))
    return DiscreteLtiPlant(A=A, B=B, ts=0.1)


def random_policy(rng, sizes, mode="post", deltas=1.0, out_scale=1.0,
                  normalized=True):
    """Random tanh policy with dims sizes = [n_in, h1, ..., n_out]."""
    weights = []
    for i in range(len(sizes) - 1):
        weights.append(rng.normal(size=(sizes[i + 1], sizes[i]))
                       / np.sqrt(sizes[i]))
    weights[-1] = weights[-1] * out_scale
    n_norm = MlpPolicy.n_normalized_layers(mode, len(weights))
    if np.isscalar(deltas):
        deltas = (float(deltas),) * n_norm
    pol = MlpPolicy(weights=tuple(weights), deltas=tuple(deltas), mode=mode)
    return normalize(pol) if normalized and n_norm else pol


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)
