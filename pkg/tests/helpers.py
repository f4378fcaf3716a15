"""Shared random-instance builders for the test suite."""
import numpy as np
from scipy.stats import unitary_group

from agsim.gaussian import compose_bloch_messiah
from agsim.states import ProductState


def haar(M, seed):
    if M == 1:
        return np.exp(2j * np.pi * np.random.default_rng(seed).random()) * np.eye(1)
    return unitary_group.rvs(M, random_state=seed)


def random_gaussian(M, seed, squeeze=0.3, n_squeezers=1):
    rng = np.random.default_rng(seed)
    r = np.zeros(M)
    r[:n_squeezers] = squeeze * (0.5 + rng.random(n_squeezers))
    return compose_bloch_messiah(haar(M, seed + 1000), r, haar(M, seed + 2000))


def random_state(M, cutoff, rng):
    vecs = [rng.normal(size=cutoff + 1) + 1j * rng.normal(size=cutoff + 1) for _ in range(M)]
    return ProductState.from_modes(vecs, cutoff).normalized()
