import numpy as np
import pytest


def random_orthonormal(rng, m, r):
    q, _ = np.linalg.qr(rng.standard_normal((m, r)))
    return q


def random_spd(rng, m, cond=100.0):
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    ev = np.logspace(0, np.log10(cond), m)
    return (q * ev) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
