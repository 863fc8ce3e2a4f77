import numpy as np
import pytest

from fbq_sim.channel import chi_square_facts
from fbq_sim.directions import build_grassmannian

_PACKED = {}


@pytest.fixture(scope="session")
def dist3():
    return chi_square_facts(3)


@pytest.fixture(scope="session")
def packed():
    """Session cache of line packings keyed by (size, dim); packing is by far
    the most expensive fixture so every test shares these."""

    def get(N, M=3):
        key = (N, M)
        if key not in _PACKED:
            rng = np.random.default_rng(np.random.SeedSequence([1234, N, M]))
            iters = 2000 if N <= 512 else 1200
            restarts = 20 if N <= 128 else 6
            _PACKED[key] = build_grassmannian(N, M, rng, iterations=iters, restarts=restarts)
        return _PACKED[key]

    return get
