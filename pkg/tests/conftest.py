import numpy as np
import pytest

from manifoldreg import Dense, NetworkSpec, Relu, RngState, init_glorot


@pytest.fixture
def tiny_params():
    """Seeded 4 -> 5 -> 3 ReLU MLP used by most numeric oracles."""
    spec = NetworkSpec((4,), (Dense(4, 5), Relu(), Dense(5, 3)))
    return init_glorot(spec, RngState(0, 7))


@pytest.fixture
def rng0():
    return RngState(0)


def random_input(seed, shape=(4,), lo=0.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=shape)
