import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bubbletx.corpus import load_corpus
from bubbletx.weights import build_weights

settings.register_profile("bubbletx", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bubbletx")


@functools.lru_cache(maxsize=None)
def corpus_mesh(name):
    return load_corpus(name)


@functools.lru_cache(maxsize=None)
def corpus_weights(name, boundary="closed"):
    return build_weights(corpus_mesh(name), boundary)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fan():
    return corpus_mesh("square-fan-4")


@pytest.fixture(scope="session")
def fan_weights():
    return corpus_weights("square-fan-4")
