import os
import sys

import numpy as np
import pytest
from hypothesis import settings

from cskam import ContinuationPolicy, DiophantineFrequency, StandardMap, continue_torus

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def golden():
    return DiophantineFrequency.preset("golden")


def _trace(lam, end):
    return continue_torus(StandardMap(lam=lam), "golden", 0.0, end, ContinuationPolicy())


@pytest.fixture(scope="session")
def trace_09():
    """Continuation at lam = 0.9 up to the resource cap near breakdown."""
    return _trace(0.9, 0.97)


@pytest.fixture(scope="session")
def trace_cons():
    return _trace(1.0, 0.97)


@pytest.fixture(scope="session")
def trace_05():
    return _trace(0.5, 0.98)


def torus_at(trace, eps):
    """Converged torus of a trace closest to ``eps``."""
    return min(trace.tori, key=lambda K: abs(K.epsilon - eps))
