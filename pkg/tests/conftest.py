import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def encloses(iv, lo, hi, slack=1e-12):
    """``iv`` contains ``[lo, hi]`` and is no wider than ``slack`` beyond it."""
    return iv.lo <= lo and hi <= iv.hi and lo - iv.lo <= slack and iv.hi - hi <= slack
