import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

EX1 = dict(k10=2.0, k12=0.2, k20=1.5, k21=0.4)
EX1_DISCRETE = dict(k10=0.004, k12=0.0004, k20=0.003, k21=0.0008)


@st.composite
def simplex_points(draw, m=None, interior=False):
    m = draw(st.integers(2, 6)) if m is None else m
    lo = 1e-3 if interior else 0.0
    w = draw(st.lists(st.floats(lo, 1.0), min_size=m, max_size=m).filter(lambda v: sum(v) > 1e-6))
    y = np.array(w) / sum(w)
    return y


@st.composite
def payoffs(draw, m=None):
    """Dense signed matrix with zero diagonal (complete task graph)."""
    m = draw(st.integers(2, 6)) if m is None else m
    vals = draw(st.lists(st.floats(-3.0, 3.0), min_size=m * m, max_size=m * m))
    k = np.array(vals).reshape(m, m)
    np.fill_diagonal(k, 0.0)
    return k


@st.composite
def payoff_and_point(draw, interior=False):
    m = draw(st.integers(2, 6))
    return draw(payoffs(m)), draw(simplex_points(m, interior))


@pytest.fixture
def ex1_params():
    return dict(EX1)
