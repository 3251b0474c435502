import numpy as np
import pytest
from hypothesis import strategies as st

from rcrdesign import ExactDesign, ModelParams


def random_params(rng, K=None, N=None, equal_sigma=False):
    s1, s2 = rng.uniform(0.2, 5.0, size=2)
    if equal_sigma:
        s2 = s1
    u, v = rng.uniform(0.1, 10.0, size=2)
    K = int(rng.integers(1, 5)) if K is None else K
    N = int(rng.integers(2, 9)) if N is None else N
    return ModelParams(s1, s2, u, v, K, N)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@st.composite
def params_st(draw, equal_sigma=False, min_disp=0.0):
    s1 = draw(st.floats(0.05, 20.0))
    s2 = s1 if equal_sigma else draw(st.floats(0.05, 20.0))
    u = draw(st.floats(min_disp, 50.0))
    v = draw(st.floats(min_disp, 50.0))
    K = draw(st.integers(1, 12))
    N = draw(st.integers(2, 120))
    return ModelParams(s1, s2, u, v, K, N)


@st.composite
def params_design_st(draw, min_disp=0.0):
    p = draw(params_st(min_disp=min_disp))
    n1 = draw(st.integers(1, p.N - 1))
    return p, ExactDesign(n1, p.N - n1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
