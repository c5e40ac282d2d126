import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


def frames(max_t=8, max_d=4, min_t=1):
    """Strategy for T x D float64 frame matrices."""
    return st.tuples(st.integers(min_t, max_t), st.integers(1, max_d)).flatmap(
        lambda td: arrays(np.float64, td, elements=finite)
    )


def frame_pairs(max_t=8, max_d=4, min_t=1):
    """Two frame matrices sharing T and D."""
    return st.tuples(st.integers(min_t, max_t), st.integers(1, max_d)).flatmap(
        lambda td: st.tuples(arrays(np.float64, td, elements=finite), arrays(np.float64, td, elements=finite))
    )


@pytest.fixture
def nrng():
    return np.random.default_rng(12345)


def rel_err(a, b, floor=1e-6):
    """Max-abs relative error with an absolute floor for near-zero gradients."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), floor))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
