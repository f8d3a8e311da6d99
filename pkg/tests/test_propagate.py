import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from ltvdetect.propagate import (IntegratorSettings, TransitionCache, default_step, linear_solution,
                                 propagate_linear, step_nodes)
from ltvdetect.system import Constant, PiecewiseConstant, Periodic, TrigTerm


def test_default_step_is_clipped():
    assert default_step(1.0) == pytest.approx(1e-3)
    assert default_step(1e6) == pytest.approx(1e-5)
    assert default_step(0.0) == pytest.approx(1e-1)


def test_step_nodes_hit_breakpoints():
    nodes = step_nodes(0.0, 1.0, 0.3, [0.5])
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert 0.5 in nodes
    assert np.diff(nodes).max() <= 0.3 + 1e-12


@given(st.lists(st.floats(-1.5, 1.5), min_size=4, max_size=4), st.floats(0.1, 2.0))
def test_constant_matches_expm(entries, t):
    M = np.array(entries).reshape(2, 2)
    Phi = propagate_linear(Constant(M), np.eye(2), 0.0, t)
    assert np.allclose(Phi, expm(M * t), rtol=1e-8, atol=1e-9)


def test_rk4_order_on_periodic_coefficient():
    A = Periodic(np.zeros((1, 1)), (TrigTerm(row=0, col=0, amplitude=1.0, frequency=1.0, func="cos"),))
    exact = np.exp(np.sin(2.0))
    errs = [abs(propagate_linear(A, np.eye(1), 0.0, 2.0, IntegratorSettings(step=h))[0, 0] - exact)
            for h in (0.2, 0.1, 0.05)]
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


def test_piecewise_is_exact_across_switch():
    A = PiecewiseConstant([0.0, 1.0], [[[1.0]], [[-2.0]]])
    Phi = propagate_linear(A, np.eye(1), 0.0, 2.0)
    assert Phi[0, 0] == pytest.approx(np.exp(1.0 - 2.0), rel=1e-10)


def test_adaptive_method_agrees_with_rk4():
    M = np.array([[0.0, 1.0], [-2.0, -0.3]])
    a = propagate_linear(Constant(M), np.eye(2), 0.0, 3.0, IntegratorSettings(method="adaptive"))
    assert np.allclose(a, expm(3.0 * M), atol=1e-9)


def test_backward_propagation_inverts_forward():
    A = Periodic(np.array([[0.5, 1.0], [0.0, -0.5]]),
                 (TrigTerm(row=1, col=0, amplitude=0.7, frequency=2.0, func="sin"),))
    fwd = propagate_linear(A, np.eye(2), 0.0, 3.0)
    back = propagate_linear(A, np.eye(2), 3.0, 0.0)
    assert np.allclose(fwd @ back, np.eye(2), atol=1e-10)


def test_linear_solution_on_grid():
    ts = np.linspace(0.0, 1.0, 11)
    X = linear_solution(Constant([[2.0]]), np.eye(1), ts)
    assert np.allclose(X[:, 0, 0], np.exp(2.0 * ts), rtol=1e-10)


@given(st.floats(0, 9), st.floats(0, 9), st.floats(0, 9))
def test_cache_composition(a, b, c):
    A = Periodic(np.array([[0.3, 1.0], [0.0, -0.4]]),
                 (TrigTerm(row=0, col=1, amplitude=0.5, frequency=1.3, func="cos"),))
    cache = _cache(A)
    lhs = cache.transition(c, b) @ cache.transition(b, a)
    assert np.allclose(lhs, cache.transition(c, a), rtol=1e-9, atol=1e-9)


_CACHES = {}


def _cache(A):
    if id(A) not in _CACHES:
        _CACHES.clear()
        _CACHES[id(A)] = TransitionCache(A, np.linspace(0.0, 10.0, 41))
    return _CACHES[id(A)]


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(method="euler")
    with pytest.raises(ValueError):
        IntegratorSettings(step=-1.0)
