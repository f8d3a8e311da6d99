import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltvdetect.errors import DimensionError, DivergenceError
from ltvdetect.observer import certify_error_decay, decay_grid, solve_filter_riccati, synthesize_gain
from ltvdetect.system import Constant, Periodic, TrigTerm, constant_system


@given(st.floats(-1.5, 1.5), st.floats(0.3, 2.0))
def test_scalar_riccati_converges_to_are_root(b, c):
    # the error to p* decays like exp(-2 sqrt(b^2 + c^2) t)
    ric = solve_filter_riccati(Constant([[b]]), Constant([[c]]), horizon=15.0 / np.hypot(b, c))
    p_star = (b + np.sqrt(b * b + c * c)) / (c * c)
    assert ric.P[-1, 0, 0] == pytest.approx(p_star, rel=1e-8)


def test_matrix_riccati_is_symmetric_and_positive():
    B = Periodic(np.array([[1.0, 0.5], [0.0, 0.5]]),
                 (TrigTerm(row=0, col=1, amplitude=1.0, frequency=1.0, func="sin"),))
    C = Constant([[1.0, 0.0], [0.0, 1.0]])
    ric = solve_filter_riccati(B, C, horizon=20.0)
    assert np.abs(ric.P - np.swapaxes(ric.P, 1, 2)).max() <= 1e-12
    assert ric.lambda_inf > 0 and np.isfinite(ric.lambda_sup)


def test_unobservable_antistable_block_diverges():
    with pytest.raises(DivergenceError) as info:
        solve_filter_riccati(Constant([[1.0]]), Constant([[0.0]]), horizon=50.0)
    assert info.value.t is not None


def test_weight_validation():
    with pytest.raises(ValueError):
        solve_filter_riccati(Constant([[1.0]]), Constant([[1.0]]), Q_w=[[-1.0]], horizon=5.0)
    with pytest.raises(DimensionError):
        solve_filter_riccati(Constant([[1.0]]), Constant([[1.0, 0.0]]), horizon=5.0)


def test_gain_structure_pads_with_zeros():
    sys = constant_system([[1.0, 1.0], [0.0, -1.0]], [[1.0, 0.0]])
    ric = solve_filter_riccati(Constant([[1.0]]), Constant([[1.0]]), horizon=50.0)
    L = synthesize_gain(sys, ric)
    vals = L.evaluate_many(np.linspace(0.0, 50.0, 11))
    assert np.all(vals[:, 1, :] == 0.0)
    assert vals[-1, 0, 0] == pytest.approx(1.0 + np.sqrt(2.0), rel=1e-8)
    zero = synthesize_gain(sys, None)
    assert zero.shape == (2, 1) and not np.any(zero.evaluate(0.0))


def test_error_decay_of_triangular_closed_loop():
    sys = constant_system([[1.0, 1.0], [0.0, -1.0]], [[1.0, 0.0]])
    ric = solve_filter_riccati(Constant([[1.0]]), Constant([[1.0]]), horizon=50.0)
    cert = certify_error_decay(sys, synthesize_gain(sys, ric))
    assert cert.valid and cert.mu > 0.9


def test_zero_gain_on_antistable_plant_is_negative_verdict():
    sys = constant_system([[1.0]], [[1.0]])
    cert = certify_error_decay(sys, Constant([[0.0]]))
    assert not cert.valid and cert.mu < 0 and cert.reason


def test_decay_grid_drops_lookahead():
    assert decay_grid().lookahead == 0.0
