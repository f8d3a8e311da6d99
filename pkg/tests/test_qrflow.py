import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltvdetect.errors import DimensionError
from ltvdetect.qrflow import positive_qr, run_qr_flow, triangularized_system
from ltvdetect.system import Constant, LtvSystem, Periodic, TrigTerm, constant_system

matrices = st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9).map(lambda v: np.array(v).reshape(3, 3))


def test_positive_qr_has_positive_diagonal():
    Q, R = positive_qr(np.array([[-2.0, 1.0], [0.0, -3.0]]))
    assert np.all(np.diag(R) > 0)
    assert np.allclose(Q @ R, [[-2.0, 1.0], [0.0, -3.0]])


@given(matrices)
def test_orthogonality_and_log_determinant(M):
    sys = constant_system(M, np.eye(3))
    flow = run_qr_flow(sys, horizon=5.0)
    assert flow.orthogonality.max() <= 1e-8
    # sum of log-diagonal entries of R is log |det X| = trace(A) t
    assert np.allclose(flow.nu.sum(axis=1), np.trace(M) * flow.times, atol=1e-8)
    assert np.abs(np.tril(flow.B, -1)).max() == 0.0


def test_upper_triangular_system_keeps_identity_frame():
    A = Periodic(np.array([[1.0, 2.0], [0.0, -1.0]]),
                 (TrigTerm(row=0, col=0, amplitude=0.5, frequency=1.0, func="sin"),))
    sys = LtvSystem(A, Constant([[1.0, 0.0]]))
    flow = run_qr_flow(sys, horizon=10.0)
    assert np.abs(flow.Q - np.eye(2)).max() <= 1e-12
    # nu_1(t) = t + 0.5 (1 - cos t)
    assert flow.nu[-1, 0] == pytest.approx(10.0 + 0.5 * (1.0 - np.cos(10.0)), abs=1e-9)


def test_q_between_nodes_is_orthogonal():
    sys = constant_system([[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0]])
    flow = run_qr_flow(sys, horizon=5.0)
    ts = np.linspace(0.0, 5.0, 777)
    Q = flow.q_at(ts)
    assert np.abs(np.swapaxes(Q, 1, 2) @ Q - np.eye(2)).max() <= 1e-10


def test_triangularized_output_preserves_gramian_trace():
    sys = constant_system([[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0]])
    flow = run_qr_flow(sys, horizon=10.0)
    tri = triangularized_system(sys, flow)
    ts = np.linspace(0.0, 10.0, 51)
    # z = Q^T x, so C Q Q^T = C
    CQ = tri.C.evaluate_many(ts)
    assert np.allclose(CQ @ np.swapaxes(flow.q_at(ts), 1, 2), sys.C.evaluate_many(ts), atol=1e-12)
    assert tri.is_upper_triangular()


def test_bad_initial_frame_shape():
    with pytest.raises(DimensionError):
        run_qr_flow(constant_system(np.eye(2), np.eye(2)), X0=np.eye(3), horizon=1.0)
