import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltvdetect.errors import DimensionError, DomainError
from ltvdetect.system import (BlockPartition, Constant, LtvSystem, Periodic, PiecewiseConstant, Sampled,
                              TrigTerm, assemble_block_triangular, closed_loop, constant_system)


def test_periodic_evaluation_matches_formula():
    f = Periodic(np.array([[1.0, 0.0]]), (TrigTerm(row=0, col=1, amplitude=2.0, frequency=3.0, func="sin"),))
    ts = np.array([0.0, 0.3, 1.7])
    vals = f.evaluate_many(ts)
    assert np.allclose(vals[:, 0, 0], 1.0)
    assert np.allclose(vals[:, 0, 1], 2.0 * np.sin(3.0 * ts))


def test_piecewise_is_right_continuous():
    f = PiecewiseConstant([0.0, 1.0], [[[1.0]], [[2.0]]])
    assert f.evaluate(1.0)[0, 0] == 2.0
    assert f.evaluate(1.0 - 1e-12)[0, 0] == 1.0
    assert 1.0 in f.breakpoints()


def test_sampled_interpolates_linearly_and_checks_domain():
    f = Sampled([0.0, 2.0], [[[0.0]], [[4.0]]])
    assert f.evaluate(0.5)[0, 0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        f.evaluate(3.0)


def test_non_finite_and_shape_errors():
    with pytest.raises(DomainError):
        Constant([[np.nan]])
    with pytest.raises(DimensionError):
        LtvSystem(Constant(np.eye(2)), Constant(np.ones((1, 3))))
    with pytest.raises(DimensionError):
        LtvSystem(Constant(np.ones((2, 3))), Constant(np.ones((1, 3))))


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_partition_projector(k):
    part = BlockPartition(3, k)
    P = part.projector
    assert np.allclose(P @ P, P)
    assert np.trace(P) == k
    assert part.lead.stop == 3 - k


def test_partition_rejects_bad_rank():
    with pytest.raises(ValueError):
        BlockPartition(2, 3)


def test_block_triangular_assembly_and_predicates():
    part = BlockPartition(2, 1)
    sys = assemble_block_triangular(Constant([[1.0]]), Constant([[2.0]]), Constant([[-1.0]]),
                                    Constant([[1.0]]), Constant([[0.0]]), part)
    assert np.allclose(sys.A.evaluate(0.3), [[1.0, 2.0], [0.0, -1.0]])
    assert sys.is_block_triangular(part)
    assert sys.is_upper_triangular()
    assert not sys.is_block_diagonal(part)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 20))
def test_closed_loop_entries(a, l, t):
    A, L, C = Constant([[a]]), Constant([[l]]), Constant([[1.0]])
    assert closed_loop(A, L, C).evaluate(t)[0, 0] == pytest.approx(a - l)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_constant_bound_is_spectral_norm(entries):
    M = np.array(entries).reshape(2, 2)
    sys = constant_system(M, np.eye(2))
    assert sys.bound_a == pytest.approx(np.linalg.norm(M, 2), abs=1e-12)
