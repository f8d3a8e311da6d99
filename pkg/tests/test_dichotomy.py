import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltvdetect.bundled import load_example
from ltvdetect.dichotomy import (CertificationGrid, PairSamples, bound_constant, bound_residual,
                                 certify_dichotomy, default_gap, estimate_exponents, fit_rate)
from ltvdetect.errors import CertificationError, NoGapError
from ltvdetect.qrflow import run_qr_flow
from ltvdetect.system import constant_system

# frozen oracle values (default grid, seed 0)
TRIANGULAR_PERIODIC_K = 2.7706982174066304
TRIANGULAR_PERIODIC_ALPHA = 0.975853


def test_refined_grid_doubles_density():
    g = CertificationGrid(n_starts=5, offsets=(1.0, 2.0, 4.0))
    r = g.refined()
    assert r.n_starts == 9
    assert r.offsets == (0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
    assert r.end == g.end


@pytest.mark.parametrize("bad", [dict(n_starts=0), dict(offsets=(2.0, 1.0)), dict(offsets=(0.0, 1.0)),
                                 dict(sup_step=0.0)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        CertificationGrid(**bad)


@given(st.floats(0.1, 3.0), st.floats(1.0, 5.0))
def test_fit_rate_recovers_exact_exponential(rate, K):
    d = np.repeat([0.5, 1.0, 2.0, 5.0], 3)
    s = PairSamples(np.zeros_like(d), d, K * np.exp(-rate * d))
    a = fit_rate(s)
    assert a == pytest.approx(rate, abs=2e-6)
    assert bound_constant(s, a) == pytest.approx(K, rel=1e-5)
    assert bound_residual(s, bound_constant(s, a), a)[0] <= 1e-12


def test_exponents_of_diagonal_system():
    sys = constant_system(np.diag([1.0, -1.0]), [[1.0, 1.0]])
    est = estimate_exponents(run_qr_flow(sys, horizon=50.0), 10.0, default_gap(sys))
    assert est.k == 1 and est.ordered
    assert np.allclose(est.lower, [1.0, -1.0], atol=1e-9)
    assert est.classes == ("unstable", "stable")


def test_exponents_reject_rotation():
    sys, _ = load_example("rotation")
    with pytest.raises(NoGapError) as info:
        estimate_exponents(run_qr_flow(sys, horizon=50.0), 10.0, default_gap(sys))
    assert info.value.estimate.classes == ("marginal", "marginal")


def test_unordered_exponents_have_no_rank():
    sys = constant_system(np.diag([-1.0, 1.0]), [[1.0, 1.0]])
    est = estimate_exponents(run_qr_flow(sys, horizon=50.0), 10.0, default_gap(sys))
    assert not est.ordered and est.k is None


def test_triangular_periodic_frozen_certificate():
    sys, _ = load_example("triangular_periodic")
    cert = certify_dichotomy(sys, 1)
    assert cert.K == pytest.approx(TRIANGULAR_PERIODIC_K, rel=1e-9)
    assert cert.alpha == pytest.approx(TRIANGULAR_PERIODIC_ALPHA, abs=1e-12)
    assert max(cert.stable_residual, cert.unstable_residual) <= cert.tol


@pytest.mark.parametrize("k", [0, 2])
def test_wrong_rank_is_rejected(k):
    sys = constant_system(np.diag([1.0, -1.0]), [[1.0, 1.0]])
    with pytest.raises(CertificationError) as info:
        certify_dichotomy(sys, k)
    assert info.value.worst_pair is not None


def test_stable_and_antistable_extremes():
    stable = certify_dichotomy(constant_system(-np.eye(2), [[1.0, 0.0]]), 2)
    anti = certify_dichotomy(constant_system([[2.0]], [[1.0]]), 0)
    assert stable.alpha == pytest.approx(1.0, abs=1e-5)
    assert anti.alpha == pytest.approx(2.0, abs=1e-5)


def test_seed_changes_nothing_for_constant_system():
    sys = constant_system([[1.0, 1.0], [0.0, -1.0]], [[1.0, 0.0]])
    a, b = certify_dichotomy(sys, 1, seed=0), certify_dichotomy(sys, 1, seed=5)
    assert a.alpha == pytest.approx(b.alpha, abs=1e-5)
    assert a.K == pytest.approx(b.K, rel=1e-4)
