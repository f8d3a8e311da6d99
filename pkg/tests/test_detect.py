import numpy as np
import pytest

from ltvdetect import AnalysisOptions, analyze, analyze_diagonal
from ltvdetect.bundled import SUITE, expected_verdict, load_example
from ltvdetect.errors import FormError
from ltvdetect.system import BlockPartition, constant_system

# frozen decay rates of the certified error dynamics (default options)
FROZEN_MU = {"diag_observed": 1.014709, "hyperbolic": 0.848466, "scalar_antistable": 1.410182,
             "triangular_constant": 0.958996, "stable": 0.999999}


@pytest.mark.parametrize("name", sorted(FROZEN_MU))
def test_frozen_decay_rates(name):
    r = analyze(load_example(name)[0])
    assert r.verdict == "detectable"
    assert r.decay.mu == pytest.approx(FROZEN_MU[name], abs=1e-6)


@pytest.mark.parametrize("name", ["zero_output", "switching"])
def test_extra_examples_match_expected(name):
    assert analyze(load_example(name)[0]).verdict == expected_verdict(name)


def test_not_detectable_names_uco_failure():
    r = analyze(load_example("diag_unobserved")[0])
    assert r.verdict == "not-detectable"
    assert r.uco is not None and not r.uco.uco
    assert [w.sigma for w in r.uco_reports] == [1.0, 2.0, 4.0]


def test_rotation_is_inconclusive_at_exponents():
    r = analyze(load_example("rotation")[0])
    assert (r.verdict, r.stage) == ("inconclusive", "exponents")
    assert r.diagnostics


def test_pinned_k_overrides_estimate():
    r = analyze(load_example("triangular_constant")[0], AnalysisOptions(k=1))
    assert r.k == 1 and not r.triangularized


def test_wrong_pinned_k_is_inconclusive_at_dichotomy():
    r = analyze(load_example("diag_observed")[0], AnalysisOptions(k=2))
    assert (r.verdict, r.stage) == ("inconclusive", "dichotomy")


def test_diagonal_route_records_transformed_output():
    r = analyze(load_example("triangular_periodic")[0], AnalysisOptions(route="diagonal"))
    assert r.verdict == "detectable"
    out = r.transformed_output
    assert out["c1_defect"] <= 1e-12
    assert out["reduction"]["offdiag_max"] <= 1e-6


def test_analyze_diagonal_requires_block_diagonal_form():
    part = BlockPartition(2, 1)
    r = analyze_diagonal(constant_system(np.diag([1.0, -1.0]), [[1.0, 0.0]]), part)
    assert r.verdict == "detectable"
    with pytest.raises(FormError):
        analyze_diagonal(constant_system([[1.0, 1.0], [0.0, -1.0]], [[1.0, 0.0]]), part)


def test_report_serialises():
    r = analyze(load_example("hyperbolic")[0])
    d = r.to_dict()
    assert d["verdict"] == "detectable" and d["triangularized"]
    assert set(SUITE) >= {"hyperbolic"}


def test_option_validation():
    with pytest.raises(ValueError):
        AnalysisOptions(route="sideways")
    with pytest.raises(ValueError):
        AnalysisOptions(sigmas=())
