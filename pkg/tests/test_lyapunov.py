import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapcert.generator import GeneratorContext
from lyapcert.expr import field
from lyapcert.lyapunov import (ConditionFails, LyapunovCandidate, NoFeasiblePoint,
                               PhiFunction, PhiRegimeError, DriftEvaluator,
                               cauchy_k_condition, check_linear, check_multiplicative,
                               check_phi, gaussian_catalog_note,
                               minimal_phi, search_parameters)


def test_phi_regimes():
    assert PhiFunction("power", 2.0, 0.5).regime_flag == "sublinear"
    assert PhiFunction("log-power", 1.0, 1.0).regime_flag == "superlinear"
    with pytest.raises(PhiRegimeError):
        PhiFunction("power", 1.0, 0.5, regime="superlinear")
    with pytest.raises(ValueError):
        PhiFunction("power", 1.0, 1.5)
    with pytest.raises(ValueError):
        PhiFunction("linear", -1.0)


def test_linear_gaussian_exact(gauss, gauss_ctx):
    # L(1+x^2) = 2 - 4x^2 <= -(1+x^2) + 3 on |x| <= 1
    cand = LyapunovCandidate("quadratic", {}, 1)
    cert = check_linear(gauss_ctx, gauss, cand, 1.0, 3.0, 1.0)
    assert cert.min_margin >= -1e-9
    assert cert.tail == "dominates"
    with pytest.raises(ConditionFails):
        check_linear(gauss_ctx, gauss, cand, 10.0, 3.0, 1.0)


def test_linear_uniform_fails(uniform):
    ctx = GeneratorContext(field("0", 1))
    cand = LyapunovCandidate("quadratic", {}, 1)
    with pytest.raises(ConditionFails):
        check_linear(ctx, uniform, cand, 1.0, 10.0, 0.5)


def test_phi_gaussian(gauss, gauss_ctx):
    cand = LyapunovCandidate("gauss-exp", {"a": 0.2}, 1)
    phi = PhiFunction("log-power", 1.0, 1.0)
    b, r0 = minimal_phi(gauss_ctx, gauss, cand, phi)
    cert = check_phi(gauss_ctx, gauss, cand, phi, b, r0)
    assert cert.tail == "dominates"
    assert np.isfinite(b) and r0 < gauss.rmax


def test_phi_cauchy_power(cauchy2):
    ctx = GeneratorContext(field("1.5*log(1+x1^2)", 1))
    cand = LyapunovCandidate("power", {"k": 3.0}, 1)
    phi = PhiFunction("power", 2.0, 1.0 / 3.0)
    b, r0 = minimal_phi(ctx, cauchy2, cand, phi)
    cert = check_phi(ctx, cauchy2, cand, phi, b, r0)
    assert cert.tail == "dominates"
    assert cert.min_margin >= -1e-9


def test_cauchy_k_condition():
    assert cauchy_k_condition(3, 1, 2, 0.2) == pytest.approx(-0.4)


def test_t2_gaussian_equality(gauss, gauss_ctx):
    # W = e^{x^2/4}: LW/W = 1/2 - 3x^2/4 exactly
    cand = LyapunovCandidate("gauss-exp", {"a": 0.25}, 1)
    cert = check_multiplicative(gauss_ctx, gauss, cand, 0.75, 0.5, [0.0])
    assert abs(cert.min_margin) < 1e-9
    assert cert.tail == "undetermined"  # slack vanishes at infinity
    with pytest.raises(ValueError):
        check_multiplicative(gauss_ctx, gauss, cand, 0.0, 0.5, [0.0])


def test_search_gaussian(gauss, gauss_ctx):
    res = search_parameters(gauss_ctx, gauss, "quadratic", "linear", {},
                            rates=[0.5, 1.0, 1.5])
    assert res.certificate.params["lambda"] >= 0.5
    assert res.objective <= 10.0
    assert res.feasible >= 1


def test_search_cauchy_linear_infeasible(cauchy2):
    ctx = GeneratorContext(field("1.5*log(1+x1^2)", 1))
    with pytest.raises(NoFeasiblePoint):
        search_parameters(ctx, cauchy2, "power", "linear", {"k": [2.5, 3.0]},
                          rates=[0.1, 0.5])


def test_catalog_note(gauss_ctx):
    note = gaussian_catalog_note(gauss_ctx)
    assert "(True)" in note and "matches: False" in note


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["quadratic", "gauss-exp", "stretched-exp", "power"]),
       st.floats(0.05, 0.95), st.floats(2.1, 6.0),
       st.lists(st.floats(-50, 50), min_size=8, max_size=8))
def test_candidates_at_least_one(family, a, k, xs):
    params = {"quadratic": {}, "gauss-exp": {"a": a},
              "stretched-exp": {"gamma": a, "p": k / 3}, "power": {"k": k}}[family]
    cand = LyapunovCandidate(family, params, 2)
    ctx = GeneratorContext(field("r2", 2))
    ev = DriftEvaluator(ctx, cand)
    pts = [np.array(xs[:4]), np.array(xs[4:])]
    assert np.all(ev.log_w(pts) >= 0)
