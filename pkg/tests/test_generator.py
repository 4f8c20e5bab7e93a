import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lyapcert.corpus import random_corpus
from lyapcert.expr import ScalarField, call, field
from lyapcert.generator import (PSI_MENU, GeneratorContext, LemmaPrecondition, PsiFunction,
                                apply_L, check_lemma, gamma, ibp_defect, lemma_suite,
                                lemma_tolerance)


def test_apply_L_examples(gauss_ctx):
    assert apply_L(gauss_ctx, "x1^2", [1.0]) == pytest.approx(-2.0)
    assert apply_L(gauss_ctx, "7", [0.4]) == 0.0
    assert apply_L(gauss_ctx, "x1", [3.0]) == pytest.approx(-6.0)


def test_gamma_examples(gauss_ctx):
    assert gamma(gauss_ctx, "x1", "x1", [2.5]) == pytest.approx(1.0)
    assert gamma(gauss_ctx, "x1", "3", [2.5]) == 0.0


def test_gamma_chain_rule(rng):
    ctx = GeneratorContext(field("r2", 2))
    fs = random_corpus(2, 10, 21)
    gs = random_corpus(2, 10, 22)
    for k in range(100):
        f, g = fs[k % 10], gs[k % 10]
        x = rng.uniform(-2, 2, 2)
        F = ScalarField(f, 2)
        G = ScalarField(g, 2)
        fv, gv = float(F.value(list(x))), float(G.value(list(x)))
        lhs = gamma(ctx, f * f, call("sin", g), x)
        rhs = 2 * fv * math.cos(gv) * gamma(ctx, f, g, x)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_lemma_constant_f(gauss, gauss_ctx):
    for psi in PSI_MENU[:3]:
        res = check_lemma(gauss_ctx, gauss, "1", "1 + x1^2", psi)
        assert res.lhs <= 0
        assert res.margin >= 0


def test_lemma_equality_case(gauss, gauss_ctx):
    res = check_lemma(gauss_ctx, gauss, "1 + x1^2", "1 + x1^2", PsiFunction("identity"))
    assert abs(res.margin) <= 1e-8 * res.scale


def test_lemma_quadrature_example(gauss, gauss_ctx):
    res = check_lemma(gauss_ctx, gauss, "x1", "1 + x1^2", PsiFunction("identity"))
    rho = lambda x: math.exp(-x * x) / math.sqrt(math.pi)  # noqa: E731
    lhs = quad(lambda x: (4 * x * x - 2) / (1 + x * x) * x * x * rho(x), -np.inf, np.inf)[0]
    assert res.lhs == pytest.approx(lhs, rel=1e-9)
    assert res.rhs == pytest.approx(1.0, rel=1e-9)
    assert res.margin >= 0


def test_lemma_preconditions(gauss, gauss_ctx):
    with pytest.raises(LemmaPrecondition):
        check_lemma(gauss_ctx, gauss, "x1", "x1^2", PsiFunction("identity"))
    with pytest.raises(ValueError):
        PsiFunction("power", -1.0)
    with pytest.raises(ValueError):
        PsiFunction("cube")


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(PSI_MENU), st.floats(1.0, 300.0), st.floats(1e-6, 10.0))
def test_psi_strictly_increasing(psi, u, du):
    assert psi.deriv(u) > 0
    assert psi.value(u + du) > psi.value(u)


def test_ibp_symmetry(gauss, gauss_ctx):
    fs = random_corpus(1, 10, 31)
    gs = random_corpus(1, 10, 32)
    for f, g in zip(fs, gs):
        defect, scale = ibp_defect(gauss_ctx, gauss, f, g)
        assert defect <= 1e-6 * scale


def test_lemma_suite_gaussian(gauss, gauss_ctx):
    cases = lemma_suite(gauss_ctx, gauss, seed=7, count=20)
    assert len(cases) == 20
    assert all(c.result.margin >= lemma_tolerance(c.result) for c in cases)
