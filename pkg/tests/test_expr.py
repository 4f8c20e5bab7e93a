import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapcert import expr as E
from lyapcert.corpus import random_corpus
from lyapcert.expr import (BinOp, Call, Const, DomainError, ParseError, R2, ScalarField, Var,
                           differentiate, evaluate, laplacian_expr, parse_potential, to_text)


def test_parse_sum_of_squares():
    e = parse_potential("x1^2 + x2^2", 2)
    assert e == BinOp("+", BinOp("^", Var(0), Const(2.0)), BinOp("^", Var(1), Const(2.0)))


def test_parse_cauchy_literal():
    e = parse_potential("(1+2)*log(1+x1^2)", 1)
    assert e == BinOp("*", Const(3.0), Call("log", (BinOp("+", Const(1.0),
                                                          BinOp("^", Var(0), Const(2.0))),)))


def test_parse_oscillatory_cubic():
    e = parse_potential("x1^3 + 3*x1^2*sin(x1) + x1", 1)
    assert E.free_vars(e) == {0}
    x = np.array([0.3, -1.7, 2.0])
    np.testing.assert_allclose(evaluate(e, [x]), x ** 3 + 3 * x ** 2 * np.sin(x) + x)


def test_star_star_alias():
    assert parse_potential("x1**2", 1) == parse_potential("x1^2", 1)


@pytest.mark.parametrize("src,pos", [("x1 + * 2", 5), ("(x1 + 2", 7), ("x1 $ 2", 3)])
def test_syntax_error_position(src, pos):
    with pytest.raises(ParseError) as info:
        parse_potential(src, 1)
    assert info.value.pos == pos


@pytest.mark.parametrize("src", ["y + 1", "x3", "foo(x1)"])
def test_unknown_identifier(src):
    with pytest.raises(ParseError, match="unknown"):
        parse_potential(src, 2)


@pytest.mark.parametrize("src", ["sin(x1, x1)", "atan2(x1)"])
def test_arity(src):
    with pytest.raises(ParseError, match="argument"):
        parse_potential(src, 1)


def test_theta_needs_dim2():
    with pytest.raises(ParseError):
        parse_potential("theta", 1)
    th = ScalarField(parse_potential("theta", 2), 2)
    assert th.value([np.array(0.0), np.array(1.0)]) == pytest.approx(math.pi / 2)


def test_power_rule_and_chain_rule():
    x = np.linspace(-2, 2, 9)
    d = differentiate(parse_potential("x1^2", 1), 0)
    np.testing.assert_allclose(evaluate(d, [x]), 2 * x)
    a = 0.3
    d = differentiate(parse_potential(f"exp({a}*x1^2)", 1), 0)
    np.testing.assert_allclose(evaluate(d, [x]), 2 * a * x * np.exp(a * x * x))


def test_laplacian_of_r2():
    lap = laplacian_expr(parse_potential("x1^2+x2^2", 2), 2)
    assert evaluate(lap, [np.array(0.7), np.array(-3.0)]) == pytest.approx(4.0)
    assert evaluate(laplacian_expr(R2(2), 2), [np.array(1.0), np.array(2.0)]) == pytest.approx(4.0)


def test_field_at_one_one():
    V = ScalarField(R2(2), 2)
    p = [np.array(1.0), np.array(1.0)]
    np.testing.assert_allclose(V.gradient(p), [2.0, 2.0])
    assert V.laplacian(p) == pytest.approx(4.0)


def test_constant_hessian():
    V = E.field("x1^2", 1)
    H = V.hessian([np.linspace(-3, 3, 7)])
    np.testing.assert_allclose(H, 2.0)


def test_polar_hessian_bounded_negative_min():
    V = E.field("r2*(2+sin(4*theta))", 2)
    ax = np.linspace(-5, 5, 64)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    H = V.hessian([X, Y])
    mats = np.moveaxis(H, (0, 1), (-2, -1))
    ev = np.linalg.eigvalsh(mats)
    assert np.isfinite(ev).all()
    assert ev.min() < 0
    # degree-0 homogeneity of the Hessian: same range on a wider box
    H2 = V.hessian([3 * X, 3 * Y])
    ev2 = np.linalg.eigvalsh(np.moveaxis(H2, (0, 1), (-2, -1)))
    assert abs(ev2.min() - ev.min()) < 1e-9 * abs(ev.min())


def test_domain_error_reports_point():
    with pytest.raises(DomainError, match="log"):
        evaluate(parse_potential("log(x1)", 1), [np.array([1.0, -1.0])])


def test_identity_folding():
    x = Var(0)
    assert E.add(Const(0.0), x) == x
    assert E.mul(Const(1.0), x) == x
    assert E.mul(Const(0.0), x) == Const(0.0)
    assert E.power(x, Const(1.0)) == x
    assert E.add(Const(2.0), Const(3.0)) == Const(5.0)


_corpus1 = random_corpus(1, 40, 7)
_corpus2 = random_corpus(2, 40, 8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 39), st.sampled_from([1, 2]))
def test_round_trip(i, dim):
    e = (_corpus1 if dim == 1 else _corpus2)[i]
    again = parse_potential(to_text(e), dim)
    assert to_text(again) == to_text(e)
    pts = [np.array([0.37, -1.2, 2.5])] * dim
    np.testing.assert_allclose(evaluate(again, pts), evaluate(e, pts), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 39), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_derivatives_match_finite_differences(i, x, y):
    e = _corpus2[i]
    F = ScalarField(e, 2)
    h = 1e-4
    p = np.array([x, y])

    def v(q):
        return float(F.value([np.array(q[0]), np.array(q[1])]))

    grad = F.gradient([np.array(x), np.array(y)])
    lap = float(F.laplacian([np.array(x), np.array(y)]))
    H = F.hessian([np.array(x), np.array(y)])

    def g(q):
        return F.gradient([np.array(q[0]), np.array(q[1])])

    for k in range(2):
        ek = np.eye(2)[k] * h
        fd = (v(p + ek) - v(p - ek)) / (2 * h)
        assert abs(grad[k] - fd) <= 1e-6 * max(1.0, abs(fd))
        # second derivatives: central differences of the exact gradient
        col = (g(p + ek) - g(p - ek)) / (2 * h)
        for j in range(2):
            assert abs(H[j, k] - col[j]) <= 1e-6 * max(1.0, abs(col[j]))
    assert abs(lap - (H[0, 0] + H[1, 1])) <= 1e-12 * max(1.0, abs(lap))


def test_differentiation_closed():
    e = parse_potential("atan2(x2, x1) * exp(-x1^2) / sqrt(1 + x2^2)", 2)
    for i in (0, 1):
        d = differentiate(e, i)
        assert isinstance(d, E.Expr)
        assert parse_potential(to_text(d), 2) is not None
