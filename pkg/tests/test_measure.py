import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri
from scipy.stats import kstest

from lyapcert.expr import field, parse_potential
from lyapcert.measure import (DegenerateGrid, NegativeDensity, NonIntegrable, NotNormalized,
                              build_measure, functionals, sample)


def test_gaussian_normalization(gauss):
    ref = build_measure(gauss.V, 8.0, 2 ** 16)
    assert abs(gauss.Z / ref.Z - 1) < 1e-6
    assert abs(gauss.Z / math.sqrt(math.pi) - 1) < 1e-6
    assert abs(gauss.mass.sum() - 1) < 1e-8
    assert (gauss.density >= 0).all()


def test_uniform_interval(uniform):
    assert uniform.Z == pytest.approx(2.0, rel=1e-12)
    assert uniform.tail_fraction == 0.0


def test_heavy_tail_passes_boundary_check():
    m = build_measure(field("2*log(1+x1^2)", 1), 1e4, 4096, log_refine=True)
    assert m.Z == pytest.approx(math.pi / 2, rel=1e-8)
    assert 0 < m.tail_fraction < 1e-10


def test_errors():
    V = field("x1^2", 1)
    with pytest.raises(DegenerateGrid):
        build_measure(V, 8.0, 15)
    with pytest.raises(NonIntegrable):
        build_measure(field("0.01*x1^2", 1), 8.0, 256)


def test_integrate(gauss):
    assert gauss.integrate(1.0) == pytest.approx(1.0, abs=1e-12)
    assert gauss.integrate(parse_potential("x1^2", 1)) == pytest.approx(0.5, abs=1e-10)
    assert abs(gauss.integrate(parse_potential("x1^3 + sin(x1)", 1))) < 1e-10


def test_integrate_reports_node(gauss):
    bad = np.ones(gauss.shape)
    bad[np.argmin(np.abs(gauss.pts[0] - 1.0))] = np.nan
    with pytest.raises(FloatingPointError, match="node"):
        gauss.integrate(bad)


def test_tail_mass(gauss, cauchy2):
    assert gauss.tail_mass(0.0) == pytest.approx(1.0, abs=1e-12)
    assert cauchy2.tail_mass(cauchy2.rmax) <= cauchy2.tail_fraction + 1e-15
    r = np.geomspace(10, 1e3, 12)
    t = np.array([cauchy2.tail_mass(x) for x in r])
    slope = np.polyfit(np.log(r), np.log(t), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.05)


def test_cdf_and_quantile(gauss):
    c = gauss.cdf
    assert np.all(np.diff(c) >= 0)
    assert c[0] == 0.0 and c[-1] == pytest.approx(1.0, abs=1e-8)
    step = gauss.pts[0][1] - gauss.pts[0][0]
    assert abs(gauss.quantile(0.5)) <= step
    target = ndtri(0.8413) / math.sqrt(2.0)
    assert gauss.quantile(0.8413) == pytest.approx(target, abs=1e-5)
    q = gauss.quantile(np.array([1e-3, 1e-6, 1e-9, 1e-12]))
    assert np.all(np.diff(q) < 0)


def test_quantile_is_1d(gauss2d):
    with pytest.raises(ValueError):
        gauss2d.quantile(0.5)


def test_functionals_identity(gauss):
    fn = functionals(gauss, parse_potential("1", 1))
    assert fn.entropy == pytest.approx(0.0, abs=1e-14)
    assert fn.fisher == 0.0 and fn.variance == pytest.approx(0.0, abs=1e-14)


def test_functionals_shifted_gaussian(gauss):
    # N(0.3, 1/2) relative to N(0, 1/2): f = exp(2 m x - m^2)
    f = parse_potential("exp(2*0.3*x1 - 0.09)", 1)
    fn = functionals(gauss, f)
    assert fn.entropy == pytest.approx(0.09, abs=1e-4)
    assert fn.fisher == pytest.approx(0.36, abs=1e-3)


def test_functionals_errors(gauss):
    with pytest.raises(NegativeDensity):
        functionals(gauss, parse_potential("x1", 1))
    with pytest.raises(NotNormalized):
        functionals(gauss, parse_potential("2", 1))


def test_sample_1d_mean(gauss):
    s = sample(gauss, 100_000, 7)
    sigma = math.sqrt(0.5)
    assert abs(s.points.mean()) < 3 * sigma / math.sqrt(100_000)


def test_sample_uniform_ks(uniform):
    s = sample(uniform, 10_000, 3)
    stat = kstest(s.points[:, 0], "uniform", args=(-1, 2))
    assert stat.pvalue > 0.01


def test_sample_2d_second_moment(gauss2d):
    s = sample(gauss2d, 100_000, 11)
    assert 0.1 <= s.acceptance <= 0.9
    quad = gauss2d.integrate(parse_potential("r2", 2))
    mc = float(np.mean(np.sum(s.points ** 2, axis=1)))
    assert mc == pytest.approx(quad, rel=0.02)


def test_polar_measure_builds(polar):
    assert polar.tail_fraction < 1e-12
    assert polar.integrate(1.0) == pytest.approx(1.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.0, 1.0), st.floats(-1.0, 1.0))
def test_measure_invariants(a, b, c):
    V = field(f"{a}*x1^2 + {b}*x1^4 + {c}*x1", 1)
    m = build_measure(V, 12.0, 1024)
    assert abs(m.mass.sum() - 1) < 1e-8
    assert (m.density >= 0).all() and math.isfinite(m.Z) and m.Z > 0
    assert np.all(np.diff(m.cdf) >= 0)
    assert m.cdf[-1] == pytest.approx(1.0, abs=1e-8)
