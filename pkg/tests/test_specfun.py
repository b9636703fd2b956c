import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbelab import specfun
from cbelab.errors import DomainError


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (3.0, math.log(2.0)), (0.5, 0.5 * math.log(math.pi))])
def test_log_gamma_examples(x, expected):
    assert specfun.log_gamma(x) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_log_gamma_rejects_nonpositive(x):
    with pytest.raises(DomainError):
        specfun.log_gamma(x)


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, math.log(2.0))])
def test_log_barnes_g_examples(x, expected):
    assert specfun.log_barnes_g(x) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.3, 0.77, 1.5, 2.5, 7.25, 19.9, 20.1, 55.0, 300.0])
def test_log_barnes_g_matches_mpmath(x):
    ref = float(mpmath.log(mpmath.barnesg(x)))
    assert specfun.log_barnes_g(x) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_log_barnes_g_functional_equation():
    for x in np.arange(0.5, 10.01, 0.5):
        lhs = specfun.log_barnes_g(x + 1)
        assert abs(lhs - specfun.log_gamma(x) - specfun.log_barnes_g(x)) <= 1e-9


def test_log_barnes_g_rejects_nonpositive():
    with pytest.raises(DomainError):
        specfun.log_barnes_g(0.0)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0, 7.0])
def test_y_beta_vanishes_at_zero(beta):
    assert abs(specfun.y_beta(beta, 0.0)) <= 1e-9


def test_y_two_barnes_identity():
    assert abs(specfun.y_beta(2.0, 2.0) - 2.0 * specfun.y_beta(2.0, 1.0)) <= 1e-6


def test_y_beta_domain():
    with pytest.raises(DomainError):
        specfun.y_beta(2.0, -1.0)


def _y_mpmath(beta, z):
    # independent evaluation of the defining display with mpmath quadrature
    # the bracket cancels like 1/x^2 near 0, so start at eps and add the limit value there
    mpmath.mp.dps = 50
    b = mpmath.mpf(beta)
    z = mpmath.mpf(z)
    eps = mpmath.mpf("1e-6")
    f = lambda x: (1 / (2 * x) - 1 / x**2 + 1 / (x * mpmath.expm1(x))) * mpmath.expm1(-x * z) / mpmath.expm1(x * b / 2)
    integral = mpmath.quad(f, [eps, 1, 10, mpmath.inf]) + eps * (-2 * z / b) / 12
    a = 1 + 2 * z / b
    val = (b / 2) * mpmath.log(mpmath.barnesg(a)) - (z - mpmath.mpf(1) / 2) * mpmath.loggamma(a) + integral + z**2 / b + z / 2
    return float(val)


@pytest.mark.parametrize("beta, z", [(2.0, 1.0), (1.0, 0.7), (4.0, 3.0), (0.5, 2.2), (2.0, -0.5)])
def test_y_beta_matches_mpmath(beta, z):
    assert specfun.y_beta(beta, z) == pytest.approx(_y_mpmath(beta, z), abs=1e-8)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
def test_c_const_intensity(beta):
    assert abs(specfun.c_const(beta, 1) - 1.0 / (2.0 * math.pi)) <= 1e-6


def test_c_const_two_point_beta2_taylor():
    # sine kernel: rho2(0, x) = x^2/12 + O(x^4) in units where the intensity is 1/(2π)
    assert specfun.c_const(2.0, 2) == pytest.approx(1.0 / (48.0 * math.pi**2), rel=1e-8)


def test_f_const_k1_unit():
    assert specfun.f_const(2.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("beta", [1.0, 2.0, 4.0])
def test_f_const_small_s(beta):
    assert specfun.f_const(beta, 1.0, 1e-7) == pytest.approx(1.0, abs=1e-5)


def test_f_const_beta2_k2_barnes_value():
    # β=2 partition constant is G(1+r)^2/G(1+2r); at r=2 this is 1/12
    g = mpmath.barnesg
    part = float(g(3) ** 2 / g(5))
    assert specfun.partition_const(2.0, 2.0) == pytest.approx(part, rel=1e-8)
    assert specfun.f_const(2.0, 2.0, 1.0) == pytest.approx(part / (2.0 * math.pi), rel=1e-8)


@pytest.mark.parametrize("r", [0.5, 1.0, 1.5, 3.0])
def test_partition_const_beta2_matches_barnes(r):
    g = mpmath.barnesg
    assert specfun.partition_const(2.0, r) == pytest.approx(float(g(1 + r) ** 2 / g(1 + 2 * r)), rel=1e-8)


def test_f_const_beta4_golden():
    # frozen after agreement with the Morris-product limit below
    assert specfun.f_const(4.0, 1.0, 1.0) == pytest.approx(math.sqrt(math.pi), rel=1e-8)


@pytest.mark.parametrize("beta, s", [(1.0, 0.5), (1.0, 1.0), (2.0, 0.5), (2.0, 1.0), (4.0, 0.5), (4.0, 1.0)])
def test_f_const_morris_limit(beta, s):
    N = 10_000
    est = math.exp(specfun.morris_moment(beta, N, s) - 2 * s * s / beta * math.log(N))
    assert est == pytest.approx(specfun.f_const(beta, 1.0, s), rel=1e-2)


@pytest.mark.parametrize("beta, N, expected", [(2.0, 2, math.log(2 * (2 * math.pi) ** 2)),
                                               (2.0, 1, math.log(2 * math.pi)),
                                               (4.0, 1, math.log(2 * math.pi))])
def test_z_const_examples(beta, N, expected):
    assert specfun.z_const(beta, N) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("beta", [0.5, 2.0, 6.0])
def test_morris_trivial(beta):
    assert specfun.morris_moment(beta, 1, 1.0) == pytest.approx(math.log(2.0), abs=1e-13)
    assert specfun.morris_moment(beta, 7, 0.0) == 0.0


def test_morris_beta2_n2():
    assert specfun.morris_moment(2.0, 2, 1.0) == pytest.approx(math.log(3.0), abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(0.2, 8.0), N=st.integers(1, 60), r1=st.floats(0.0, 4.0), dr=st.floats(0.0, 2.0))
def test_morris_nondecreasing_in_r(beta, N, r1, dr):
    assert specfun.morris_moment(beta, N, r1 + dr) >= specfun.morris_moment(beta, N, r1) - 1e-12


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.1, 40.0))
def test_barnes_functional_equation_property(x):
    lhs = specfun.log_barnes_g(x + 1)
    rhs = specfun.log_gamma(x) + specfun.log_barnes_g(x)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


def test_mom_exponent_examples():
    assert specfun.mom_exponent(2.0, 2.0, 1.0) == pytest.approx(3.0)
    assert specfun.mom_exponent(2.0, 1.0, 1.0) == pytest.approx(1.0)
    assert specfun.mom_exponent(4.0, 2.0, math.sqrt(2.0)) == pytest.approx(3.0)


def test_constants_report_is_finite_and_serialisable():
    reps = specfun.constants_report(2.0, k=2.0, s=1.0, m=1, N=4, z=1.0)
    names = {r.name for r in reps}
    assert {"c_const", "f_const"} <= names
    for r in reps:
        d = r.to_dict()
        assert math.isfinite(d["value"])
