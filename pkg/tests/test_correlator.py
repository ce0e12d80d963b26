import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special
from scipy.optimize import brentq

from csl_lab.acceptance import k1_integral, y1_integral
from csl_lab.correlator import (ASYMPTOTIC_MIN, SERIES_MAX, NullSeparationError, bessel_j1,
                                bessel_k1, bessel_y1, classify, g_fourier_oracle,
                                g_fourier_oracle_extrapolated, g_nonrel_limit, g_tachyon)

XS = np.geomspace(1e-6, 700.0, 61)


def test_k1_against_integral_representation():
    for x in XS:
        assert abs(bessel_k1(x) * math.exp(x) / k1_integral(x) - 1) < 1e-10, x


def test_y1_against_integral_representation():
    for x in XS:
        ref = y1_integral(x)
        assert abs(bessel_y1(x) - ref) < 1e-10 * abs(ref), x


def test_against_scipy_on_dense_grid():
    x = np.linspace(1e-3, 60.0, 4000)
    assert np.max(np.abs(bessel_k1(x) / special.k1(x) - 1)) < 1e-12
    env = np.maximum(np.abs(special.y1(x)), np.sqrt(2 / (np.pi * x)))
    assert np.max(np.abs(bessel_y1(x) - special.y1(x)) / env) < 1e-12
    assert np.max(np.abs(bessel_j1(x) - special.j1(x))) < 1e-12


def test_reference_values():
    # oracle agreement at 1e-10 relative
    assert abs(bessel_k1(1.0) / k1_integral(1.0) * math.e - 1) < 1e-10
    assert abs(bessel_k1(1.0) - 0.6019072302) < 1e-10
    assert abs(bessel_y1(1.0) - (-0.7812128213)) < 1e-10


def test_small_argument_singularity():
    for x in (1e-6, 1e-8, 1e-10):
        assert abs(x * bessel_k1(x) - 1) < 10 * x
        assert abs(-math.pi * x / 2 * bessel_y1(x) - 1) < 10 * x


def test_crossovers_are_continuous():
    for edge in (SERIES_MAX, ASYMPTOTIC_MIN):
        lo, hi = np.nextafter(edge, 0), edge
        assert abs(bessel_k1(lo) / bessel_k1(hi) - 1) < 1e-12
        assert abs(bessel_y1(lo) - bessel_y1(hi)) < 1e-12


def test_nonpositive_rejected():
    for f in (bessel_k1, bessel_y1):
        with pytest.raises(ValueError):
            f(0.0)
        with pytest.raises(ValueError):
            f(-1.0)


def test_y1_zero_locations():
    zeros = special.y1_zeros(20)[0].real
    for z in zeros:
        mine = brentq(lambda x: bessel_y1(x), z - 0.1, z + 0.1, xtol=1e-14)
        assert abs(mine - z) < 1e-6


def test_spacelike_sign_period():
    x = np.linspace(30.0, 300.0, 20000)
    y = bessel_y1(x)
    crossings = x[1:][np.sign(y[1:]) != np.sign(y[:-1])]
    assert np.allclose(np.diff(crossings), math.pi, atol=0.01)


def test_closed_form_values():
    p = g_tachyon(0.0, 1.0)
    assert p.interval_class == "spacelike" and p.s == 1.0
    assert abs(p.value - (-bessel_y1(1.0) / (8 * math.pi**2))) < 1e-15
    assert abs(p.value - 0.009894) < 5e-7
    p = g_tachyon(1.0, 0.0)
    assert p.interval_class == "timelike"
    ref = -k1_integral(1.0) / math.e / (4 * math.pi**3)
    assert abs(p.value / ref - 1) < 1e-10
    assert abs(p.value - (-0.0048531)) < 5e-8


def test_scaling_with_mu():
    # value scales as mu^2 at fixed s/a
    for mu in (0.5, 2.0):
        assert math.isclose(g_tachyon(0, 1.3 / mu, mu).value, mu**2 * g_tachyon(0, 1.3).value,
                            rel_tol=1e-13)


def test_timelike_exponential_decay():
    v = g_tachyon(20.0, 0.0).value
    assert abs(v) < math.exp(-20.0)
    for s in (30.0, 100.0, 400.0):
        bounded = abs(g_tachyon(s, 0.0).value) * math.sqrt(s) * math.exp(s)
        assert bounded < 1.0


def test_spacelike_power_decay():
    s = np.linspace(50, 5000, 200)
    vals = np.array([abs(g_tachyon(0.0, x).value) for x in s]) * s**1.5
    assert vals.max() < 1.0 / (8 * math.pi**2) * math.sqrt(2 / math.pi) * 1.01


def test_null_guard():
    with pytest.raises(NullSeparationError):
        g_tachyon(1.0, 1.0)
    with pytest.raises(NullSeparationError):
        g_tachyon(1.0, 1.0 + 1e-10)
    assert classify(1.0, 1.0)[0] == "null"
    with pytest.raises(ValueError):
        classify(1.0, -1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 50.0), st.floats(-2.0, 2.0), st.booleans())
def test_frame_independence(s, eta, spacelike):
    if spacelike:
        a = g_tachyon(0.0, s).value
        b = g_tachyon(abs(s * math.sinh(eta)), s * math.cosh(eta)).value
    else:
        a = g_tachyon(s, 0.0).value
        b = g_tachyon(s * math.cosh(eta), abs(s * math.sinh(eta))).value
    assert abs(a - b) <= 1e-10 * abs(a) + 1e-300


def test_nonrel_limit_values():
    assert abs(g_nonrel_limit(0.0) - 1 / (4 * math.pi**2)) < 1e-16
    assert abs(g_nonrel_limit(0.0) - 0.025330) < 5e-7
    assert abs(g_nonrel_limit(math.pi)) < 1e-17
    assert abs(g_nonrel_limit(0.5) - math.sin(0.5) / 0.5 / (4 * math.pi**2)) < 1e-16
    assert abs(g_nonrel_limit(0.5) - 0.024288) < 5e-7
    with pytest.raises(ValueError):
        g_nonrel_limit(-1.0)


def test_nonrel_limit_is_transform_of_the_shell():
    # int d^3k/(2pi)^3 e^{ik.x} with a top-hat of width eps in |k|^2 around mu^2
    def transform(r, eps):
        f = lambda k: 4 * math.pi * k * k * math.sin(k * r) / (k * r) / eps / (2 * math.pi) ** 3
        lo, hi = math.sqrt(1 - eps / 2), math.sqrt(1 + eps / 2)
        return integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13)[0]

    for r in (0.3, 1.0, 2.5, 7.0):
        eps = 1e-3
        val = (4 * transform(r, eps / 2) - transform(r, eps)) / 3
        assert abs(val - g_nonrel_limit(r)) < 1e-6 * abs(g_nonrel_limit(r))


def test_oracle_matches_closed_form_at_unit_interval():
    for dt, dr in ((math.sinh(0.3), math.cosh(0.3)), (math.cosh(0.3), math.sinh(0.3))):
        orc = g_fourier_oracle_extrapolated(dt, dr)
        assert orc.clean
        closed = g_tachyon(dt, dr).value
        assert abs(orc.value - closed) < 1e-4 * abs(closed)


def test_oracle_lorentz_invariance():
    s = 1.7
    vals = [g_fourier_oracle_extrapolated(s * math.sinh(e), s * math.cosh(e)).value for e in (0.1, 0.8)]
    assert abs(vals[0] - vals[1]) < 1e-4 * abs(vals[0])
    vals = [g_fourier_oracle_extrapolated(s * math.cosh(e), s * math.sinh(e)).value for e in (0.1, 0.8)]
    assert abs(vals[0] - vals[1]) < 1e-4 * abs(vals[0])


def test_oracle_converges_in_epsilon():
    dt, dr = 0.0, 2.0
    with pytest.raises(ValueError):
        g_fourier_oracle(dt, 0.0)
    dt = 0.5
    closed = g_tachyon(dt, dr).value
    e1 = abs(g_fourier_oracle(dt, dr, epsilon=4e-3).value - closed)
    e2 = abs(g_fourier_oracle(dt, dr, epsilon=2e-3).value - closed)
    # symmetric top-hat: second-order in epsilon
    assert 3.0 < e1 / e2 < 5.0


def test_oracle_rejects_bad_epsilon_and_null():
    with pytest.raises(ValueError):
        g_fourier_oracle(0.1, 1.0, epsilon=0.0)
    with pytest.raises(NullSeparationError):
        g_fourier_oracle(1.0, 1.0)
