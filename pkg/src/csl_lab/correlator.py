"""Tachyonic spacetime correlator and the Bessel functions it needs.

The closed form is

    spacelike:  G = -Y1(s/a) / (8 pi^2 a s)
    timelike:   G = -K1(s/a) / (4 pi^3 a s)

with ``s = sqrt(|dt^2 - dr^2|)`` and ``a = 1/mu``.  ``g_fourier_oracle``
evaluates the same quantity directly from the momentum-space definition,
without any Bessel function, so the two routes can be compared.

Bessel algorithms and crossovers (x > 0):

    ======  ============  ==============================  =================
    func    x < 2         2 <= x < 25                     x >= 25
    ======  ============  ==============================  =================
    Y1      power series  Steed's continued fractions     Hankel asymptotics
    K1      power series  Temme/Steed continued fraction  Hankel asymptotics
    ======  ============  ==============================  =================

The middle band exists because neither the series (cancellation) nor the
asymptotic expansion (truncation) reaches 1e-10 there.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "bessel_y1",
    "bessel_k1",
    "bessel_j1",
    "CorrelatorPoint",
    "NullSeparationError",
    "classify",
    "g_tachyon",
    "g_nonrel_limit",
    "g_fourier_oracle",
    "g_fourier_oracle_extrapolated",
    "OracleResult",
]

EULER_GAMMA = 0.57721566490153286061
SERIES_MAX = 2.0
ASYMPTOTIC_MIN = 25.0
_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 100000


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("Bessel Y1 and K1 need x > 0")
    return x


def _digamma_pairs(n):
    # psi(k+1) + psi(k+2) for k = 0..n-1
    h = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n + 1))])
    return (h[:-1] - EULER_GAMMA) + (h[1:] - EULER_GAMMA)


def _series_terms(x, sign, n=40):
    # Shared pieces of the small-x series of J1/I1 and of the log-free sum.
    q = sign * 0.25 * x * x
    k = np.arange(n)
    coef = np.empty(n)
    coef[0] = 1.0
    for i in range(1, n):
        coef[i] = coef[i - 1] / (i * (i + 1))
    powers = q ** k
    base = 0.5 * x * np.sum(coef * powers)           # J1 or I1
    log_free = 0.5 * x * np.sum(_digamma_pairs(n) * coef * powers)
    return base, log_free


def _y1_series(x):
    j1, s = _series_terms(x, -1.0)
    return -2.0 / (math.pi * x) + (2.0 / math.pi) * math.log(0.5 * x) * j1 - s / math.pi


def _k1_series(x):
    i1, s = _series_terms(x, +1.0)
    return 1.0 / x + math.log(0.5 * x) * i1 - 0.5 * s


def _hankel_pq(x):
    # P, Q of the Hankel expansion for order one; stop at the smallest term.
    mu4 = 4.0
    p, q = 1.0, 0.0
    term = 1.0
    k = 1
    last = math.inf
    while k < 200:
        term *= (mu4 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) >= last or abs(term) < 1e-18:
            break
        last = abs(term)
        # a_k/x^k with alternating signs split between P and Q
        if k % 2 == 1:
            q += term * (-1) ** ((k - 1) // 2)
        else:
            p += term * (-1) ** (k // 2)
        k += 1
    return p, q


def _y1_asymptotic(x):
    p, q = _hankel_pq(x)
    chi = x - 0.75 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.sin(chi) + q * math.cos(chi))


def _j1_asymptotic(x):
    p, q = _hankel_pq(x)
    chi = x - 0.75 * math.pi
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def _k1_asymptotic(x):
    total, term, k, last = 1.0, 1.0, 1, math.inf
    while k < 200:
        term *= (4.0 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) >= last or abs(term) < 1e-18:
            break
        last = abs(term)
        total += term
        k += 1
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * total


def _jy1_steed(x):
    """J1 and Y1 for x >= 2 from Steed's method (two continued fractions)."""
    xnu = 1.0
    xi = 1.0 / x
    xi2 = 2.0 * xi
    w = xi2 / math.pi
    isign = 1
    h = max(xnu * xi, _FPMIN)
    b = xi2 * xnu
    d = 0.0
    c = h
    for _ in range(_MAXIT):
        b += xi2
        d = b - d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b - 1.0 / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = c * d
        h *= delta
        if d < 0:
            isign = -isign
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"first continued fraction did not converge at x={x}")
    f = h  # J1'/J1, no downward recurrence needed for order one and x >= 2
    a = 0.25 - xnu * xnu
    p = -0.5 * xi
    q = 1.0
    br = 2.0 * x
    bi = 2.0
    fact = a * xi / (p * p + q * q)
    cr = br + q * fact
    ci = bi + p * fact
    den = br * br + bi * bi
    dr = br / den
    di = -bi / den
    dlr = cr * dr - ci * di
    dli = cr * di + ci * dr
    p, q = p * dlr - q * dli, p * dli + q * dlr
    for i in range(2, _MAXIT):
        a += 2 * (i - 1)
        bi += 2.0
        dr = a * dr + br
        di = a * di + bi
        if abs(dr) + abs(di) < _FPMIN:
            dr = _FPMIN
        fact = a / (cr * cr + ci * ci)
        cr = br + cr * fact
        ci = bi - ci * fact
        if abs(cr) + abs(ci) < _FPMIN:
            cr = _FPMIN
        den = dr * dr + di * di
        dr /= den
        di /= -den
        dlr = cr * dr - ci * di
        dli = cr * di + ci * dr
        p, q = p * dlr - q * dli, p * dli + q * dlr
        if abs(dlr - 1.0) + abs(dli) < _EPS:
            break
    else:
        raise ArithmeticError(f"second continued fraction did not converge at x={x}")
    gam = (p - f) / q
    j1 = math.copysign(math.sqrt(w / ((p - f) * gam + q)), isign)
    return j1, j1 * gam


def _k1_temme(x):
    """K1 for x >= 2 via Steed's evaluation of Temme's continued fraction."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, _MAXIT):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:
        raise ArithmeticError(f"continued fraction did not converge at x={x}")
    h = a1 * h
    k0 = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return k0 * (x + 0.5 - h) / x


def _y1_scalar(x):
    if x < SERIES_MAX:
        return _y1_series(x)
    if x < ASYMPTOTIC_MIN:
        return _jy1_steed(x)[1]
    return _y1_asymptotic(x)


def _j1_scalar(x):
    if x < SERIES_MAX:
        return _series_terms(x, -1.0)[0]
    if x < ASYMPTOTIC_MIN:
        return _jy1_steed(x)[0]
    return _j1_asymptotic(x)


def _k1_scalar(x):
    if x < SERIES_MAX:
        return _k1_series(x)
    if x < ASYMPTOTIC_MIN:
        return _k1_temme(x)
    return _k1_asymptotic(x)


def _vectorized(scalar_fn, x):
    x = _check_positive(x)
    if x.ndim == 0:
        return scalar_fn(float(x))
    return np.array([scalar_fn(v) for v in x.ravel()]).reshape(x.shape)


def bessel_y1(x):
    """Bessel function of the second kind, order one, for x > 0."""
    return _vectorized(_y1_scalar, x)


def bessel_k1(x):
    """Modified Bessel function of the second kind, order one, for x > 0."""
    return _vectorized(_k1_scalar, x)


def bessel_j1(x):
    """Bessel function of the first kind, order one, for x > 0 (a by-product)."""
    return _vectorized(_j1_scalar, x)


class NullSeparationError(ValueError):
    """The separation lies inside the light-cone guard band."""


@dataclass(frozen=True)
class CorrelatorPoint:
    dt: float
    dr: float
    interval_class: str
    s: float
    value: float | None


def classify(dt: float, dr: float, mu: float = 1.0, null_guard: float = 1e-8):
    """Return (interval_class, s) for a separation; null inside the guard band."""
    if dr < 0:
        raise ValueError("dr is a magnitude and must be >= 0")
    a = 1.0 / mu
    interval = dt * dt - dr * dr
    s = math.sqrt(abs(interval))
    if abs(interval) < null_guard * a * a:
        return "null", s
    return ("timelike" if interval > 0 else "spacelike"), s


def g_tachyon(dt: float, dr: float, mu: float = 1.0, null_guard: float = 1e-8) -> CorrelatorPoint:
    """Closed-form correlator at separation (dt, dr).

    Raises NullSeparationError inside the light-cone guard band, where the
    closed form is singular.
    """
    cls, s = classify(dt, dr, mu, null_guard)
    if cls == "null":
        raise NullSeparationError(f"|dt^2 - dr^2| below guard band at dt={dt}, dr={dr}")
    a = 1.0 / mu
    if cls == "spacelike":
        value = -_y1_scalar(s / a) / (8.0 * math.pi**2 * a * s)
    else:
        value = -_k1_scalar(s / a) / (4.0 * math.pi**3 * a * s)
    return CorrelatorPoint(dt=dt, dr=dr, interval_class=cls, s=s, value=value)


def g_nonrel_limit(dr, mu: float = 1.0):
    """Spatial factor sin(dr/a) / (4 pi^2 dr) of the equal-time limit.

    The delta(t - t') factor is left to the caller.
    """
    dr = np.asarray(dr, dtype=float)
    if np.any(dr < 0):
        raise ValueError("dr must be >= 0")
    # sinc handles dr -> 0; np.sinc(z) = sin(pi z)/(pi z)
    out = mu * np.sinc(dr * mu / math.pi) / (4.0 * math.pi**2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OracleResult:
    value: float
    abserr: float
    epsilon: float
    clean: bool = True  # False if the integrator emitted warnings


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _shell_factor(k0, r, mu, eps):
    # (1/2) * integral over the k^2 top-hat of exp(i r (k - k0)) in u = |k|^2 - k0^2 - mu^2.
    u = 0.5 * eps * _GL_X
    k = np.sqrt(k0 * k0 + mu * mu + u)
    phase = r * (mu * mu + u) / (k + k0)
    return 0.25 * eps * np.sum(_GL_W * np.exp(1j * phase))


def g_fourier_oracle(dt: float, dr: float, mu: float = 1.0, epsilon: float | None = None,
                     null_guard: float = 1e-8) -> OracleResult:
    """Correlator from its momentum-space definition at finite width.

    The spectral density is a top-hat of height 1/epsilon and width epsilon
    in k^2 around -mu^2.  After the angular integral the remaining (k0, |k|)
    integral is done numerically: Gauss-Legendre across the thin shell and
    QAWF Fourier quadrature along k0.  The non-decaying part of the k0
    integrand is integrated in the Abel sense, which is exact off the cone.
    """
    if epsilon is None:
        epsilon = 1e-3 * mu * mu
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not epsilon < 2 * mu * mu:
        raise ValueError("epsilon must be below 2 mu^2")
    cls, _ = classify(dt, dr, mu, null_guard)
    if cls == "null":
        raise NullSeparationError(f"separation on the light cone: dt={dt}, dr={dr}")
    if dr <= 0:
        raise ValueError("oracle needs dr > 0 (use a boosted separation)")
    t = abs(dt)
    r = dr
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        total, err = _oracle_k0_integral(t, r, mu, epsilon)
    scale = 8.0 * math.pi / (epsilon * r * (2.0 * math.pi) ** 4)
    return OracleResult(value=scale * total, abserr=scale * err, epsilon=epsilon,
                        clean=not caught)


def _oracle_k0_integral(t, r, mu, epsilon):
    total = 0.0
    err = 0.0
    for omega in (r + t, r - t):
        sgn = math.copysign(1.0, omega)
        w = abs(omega)
        total += 0.25 * epsilon * sgn / w
        re_part = lambda k: _shell_factor(k, r, mu, epsilon).real - 0.5 * epsilon
        im_part = lambda k: _shell_factor(k, r, mu, epsilon).imag
        i1, e1 = integrate.quad(re_part, 0.0, np.inf, weight="sin", wvar=w, limlst=200,
                                epsabs=1e-12 * epsilon, limit=200)
        i2, e2 = integrate.quad(im_part, 0.0, np.inf, weight="cos", wvar=w, limlst=200,
                                epsabs=1e-12 * epsilon, limit=200)
        total += 0.5 * (sgn * i1 + i2)
        err += 0.5 * (e1 + e2)
    return total, err


def g_fourier_oracle_extrapolated(dt: float, dr: float, mu: float = 1.0,
                                  epsilon: float | None = None) -> OracleResult:
    """Richardson extrapolation of the oracle to zero width.

    The top-hat is symmetric in k^2, so the leading error is O(epsilon^2).
    """
    if epsilon is None:
        epsilon = 1e-3 * mu * mu
    g1 = g_fourier_oracle(dt, dr, mu, epsilon)
    g2 = g_fourier_oracle(dt, dr, mu, 0.5 * epsilon)
    value = (4.0 * g2.value - g1.value) / 3.0
    abserr = (4.0 * g2.abserr + g1.abserr) / 3.0
    return OracleResult(value=value, abserr=abserr, epsilon=0.0, clean=g1.clean and g2.clean)
