"""Gaussian helpers and the discounted Gaussian time integrals.

``upsilon0(t, x, y)``  = int_0^t exp(-x u) Phi(y sqrt(u)) du
``upsilon(t, x, y, z)`` = int_0^t exp(-x u) Phi(y sqrt(u) + z / sqrt(u)) du

``upsilon0`` has a closed form; ``upsilon`` does not and is evaluated by
quadrature, with ``upsilon_tilde`` its expansion around ``z = 0``.
"""

from __future__ import annotations

import math

from scipy.integrate import quad
from scipy.special import erfi

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Below this |x| * max(t, 1) the 1/x closed form loses too many digits.
_SMALL_X = 1e-4


def norm_cdf(x: float) -> float:
    """Standard normal CDF, accurate in both tails."""
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def half_centered_cdf(x: float) -> float:
    """Phi(x) - 1/2 without cancellation near zero."""
    return 0.5 * math.erf(x / _SQRT2)


def gaussian_kernel_integral(t: float, c: float) -> float:
    """int_0^sqrt(t) 2 exp(-c v^2 / 2) / sqrt(2 pi) dv for any sign of ``c``.

    For ``c > 0`` this is ``(2 / sqrt(c)) (Phi(sqrt(c t)) - 1/2)``; the
    ``c < 0`` branch is its real continuation through ``erfi``.
    """
    if t <= 0:
        return 0.0
    if c > 0:
        return math.erf(math.sqrt(0.5 * c * t)) / math.sqrt(c)
    if c < 0:
        k = -c
        return float(erfi(math.sqrt(0.5 * k * t))) / math.sqrt(k)
    return 2.0 * _INV_SQRT_2PI * math.sqrt(t)


def _upsilon0_zero_x(t: float, y: float) -> float:
    # int_0^t Phi(y sqrt u) du, by parts with int w^2 phi(w) dw = Phi(w) - 1/2 - w phi(w)
    a = abs(y) * math.sqrt(t)
    tail = half_centered_cdf(a) - a * norm_pdf(a)
    return t * norm_cdf(y * math.sqrt(t)) - math.copysign(1.0, y) * tail / (y * y)


def _upsilon_quad(t: float, x: float, y: float, z: float) -> float:
    # substitute u = v^2 so the integrand is smooth at the origin
    def integrand(v: float) -> float:
        if v == 0.0:
            return 0.0
        return 2.0 * v * math.exp(-x * v * v) * norm_cdf(y * v + z / v)

    val, _ = quad(integrand, 0.0, math.sqrt(t), epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def upsilon0(t: float, x: float, y: float) -> float:
    """Closed form of int_0^t exp(-x u) Phi(y sqrt(u)) du.

    Handles ``x = 0`` through its limit, small ``|x|`` by quadrature and
    ``2x + y^2 <= 0`` through the ``erfi`` continuation.
    """
    if t <= 0:
        return 0.0
    if y == 0.0:
        return t / 2.0 if x == 0.0 else -math.expm1(-x * t) / (2.0 * x)
    if x == 0.0:
        return _upsilon0_zero_x(t, y)
    if abs(x) * max(t, 1.0) < _SMALL_X:
        return _upsilon_quad(t, x, y, 0.0)
    c = 2.0 * x + y * y
    sqrt_t = math.sqrt(t)
    if c > 0:
        kernel = math.erf(math.sqrt(0.5 * c * t)) / math.sqrt(c)
    else:
        kernel = gaussian_kernel_integral(t, c)
    # e^{-xt} Phi(y sqrt t) - 1/2 split so the small pieces stay accurate
    boundary = math.exp(-x * t) * 0.5 * math.erf(y * sqrt_t / _SQRT2) + 0.5 * math.expm1(-x * t)
    return (0.5 * y * kernel - boundary) / x


def upsilon0_pair(t: float, x: float, y: float) -> tuple[float, float]:
    """``(upsilon0(t, x, y), upsilon0(t, x, -y))`` sharing the common terms.

    Both share ``c = 2x + y^2`` and ``exp(-x t)``, and ``Phi(y sqrt t) - 1/2``
    is odd in ``y``.
    """
    if t <= 0 or y == 0.0 or x == 0.0 or abs(x) * max(t, 1.0) < _SMALL_X:
        return upsilon0(t, x, y), upsilon0(t, x, -y)
    c = 2.0 * x + y * y
    if c > 0:
        kernel = math.erf(math.sqrt(0.5 * c * t)) / math.sqrt(c)
    else:
        kernel = gaussian_kernel_integral(t, c)
    odd = 0.5 * y * kernel - math.exp(-x * t) * 0.5 * math.erf(y * math.sqrt(t) / _SQRT2)
    even = 0.5 * math.expm1(-x * t)
    return (odd - even) / x, (-odd - even) / x


def upsilon(t: float, x: float, y: float, z: float) -> float:
    """int_0^t exp(-x u) Phi(y sqrt(u) + z / sqrt(u)) du by adaptive quadrature."""
    if t <= 0:
        return 0.0
    if z == 0.0:
        return upsilon0(t, x, y)
    return _upsilon_quad(t, x, y, z)


def upsilon_tilde(t: float, x: float, y: float, z: float) -> float:
    """Second-order expansion of ``upsilon`` in ``z`` around 0.

    upsilon0(t, x, y) + (2/sqrt(c)) (Phi(sqrt(c t)) - 1/2) (z - y z^2 / 2),
    with ``c = 2x + y^2``.  Note the exact remainder contains a
    ``-z|z|/2`` term coming from the neighbourhood of ``u = 0``.
    """
    if t <= 0:
        return 0.0
    c = 2.0 * x + y * y
    return upsilon0(t, x, y) + gaussian_kernel_integral(t, c) * (z - 0.5 * y * z * z)
