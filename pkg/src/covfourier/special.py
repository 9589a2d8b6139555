"""Gaussian absolute moments and the hypergeometric function they need."""

from __future__ import annotations

import math

from scipy.special import digamma, rgamma

from .errors import NoConvergenceError, ValidationError

_MAX_TERMS = 1_000_000
# beyond this point the power series in x converges too slowly (terms decay
# only like k^{-(c-a-b)-1}); switch to the expansion around x = 1
_CONTINUATION_FROM = 0.9


def _nonpositive_int(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


def _series(a, b, c, x, rtol):
    total = 1.0
    term = 1.0
    for k in range(_MAX_TERMS):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1)) * x
        total += term
        if term == 0.0 or abs(term) < rtol * abs(total):
            return total
    raise NoConvergenceError(f"2F1({a}, {b}; {c}; {x}) did not converge in {_MAX_TERMS} terms")


def _rgamma(v: float) -> float:
    # 1/Gamma without overflow near the poles (1/Gamma(v) ~ v as v -> 0)
    return 0.0 if _nonpositive_int(v) else float(rgamma(v))


def _near_one(a, b, c, x, rtol):
    """Connection formulas around ``x = 1`` (Abramowitz-Stegun 15.3.6 / 15.3.11-12)."""
    w = 1.0 - x
    m_real = c - a - b
    if abs(m_real - round(m_real)) > 1e-12:
        t1 = math.gamma(c) * math.gamma(m_real) * _rgamma(c - a) * _rgamma(c - b)
        t2 = math.gamma(c) * math.gamma(-m_real) * _rgamma(a) * _rgamma(b)
        out = 0.0
        if t1:
            out += t1 * _series(a, b, 1 - m_real, w, rtol)
        if t2:
            out += t2 * w**m_real * _series(c - a, c - b, m_real + 1, w, rtol)
        return out
    m = int(round(m_real))
    if m < 0:
        # F(a,b;c;x) with c-a-b = -m equals (1-x)^{-m} F(c-a, c-b; c; x)
        return w ** (-m) * _near_one(c - a, c - b, c, x, rtol)
    # logarithmic case, c = a + b + m with m >= 0
    finite = 0.0
    if m > 0:
        pre = math.gamma(m) * math.gamma(c) * _rgamma(a + m) * _rgamma(b + m)
        term = 1.0
        acc = 1.0
        for k in range(1, m):
            term *= (a + k - 1) * (b + k - 1) / (k * (k - m)) * w
            acc += term
        finite = pre * acc
    pre2 = math.gamma(c) * _rgamma(a) * _rgamma(b)
    if pre2 == 0.0:
        return finite
    logw = math.log(w)
    coef = 1.0 / math.factorial(m)  # (a+m)_0 (b+m)_0 / (0! m!)
    tail = 0.0
    for k in range(_MAX_TERMS):
        bracket = logw - digamma(k + 1) - digamma(k + m + 1) + digamma(a + k + m) + digamma(b + k + m)
        piece = coef * bracket
        tail += piece
        if k > 2 and abs(piece) < rtol * max(abs(tail), 1e-300):
            break
        coef *= (a + m + k) * (b + m + k) / ((k + 1) * (k + m + 1)) * w
    else:
        raise NoConvergenceError("logarithmic continuation of 2F1 did not converge")
    return finite - pre2 * (-w) ** m * tail


def hyp2f1(a: float, b: float, c: float, x: float, rtol: float = 1e-14) -> float:
    """Gauss hypergeometric function for real ``|x| <= 1 - 1e-8``.

    Power series around 0; for ``x > 0.9`` (unless the series terminates) the
    expansion around ``x = 1`` is used instead, since the plain series needs
    an unbounded number of terms when ``c - a - b`` is small.
    """
    if _nonpositive_int(c):
        raise ValidationError(f"c must not be a nonpositive integer, got {c}")
    if abs(x) > 1 - 1e-8:
        raise ValidationError(f"|x| must be at most 1 - 1e-8, got {x}")
    terminating = _nonpositive_int(a) or _nonpositive_int(b)
    if x > _CONTINUATION_FROM and not terminating:
        return _near_one(a, b, c, x, rtol)
    return _series(a, b, c, x, rtol)


def abs_normal_moment(r: float) -> float:
    """``E|U|^r`` for standard normal ``U``: ``2^{r/2} Gamma((r+1)/2) / sqrt(pi)``."""
    if r <= -1:
        raise ValidationError("absolute moment exists only for r > -1")
    return 2 ** (r / 2) * math.gamma((r + 1) / 2) / math.sqrt(math.pi)


def bivariate_abs_moment(r: float, s: float, corr: float) -> float:
    """``E|U|^r |V|^s`` for a standard bivariate normal pair with correlation ``corr``.

    Equals ``(1/pi) 2^{(r+s)/2} Gamma((r+1)/2) Gamma((s+1)/2) 2F1(-r/2, -s/2; 1/2; corr^2)``.
    """
    if r < 0 or s < 0:
        raise ValidationError("exponents must be nonnegative")
    if abs(corr) > 1:
        raise ValidationError("correlation must lie in [-1, 1]")
    # fixed operand order makes the result exactly symmetric in (r, s)
    r, s = min(r, s), max(r, s)
    c2 = corr * corr
    if c2 > 1 - 1e-8:
        # |corr| = 1: V = +-U and the moment collapses to a single power
        return abs_normal_moment(r + s)
    prefactor = 2 ** ((r + s) / 2) * math.gamma((r + 1) / 2) * math.gamma((s + 1) / 2) / math.pi
    return prefactor * hyp2f1(-r / 2, -s / 2, 0.5, c2)
