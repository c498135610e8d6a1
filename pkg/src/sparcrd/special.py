"""Regularized upper incomplete gamma in the log domain, and chi-square tails.

scipy's ``gammaincc`` underflows to zero below about 1e-308; the large
deviation checks need tails near ``e^{-700}`` and beyond, so the log of
the tail is computed directly.
"""

import math

from ._validation import ConvergenceError, DomainError, check_nonnegative

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 100_000


def _log_lower_series(a, x):
    """log P(a, x) by the power series; converges fast for ``x < a + 1``."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma series did not converge at a={a}, x={x}")
    return math.log(total) - x + a * math.log(x) - math.lgamma(a)


def _log_upper_cf(a, x):
    """log Q(a, x) by the modified Lentz continued fraction; for ``x >= a + 1``."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ConvergenceError(f"incomplete gamma continued fraction failed at a={a}, x={x}")
    return math.log(h) - x + a * math.log(x) - math.lgamma(a)


def log_gammaincc(a, x):
    """log of the regularized upper incomplete gamma ``Q(a, x)``."""
    if not a > 0:
        raise DomainError(f"shape must be positive, got {a}")
    check_nonnegative("x", x)
    if x == 0:
        return 0.0
    if x < a + 1.0:
        log_p = _log_lower_series(a, x)
        return math.log1p(-math.exp(log_p)) if log_p < -1e-300 else -math.inf
    return _log_upper_cf(a, x)


def chi2_log_upper_tail(dof, threshold):
    """``log P(chi2_dof >= threshold)``; finite far below the double underflow limit."""
    if isinstance(dof, bool) or int(dof) != dof or dof < 1:
        raise DomainError(f"dof must be a positive integer, got {dof}")
    check_nonnegative("threshold", threshold)
    return log_gammaincc(dof / 2.0, threshold / 2.0)


def chi2_upper_tail(dof, threshold):
    """``P(chi2_dof >= threshold)``; returns 0.0 on underflow (use the log form then)."""
    return math.exp(chi2_log_upper_tail(dof, threshold))
