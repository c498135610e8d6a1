"""Closed-form rate-distortion and error-exponent quantities for SPARC compression.

All rates are in nats. Every function here is pure; exponentially large
quantities are handled in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from ._validation import (
    ConvergenceError,
    DomainError,
    check_alpha,
    check_int,
    check_nonnegative,
    check_positive,
)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class TheoryPoint:
    """Scalar problem parameters shared by the closed-form operations.

    Parameters
    ----------
    sigma2 : float
        Source variance.
    D : float
        Target distortion, ``0 < D < sigma2``.
    R : float
        Rate in nats per sample.
    rho2 : float
        Squared norm of the quantized source, ``rho2 > D``.
    gamma2 : float
        Norm cutoff above which the encoder gives up, ``gamma2 > sigma2``.
    """

    sigma2: float
    D: float
    R: float
    rho2: float
    gamma2: float

    def __post_init__(self):
        check_positive("D", self.D)
        check_positive("sigma2", self.sigma2)
        check_nonnegative("R", self.R)
        check_positive("rho2", self.rho2)
        check_positive("gamma2", self.gamma2)
        if self.sigma2 <= self.D:
            raise DomainError(f"need sigma2 > D, got sigma2={self.sigma2}, D={self.D}")
        if self.rho2 <= self.D:
            raise DomainError(f"need rho2 > D, got rho2={self.rho2}, D={self.D}")
        if self.gamma2 <= self.sigma2:
            raise DomainError(
                f"need gamma2 > sigma2, got gamma2={self.gamma2}, sigma2={self.sigma2}"
            )

    @property
    def a2(self):
        return self.D * math.exp(2.0 * self.R)

    @property
    def rate_margin(self):
        """``R - 0.5 log(rho2/D)``; positive when a rate-R code at power rho2 is feasible."""
        return self.R - 0.5 * math.log(self.rho2 / self.D)

    def require_rate_above_threshold(self):
        if self.rate_margin <= 0:
            raise DomainError(
                f"need R > 0.5*log(rho2/D) = {0.5 * math.log(self.rho2 / self.D):.6g}, "
                f"got R={self.R}"
            )


@dataclass(frozen=True)
class StylizedParams:
    """Two-type random structure: ``e^n`` solutions w.p. ``1-e^{-np}``, else ``e^{2n}``.

    ``log_N`` is the log of the total configuration count; it must be at
    least ``2n`` so both solution counts fit.
    """

    n: float
    p: float
    log_N: float | None = None

    def __post_init__(self):
        check_positive("n", self.n)
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        check_positive("p", self.p)
        if self.log_N is None:
            object.__setattr__(self, "log_N", 2.0 * self.n)
        elif self.log_N < 2.0 * self.n:
            raise DomainError(f"need N >= e^(2n), got log N={self.log_N} < {2 * self.n}")


# ---------------------------------------------------------------------------
# Rate function f(x, y, z) and its Chernoff oracle
# ---------------------------------------------------------------------------


def rate_fn_f(x, y, z):
    """Exponent of P(|s - c|^2 <= z) for |s|^2 = x and c i.i.d. N(0, y).

    Returns 0 when ``z > x + y`` (the event is typical). The expression
    is evaluated in a rearranged form that avoids the cancellation of the
    textbook version near its zero set; both are algebraically equal.
    """
    for name, v in (("x", x), ("y", y), ("z", z)):
        check_positive(name, v)
    if z > x + y:
        return 0.0
    s = math.sqrt(y * y + 4.0 * x * z)
    # (x+z)/(2y) - xz/(Ay) - A/(4y) == (x+z-s)/(2y), with
    # x+z-s = ((x-z)^2 - y^2)/(x+z+s) and A/(2x) = 2z/(s+y).
    poly = (x - z - y) * (x - z + y) / (2.0 * y * (x + z + s))
    val = poly + 0.5 * math.log((s + y) / (2.0 * z))
    return max(val, 0.0)


def _chernoff_objective(t, x, y, z):
    # lambda = -t <= 0; log E exp(lambda W) for W = (sqrt(x) + sqrt(y) G)^2
    w = 1.0 + 2.0 * t * y
    return -t * z + t * x / w + 0.5 * math.log(w)


def _chernoff_slope(t, x, y, z):
    w = 1.0 + 2.0 * t * y
    return -z + x / (w * w) + y / w


def rate_fn_f_oracle(x, y, z, *, tol=1e-13, max_doublings=200):
    """Lower-tail Chernoff exponent of ``(sqrt(x) + sqrt(y) G)^2`` at level ``z``.

    Computed by bounded 1-D maximisation over the tilt parameter, with no
    use of the closed form. Serves as an independent check of
    :func:`rate_fn_f`.
    """
    for name, v in (("x", x), ("y", y), ("z", z)):
        check_positive(name, v)
    if _chernoff_slope(0.0, x, y, z) <= 0.0:
        return 0.0
    hi = 1.0
    for _ in range(max_doublings):
        if _chernoff_slope(hi, x, y, z) < 0.0:
            break
        hi *= 2.0
    else:
        raise ConvergenceError(
            f"could not bracket the Chernoff optimum: bracket=[0, {hi}], "
            f"slope(hi)={_chernoff_slope(hi, x, y, z)}"
        )
    res = minimize_scalar(
        lambda t: -_chernoff_objective(t, x, y, z),
        bounds=(0.0, hi),
        method="bounded",
        options={"xatol": tol * max(hi, 1.0), "maxiter": 2000},
    )
    if not res.success:
        raise ConvergenceError(f"Chernoff maximisation failed on bracket [0, {hi}]: {res.message}")
    return max(-res.fun, 0.0)


# ---------------------------------------------------------------------------
# Shannon rates and the critical distortion ratio
# ---------------------------------------------------------------------------


def shannon_rates(sigma2, D):
    """Return ``(Rstar, R0)``: the Gaussian R(D) and the earlier achievable rate."""
    check_positive("sigma2", sigma2)
    check_positive("D", D)
    if not D < sigma2:
        raise DomainError(f"need 0 < D < sigma2, got D={D}, sigma2={sigma2}")
    r_star = 0.5 * math.log(sigma2 / D)
    r0 = max(r_star, 1.0 - D / sigma2)
    return r_star, r0


def _bisect(fn, lo, hi, *, xtol, max_iter=400):
    """Bisection for a sign change of ``fn`` on ``[lo, hi]``."""
    f_lo, f_hi = fn(lo), fn(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise ConvergenceError(
            f"no sign change on bracket [{lo!r}, {hi!r}]: f(lo)={f_lo!r}, f(hi)={f_hi!r}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= xtol:
            break
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_ratio():
    """Root in (0, 1) of ``(1 - x) + 0.5 log x = 0`` (about 0.203).

    Below this distortion-to-variance ratio the two rates of
    :func:`shannon_rates` coincide.
    """
    # The other root is x = 1; the function peaks at x = 1/2.
    return _bisect(lambda x: (1.0 - x) + 0.5 * math.log(x), 1e-6, 0.5, xtol=1e-16)


# ---------------------------------------------------------------------------
# Overlap analysis of the direct second moment
# ---------------------------------------------------------------------------


def alpha_grid(L):
    """Exact overlap fractions ``1/L, ..., L/L``."""
    L = check_int("L", L, 1)
    return [Fraction(r, L) for r in range(1, L + 1)]


def h_alpha(alpha, point):
    """Second-moment exponent gap; negative values signal a failing direct MoM."""
    a = check_alpha(alpha)
    ratio = point.D / point.rho2
    denom = 1.0 - a * (1.0 - 2.0 * ratio)
    if denom <= 0:
        raise DomainError(f"log argument nonpositive at alpha={alpha}")
    return a * point.R - 0.5 * (math.log1p(a) - math.log(denom))


def delta_alpha_bound(alpha, point, L, b, kappa=1.0):
    """Upper bound on the overlap exponent with caller-supplied ``kappa``.

    ``L`` may be any real > 1 and ``b`` may be ``math.inf``.
    """
    a = check_alpha(alpha)
    check_nonnegative("kappa", kappa)
    check_positive("L", L)
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    log_l = math.log(L)
    clause = min(a, 1.0 - a, LOG2 / log_l if log_l > 0 else math.inf)
    rate_term = 0.0 if math.isinf(b) else (point.R / b) * clause
    return kappa / L + rate_term - h_alpha(alpha, point)


def g_alpha(alpha, point):
    """``R alpha - 0.5 log(rho2 / (rho2 (1-alpha) + D alpha))``; concave, zero at 0."""
    a = check_alpha(alpha, allow_zero=True)
    t = point.D / point.rho2
    return a * point.R + 0.5 * math.log1p(-a * (1.0 - t))


def solve_D_alpha(alpha, point, *, tol=1e-10):
    """Distortion reachable by ``alpha L`` sections alone.

    Solves ``R alpha = f(rho2, (rho2 - D) alpha, D_alpha)`` by bisection,
    using that ``f`` is strictly decreasing in its last argument and that
    the root lies below ``rho2 (1 - alpha) + D alpha``.
    """
    point.require_rate_above_threshold()
    a = check_alpha(alpha)
    rho2, D = point.rho2, point.D
    y = (rho2 - D) * a
    target = point.R * a
    upper = rho2 * (1.0 - a) + D * a

    def resid(z):
        return rate_fn_f(rho2, y, z) - target

    lo = upper * 1e-300
    if resid(upper) >= 0 or resid(lo) <= 0:
        raise ConvergenceError(
            f"internal error: D_alpha not bracketed by (0, {upper}) at alpha={alpha}: "
            f"resid(lo)={resid(lo)}, resid(hi)={resid(upper)}"
        )
    # Bisect in log(z): the root can be many decades below the upper end.
    log_root = _bisect(
        lambda lz: resid(math.exp(lz)), math.log(lo), math.log(upper), xtol=1e-17
    )
    root = math.exp(log_root)
    if abs(resid(root)) >= tol:
        # Finish on the linear scale where the log grid is too coarse.
        root = _bisect(resid, root * (1 - 1e-9), min(root * (1 + 1e-9), upper), xtol=0.0)
    if abs(resid(root)) >= tol:
        raise ConvergenceError(
            f"D_alpha residual {resid(root):.3g} above {tol} at alpha={alpha}"
        )
    return root


def _lambda_prefactor(t):
    return 0.125 * t**4 * (1.0 + t) ** 2 * (1.0 - t)


def _sqrt_bracket(c, inner):
    # -1 + sqrt(1 + c*inner), written without cancellation
    u = c * inner
    return u / (1.0 + math.sqrt(1.0 + u))


def lambda_alpha(alpha, point):
    """Exponent constant governing atypical overlaps; ``alpha = 0`` gives the limit."""
    point.require_rate_above_threshold()
    a = check_alpha(alpha, allow_zero=True)
    t = point.D / point.rho2
    x = 1.0 / t
    c = 2.0 * math.sqrt(x) / (x - 1.0)
    if a == 0.0:
        inner = point.R - 0.5 * (1.0 - t)
    else:
        inner = point.R + math.log1p(-a * (1.0 - t)) / (2.0 * a)
    return _lambda_prefactor(t) * _sqrt_bracket(c, inner) ** 2


def b_min(x, R):
    """Smallest section exponent ``b`` for which the good-solution argument goes through."""
    check_positive("R", R)
    check_positive("x", x)
    if not (1.0 < x <= math.exp(2.0 * R)):
        raise DomainError(f"b_min needs 1 < x <= e^(2R) = {math.exp(2 * R):.6g}, got x={x}")
    inv = 1.0 / x
    c = 2.0 * math.sqrt(x) / (x - 1.0)
    bracket = _sqrt_bracket(c, R - 0.5 * (1.0 - inv))
    return 20.0 * R * x**4 / ((1.0 + inv) ** 2 * (1.0 - inv) * bracket**2)


def c1_const(point):
    """Lower bound on the overlap gap when ``D_alpha <= D``."""
    point.require_rate_above_threshold()
    rho2, D, R = point.rho2, point.D, point.R
    q = 2.0 * rho2 * point.rate_margin / (rho2 - D)
    root_minus_r = q / (math.sqrt(R * R + q) + R)
    return (rho2 - D) / (24.0 * rho2) * root_minus_r**2


def eta_xi(L, b, x, R, mode="eta"):
    """Failure probability bounds ``L^{-2.5(b/b_min - 1)}`` (eta) or ``- 7/5`` (xi)."""
    check_positive("L", L)
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L}")
    check_positive("b", b)
    offset = {"eta": 1.0, "xi": 1.4}.get(mode)
    if offset is None:
        raise DomainError(f"mode must be 'eta' or 'xi', got {mode!r}")
    return L ** (-2.5 * (b / b_min(x, R) - offset))


# ---------------------------------------------------------------------------
# Error exponents
# ---------------------------------------------------------------------------


def gaussian_ld_rate(sigma2, t):
    """Cramér rate of ``|S|^2 >= t`` for i.i.d. N(0, sigma2) samples."""
    check_positive("sigma2", sigma2)
    check_positive("t", t)
    if t <= sigma2:
        raise DomainError(f"need t > sigma2, got t={t}, sigma2={sigma2}")
    u = t / sigma2
    return 0.5 * (u - 1.0 - math.log(u))


def opt_error_exponent(sigma2, D, R):
    """Optimal excess-distortion exponent of the i.i.d. Gaussian source."""
    check_positive("sigma2", sigma2)
    check_positive("D", D)
    check_nonnegative("R", R)
    if R <= 0.5 * math.log(sigma2 / D):
        return 0.0
    u = D * math.exp(2.0 * R) / sigma2
    return 0.5 * (u - 1.0 - math.log(u))


# ---------------------------------------------------------------------------
# Suen's inequality
# ---------------------------------------------------------------------------


def suen_bound(lam, delta, Delta):
    """``exp(-min(lam/2, lam/(6 delta), lam^2/(8 Delta)))``."""
    check_nonnegative("lambda", lam)
    check_positive("delta", delta)
    check_positive("Delta", Delta)
    return math.exp(-min(lam / 2.0, lam / (6.0 * delta), lam * lam / (8.0 * Delta)))


def _lambda_over_delta(L, M):
    if L * math.log2(M) <= 4096:
        total = M**L
        degree = total - 1 - (M - 1) ** L
        if degree == 0:
            return math.inf
        return float(Fraction(total, degree))
    # 1 - M^-L - (1 - 1/M)^L without forming M^L
    frac = -math.expm1(L * math.log1p(-1.0 / M)) - math.exp(-L * math.log(M))
    return math.inf if frac <= 0 else 1.0 / frac


def suen_sparc_terms(L, b, xi_val, M=None):
    """Return ``(lambda/delta, lower bound on lambda^2/(8 Delta))`` for a SPARC.

    ``M`` defaults to ``round(L**b)``; pass it to force a specific section size.
    """
    L = check_int("L", L, 2)
    if M is None:
        if not b > 1:
            raise DomainError(f"b must exceed 1, got {b}")
        M = max(2, round(L**b))
    M = check_int("M", M, 2)
    if not 0.0 <= xi_val < 1.0:
        raise DomainError(f"xi must lie in [0, 1), got {xi_val}")
    return _lambda_over_delta(L, M), (1.0 - xi_val) ** 2 * L**1.5 / 4.0


# ---------------------------------------------------------------------------
# Stylized two-type example
# ---------------------------------------------------------------------------


def _log1mexp(a):
    """log(1 - e^{-a}) for a > 0."""
    return math.log(-math.expm1(-a)) if a < LOG2 else math.log1p(-math.exp(-a))


def _stylized_logs(params):
    n, p = params.n, params.p
    l1 = _log1mexp(n * p)
    log_num = np.logaddexp(l1 + 2.0 * n, n * (4.0 - p))
    log_den_root = np.logaddexp(l1 + n, n * (2.0 - p))
    return float(log_num), float(log_den_root)


def stylized_log_ratio(params):
    """log of ``E[X | U_1 = 1] / E X`` for the stylized model."""
    log_num, log_den_root = _stylized_logs(params)
    return log_num - 2.0 * log_den_root


def stylized_log_excess(params):
    """log of ``E[X | U_1 = 1] / E X - 1``.

    Uses the exact identity ``ratio - 1 = u(1-u) e^{2n} (e^n - 1)^2 / den``
    with ``u = e^{-np}``, which stays accurate when the ratio is 1 to
    within machine precision.
    """
    n, p = params.n, params.p
    _, log_den_root = _stylized_logs(params)
    log_em1 = math.log(math.expm1(n))
    return -n * p + _log1mexp(n * p) + 2.0 * n + 2.0 * log_em1 - 2.0 * log_den_root


def stylized_ratio(params):
    """``E[X | U_1 = 1] / E X``; always at least 1."""
    log_excess = stylized_log_excess(params)
    if log_excess < 0:
        return 1.0 + math.exp(log_excess)
    return math.exp(stylized_log_ratio(params))


def stylized_cond_dist(params):
    """``(P(X = e^n | U_1 = 1), P(X = e^{2n} | U_1 = 1))``."""
    n, p = params.n, params.p
    # logit of the type-2 posterior
    t = n * (1.0 - p) - _log1mexp(n * p)
    return float(expit(-t)), float(expit(t))


def stylized_regime(p):
    """Classify the stylized example: 1 (direct MoM works), 2 (fixable), 3 (condensation)."""
    check_positive("p", p)
    if p >= 2:
        return 1
    if p > 1:
        return 2
    return 3
