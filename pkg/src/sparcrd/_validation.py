"""Exceptions and argument checks shared across the package."""

import math
from numbers import Real

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class BudgetError(RuntimeError):
    """The requested codebook is too large to enumerate exhaustively."""


class ConvergenceError(RuntimeError):
    """A numerical solver failed to bracket or reach its tolerance."""


DEFAULT_BUDGET = 2**24


def check_positive(name, value):
    if not isinstance(value, Real) or not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")
    return value


def check_nonnegative(name, value):
    if not isinstance(value, Real) or not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be a finite non-negative number, got {value!r}")
    return value


def check_alpha(alpha, *, allow_zero=False):
    """Validate an overlap fraction and return it as a float."""
    a = float(alpha)
    lo_ok = a >= 0 if allow_zero else a > 0
    if not (lo_ok and a <= 1):
        interval = "[0, 1]" if allow_zero else "(0, 1]"
        raise DomainError(f"alpha must lie in {interval}, got {alpha!r}")
    return a


def check_int(name, value, minimum):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_budget(n_codewords, budget):
    if n_codewords > budget:
        raise BudgetError(
            f"codebook has {n_codewords} codewords, above the enumeration budget "
            f"of {budget}; use a smaller L or M (or raise the budget)"
        )
