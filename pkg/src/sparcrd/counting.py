"""Solution counts, overlap censuses and the combinatorics of the codebook."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _search
from ._validation import DEFAULT_BUDGET, DomainError, check_int, check_positive
from .codebook import BetaIndex, flat_to_digits


@dataclass(frozen=True)
class SolutionCensus:
    """Solutions of one realized ``(s_tilde, A)`` grouped by overlap with a reference.

    ``by_overlap[r]`` counts solutions sharing exactly ``r`` sections with
    ``reference_beta``. ``EX_ref`` stands in for the unknown ``E X`` and
    ``EX_source`` records where it came from (``"theory"``, ``"monte_carlo"``,
    ``"user"``).
    """

    X: int
    by_overlap: dict
    reference_beta: BetaIndex
    EX_ref: float
    EX_source: str = "user"
    L: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "L", len(self.reference_beta))
        if any(c < 0 for c in self.by_overlap.values()):
            raise DomainError("overlap counts must be non-negative")

    @property
    def reference_is_solution(self):
        return self.by_overlap.get(self.L, 0) >= 1

    def to_dict(self):
        return {
            "X": self.X,
            "by_overlap": {str(r): c for r, c in sorted(self.by_overlap.items())},
            "reference_beta": list(self.reference_beta.sections),
            "EX_ref": self.EX_ref,
            "EX_source": self.EX_source,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def bucket_csv(self, M):
        """Rows ``r, alpha, count, census, ratio_to_EXref`` for ``r = 0..L``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "alpha", "count", "census", "ratio_to_EXref"])
        for r in range(self.L + 1):
            count = self.by_overlap.get(r, 0)
            w.writerow([r, repr(r / self.L), count, overlap_census(self.L, M, r),
                        repr(count / self.EX_ref)])
        return buf.getvalue()


def count_solutions(s_tilde, A, D, coeff, *, budget=DEFAULT_BUDGET):
    """Number of codewords with ``|s_tilde - A beta|^2 <= D``."""
    s_tilde = np.asarray(s_tilde, dtype=float)
    return int(sum(len(b) for b in _search.solution_blocks(s_tilde, A, coeff, D, budget=budget)))


def solution_mask(s_tilde, A, D, coeff, *, budget=DEFAULT_BUDGET):
    """Boolean array over lex-ordered codewords marking solutions."""
    mask = np.zeros(A.M**A.L, dtype=bool)
    s_tilde = np.asarray(s_tilde, dtype=float)
    for b in _search.solution_blocks(s_tilde, A, coeff, D, budget=budget):
        mask[b] = True
    return mask


def overlap(beta1, beta2):
    """Number of sections in which the two codewords pick the same column."""
    b1, b2 = tuple(beta1), tuple(beta2)
    if len(b1) != len(b2):
        raise DomainError(f"geometry mismatch: {len(b1)} vs {len(b2)} sections")
    return sum(1 for u, v in zip(b1, b2) if u == v)


def count_overlap_solutions(s_tilde, A, D, coeff, beta_ref, *, budget=DEFAULT_BUDGET):
    """Map ``r -> X_{r/L}(beta_ref)`` over ``r = 0..L``."""
    ref = (beta_ref if isinstance(beta_ref, BetaIndex) else BetaIndex(beta_ref))
    ref = np.asarray(ref.check_geometry(A.L, A.M).sections)
    counts = np.zeros(A.L + 1, dtype=np.int64)
    s_tilde = np.asarray(s_tilde, dtype=float)
    for b in _search.solution_blocks(s_tilde, A, coeff, D, budget=budget):
        if len(b):
            r = (flat_to_digits(b, A.L, A.M) == ref).sum(axis=1)
            counts += np.bincount(r, minlength=A.L + 1)
    return {r: int(c) for r, c in enumerate(counts)}


def solution_census(s_tilde, A, D, coeff, beta_ref, EX_ref, *, EX_source="user",
                    budget=DEFAULT_BUDGET):
    buckets = count_overlap_solutions(s_tilde, A, D, coeff, beta_ref, budget=budget)
    ref = beta_ref if isinstance(beta_ref, BetaIndex) else BetaIndex(beta_ref)
    return SolutionCensus(sum(buckets.values()), buckets, ref, float(EX_ref), EX_source)


def overlap_census(L, M, r):
    """Codewords sharing exactly ``r`` sections with a fixed one: ``C(L,r)(M-1)^(L-r)``."""
    L = check_int("L", L, 1)
    M = check_int("M", M, 1)
    r = check_int("r", r, 0)
    if r > L:
        raise DomainError(f"r={r} exceeds L={L}")
    return math.comb(L, r) * (M - 1) ** (L - r)


def dependency_degree(L, M):
    """Neighbours of a codeword in the dependency graph: ``M^L - 1 - (M-1)^L``."""
    L = check_int("L", L, 1)
    M = check_int("M", M, 2)
    return M**L - 1 - (M - 1) ** L


def dependency_degree_sum(L, M):
    """Same quantity as :func:`dependency_degree`, summed over partial overlaps."""
    return sum(overlap_census(L, M, r) for r in range(1, L))


def is_eps_good(census, eps):
    """True when solutions overlapping the reference number fewer than ``eps * EX_ref``.

    The sum runs over ``r = 1..L`` and so includes the reference itself.
    """
    if not census.reference_is_solution:
        raise DomainError("reference beta is not a solution; eps-goodness is undefined")
    if not census.EX_ref > 0:
        raise DomainError(f"EX_ref must be positive, got {census.EX_ref}")
    overlapping = sum(census.by_overlap.get(r, 0) for r in range(1, census.L + 1))
    return overlapping < eps * census.EX_ref


def expected_solutions_bounds(point, n, kappa=1.0):
    """Log-domain upper and lower bounds on ``E X`` for a rate-``R`` code of length ``n``.

    The lower bound carries the caller's ``kappa`` since its true value is
    not known in closed form.
    """
    check_positive("n", n)
    check_positive("kappa", kappa)
    upper = n * point.rate_margin
    lower = upper - 0.5 * math.log(n) + math.log(kappa)
    return upper, lower, kappa


def partial_codeword_holds(s_tilde, A, coeff, beta, alpha, D_alpha):
    """Whether every ``alpha L``-section restriction of ``beta`` stays at least ``D_alpha`` away.

    Exhaustive over subsets, so limited to ``L <= 12``.
    """
    if A.L > 12:
        raise DomainError(f"subset check is exhaustive and limited to L <= 12, got L={A.L}")
    beta = (beta if isinstance(beta, BetaIndex) else BetaIndex(beta)).check_geometry(A.L, A.M)
    k = round(float(alpha) * A.L)
    if not (1 <= k <= A.L) or abs(k - float(alpha) * A.L) > 1e-9:
        raise DomainError(f"alpha={alpha} is not a multiple of 1/L with L={A.L}")
    X = A.entries
    s_tilde = np.asarray(s_tilde, dtype=float)
    for subset in combinations(range(A.L), k):
        acc = np.zeros(A.n)
        for ell in subset:
            acc += X[:, ell * A.M + beta[ell]]
        if _search.sqnorm(s_tilde - coeff * acc) < D_alpha:
            return False
    return True
