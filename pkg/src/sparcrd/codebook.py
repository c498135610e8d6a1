"""SPARC code geometry, codeword indices and the Gaussian design matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_int, check_positive

DEFAULT_MAX_ENTRIES = 2**26


@dataclass(frozen=True)
class SparcParams:
    """Block length ``n``, ``L`` sections of ``M`` columns, exponent ``b``.

    ``M = 1`` is allowed and describes a single-codeword (rate zero) book.
    """

    n: int
    L: int
    M: int
    b: float = math.nan
    R_nominal: float = math.nan

    def __post_init__(self):
        check_int("n", self.n, 1)
        check_int("L", self.L, 1)
        check_int("M", self.M, 1)

    @classmethod
    def from_geometry(cls, n, L, M):
        b = math.log(M) / math.log(L) if L > 1 and M > 1 else math.nan
        p = cls(n=n, L=L, M=M, b=b)
        object.__setattr__(p, "R_nominal", p.R_actual)
        return p

    @property
    def R_actual(self):
        return self.L * math.log(self.M) / self.n

    @property
    def n_codewords(self):
        return self.M**self.L

    @property
    def log_n_codewords(self):
        return self.L * math.log(self.M)


@dataclass(frozen=True)
class BetaIndex:
    """Chosen column in each section; identifies one codeword."""

    sections: tuple

    def __post_init__(self):
        secs = tuple(int(s) for s in self.sections)
        if any(s < 0 for s in secs):
            raise DomainError(f"section indices must be non-negative, got {secs}")
        object.__setattr__(self, "sections", secs)

    def __len__(self):
        return len(self.sections)

    def __iter__(self):
        return iter(self.sections)

    def __getitem__(self, i):
        return self.sections[i]

    def check_geometry(self, L, M):
        if len(self.sections) != L:
            raise DomainError(f"beta has {len(self.sections)} sections, expected {L}")
        if any(s >= M for s in self.sections):
            raise DomainError(f"beta {self.sections} has an index >= M={M}")
        return self

    def to_flat(self, M):
        """Lexicographic rank (section 0 most significant)."""
        idx = 0
        for s in self.sections:
            idx = idx * M + s
        return idx

    @classmethod
    def from_flat(cls, flat, L, M):
        digits = []
        for _ in range(L):
            flat, d = divmod(int(flat), M)
            digits.append(d)
        return cls(tuple(reversed(digits)))


def flat_to_digits(flat, L, M):
    """Vectorised :meth:`BetaIndex.from_flat`; returns an ``(len(flat), L)`` array."""
    flat = np.asarray(flat, dtype=np.int64)
    out = np.empty(flat.shape + (L,), dtype=np.int64)
    rem = flat.copy()
    for ell in range(L - 1, -1, -1):
        rem, out[..., ell] = np.divmod(rem, M)
    return out


def derive_dimensions(n, R_nominal, b):
    """Pick ``L`` with ``L log L`` closest to ``n R / b`` and ``M = round(L^b)``."""
    n = check_int("n", n, 8)
    check_positive("R_nominal", R_nominal)
    if not b > 1:
        raise DomainError(f"b must exceed 1, got {b}")
    target = n * R_nominal / b
    best_L, best_gap = 2, abs(2 * math.log(2) - target)
    L = 3
    while True:
        gap = abs(L * math.log(L) - target)
        if gap < best_gap:
            best_L, best_gap = L, gap
        if L * math.log(L) > target:
            break
        L += 1
    M = max(2, round(best_L**b))
    params = SparcParams(n=n, L=best_L, M=M, b=b, R_nominal=R_nominal)
    if params.log_n_codewords < n * R_nominal / 2:
        raise DomainError(
            f"degenerate geometry: L={best_L}, M={M} gives log M^L = "
            f"{params.log_n_codewords:.4g} < nR/2 = {n * R_nominal / 2:.4g}"
        )
    return params


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """``n x ML`` matrix of i.i.d. N(0, 1) entries, regenerable column by column.

    Column ``(ell, m)`` is drawn from its own child stream of the seed, so
    it depends only on ``(seed, ell, m, n)`` and can be produced without
    materialising the rest of the matrix.
    """

    n: int
    L: int
    M: int
    seed: int
    max_entries: int = DEFAULT_MAX_ENTRIES
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self):
        return (self.n, self.M * self.L)

    def column(self, ell, m):
        if not (0 <= ell < self.L and 0 <= m < self.M):
            raise DomainError(f"column ({ell}, {m}) outside L={self.L}, M={self.M}")
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(ell, m))
        return np.random.default_rng(ss).standard_normal(self.n)

    def section(self, ell):
        """The ``n x M`` block of section ``ell`` (read-only view)."""
        return self.entries[:, ell * self.M : (ell + 1) * self.M]

    @property
    def entries(self):
        cached = self._cache.get("entries")
        if cached is None:
            size = self.n * self.M * self.L
            if size > self.max_entries:
                raise MemoryError(
                    f"design matrix needs {size} entries, above the cap of {self.max_entries}"
                )
            cached = np.empty((self.n, self.M * self.L))
            for ell in range(self.L):
                for m in range(self.M):
                    cached[:, ell * self.M + m] = self.column(ell, m)
            cached.setflags(write=False)
            self._cache["entries"] = cached
        return cached


def sample_design_matrix(params, seed, *, max_entries=DEFAULT_MAX_ENTRIES):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return DesignMatrix(params.n, params.L, params.M, seed, max_entries)


def synthesize_codeword(A, beta, coeff):
    """``coeff * sum_ell A[:, (ell, beta[ell])]``, summed in section order."""
    beta = beta if isinstance(beta, BetaIndex) else BetaIndex(beta)
    beta.check_geometry(A.L, A.M)
    X = A.entries
    acc = np.zeros(A.n)
    for ell, m in enumerate(beta):
        acc += X[:, ell * A.M + m]
    return coeff * acc
