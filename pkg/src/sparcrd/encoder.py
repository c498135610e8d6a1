"""Minimum-distance SPARC encoder and decoder with norm quantization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _search
from ._validation import DEFAULT_BUDGET, DomainError, check_int, check_positive
from .codebook import BetaIndex, DesignMatrix, sample_design_matrix, synthesize_codeword

NORM_OVERFLOW = "norm_overflow"
TRIVIAL_ZERO = "trivial_zero"
CODED = "coded"
STATUSES = (NORM_OVERFLOW, TRIVIAL_ZERO, CODED)


@dataclass(frozen=True)
class EncodeOutcome:
    """Result of encoding one source block.

    Only ``coded`` outcomes carry a quantizer cell, a codeword and its
    coefficient; ``norm_overflow`` outcomes carry nothing decodable.
    """

    status: str
    q_index: int | None = None
    beta_hat: BetaIndex | None = None
    coeff: float | None = None
    distortion_tilde: float | None = None
    distortion_total: float | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise DomainError(f"unknown status {self.status!r}")

    def to_dict(self):
        d = asdict(self)
        d["beta_hat"] = list(self.beta_hat.sections) if self.beta_hat is not None else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("beta_hat") is not None:
            d["beta_hat"] = BetaIndex(tuple(d["beta_hat"]))
        return cls(**d)


def scalar_quantize(x, D, gamma2, n):
    """Uniform ``n``-level quantizer on ``(D, gamma2]`` with right-closed cells.

    Returns the cell index ``i`` in ``1..n`` and its midpoint.
    """
    n = check_int("n", n, 1)
    check_positive("D", D)
    if not gamma2 > D:
        raise DomainError(f"need gamma2 > D, got gamma2={gamma2}, D={D}")
    if not D < x <= gamma2:
        raise DomainError(f"quantizer input {x} outside ({D}, {gamma2}]")
    step = (gamma2 - D) / n
    i = min(max(math.ceil((x - D) / step), 1), n)
    # guard the right-closed boundaries against rounding in the division
    if i > 1 and x <= D + step * (i - 1):
        i -= 1
    elif i < n and x > D + step * i:
        i += 1
    return i, quantizer_level(i, D, gamma2, n)


def quantizer_level(i, D, gamma2, n):
    return D + (gamma2 - D) * (i - 0.5) / n


def codeword_coefficient(q_index, D, gamma2, n, L):
    """Non-zero value of beta for quantizer cell ``q_index``."""
    return math.sqrt((quantizer_level(q_index, D, gamma2, n) - D) / L)


def _as_design(A, params):
    if isinstance(A, DesignMatrix):
        if (A.n, A.L, A.M) != (params.n, params.L, params.M):
            raise DomainError(
                f"design matrix geometry {(A.n, A.L, A.M)} does not match "
                f"params {(params.n, params.L, params.M)}"
            )
        return A
    return sample_design_matrix(params, A)


def min_distance_search(s_tilde, A, coeff, *, budget=DEFAULT_BUDGET):
    """Exhaustive argmin of ``|s_tilde - A beta|^2`` over the codebook.

    Ties go to the lexicographically smallest index.
    """
    s_tilde = np.asarray(s_tilde, dtype=float)
    if s_tilde.shape != (A.n,):
        raise DomainError(f"source block has shape {s_tilde.shape}, expected ({A.n},)")
    flat, d2 = _search.argmin_codeword(s_tilde, A, coeff, budget=budget)
    return BetaIndex.from_flat(flat, A.L, A.M), d2


def encode(S, A, params, D, gamma2, *, budget=DEFAULT_BUDGET):
    """Encode one block ``S`` of length ``params.n``.

    ``A`` is a :class:`DesignMatrix` or a seed from which one is drawn.
    """
    return _encode(S, A, params, D, gamma2, budget=budget)[0]


def _encode(S, A, params, D, gamma2, *, budget=DEFAULT_BUDGET):
    """:func:`encode` that also returns the quantized block and the reconstruction."""
    S = np.asarray(S, dtype=float)
    if S.shape != (params.n,):
        raise DomainError(f"source block has shape {S.shape}, expected ({params.n},)")
    if not np.all(np.isfinite(S)):
        raise DomainError("source block contains non-finite values")
    check_positive("D", D)
    if not gamma2 > D:
        raise DomainError(f"need gamma2 > D, got gamma2={gamma2}, D={D}")
    norm2 = _search.sqnorm(S)
    if norm2 >= gamma2:
        return EncodeOutcome(NORM_OVERFLOW), None, None
    if norm2 <= D:
        zero = np.zeros(params.n)
        return EncodeOutcome(TRIVIAL_ZERO, distortion_total=norm2), zero, zero
    A = _as_design(A, params)
    q_index, level = scalar_quantize(norm2, D, gamma2, params.n)
    s_tilde = math.sqrt(level / norm2) * S
    coeff = codeword_coefficient(q_index, D, gamma2, params.n, params.L)
    beta_hat, d2 = min_distance_search(s_tilde, A, coeff, budget=budget)
    s_hat = synthesize_codeword(A, beta_hat, coeff)
    outcome = EncodeOutcome(
        CODED,
        q_index=q_index,
        beta_hat=beta_hat,
        coeff=coeff,
        distortion_tilde=d2,
        distortion_total=_search.sqnorm(S - s_hat),
    )
    return outcome, s_tilde, s_hat


def decode(outcome, A, params, D, gamma2):
    """Reconstruction for a ``trivial_zero`` or ``coded`` outcome."""
    if outcome.status == NORM_OVERFLOW:
        raise DomainError("norm_overflow outcomes carry no codeword and cannot be decoded")
    if outcome.status == TRIVIAL_ZERO:
        return np.zeros(params.n)
    A = _as_design(A, params)
    coeff = codeword_coefficient(outcome.q_index, D, gamma2, params.n, params.L)
    return synthesize_codeword(A, outcome.beta_hat, coeff)


def payload_bits(outcome, params):
    """Fixed-width bit counts: quantizer cell plus one index per section."""
    if outcome.status != CODED:
        return {"q_index": 0, "beta": 0, "total": 0}
    q_bits = math.ceil(math.log2(params.n)) if params.n > 1 else 0
    beta_bits = params.L * (math.ceil(math.log2(params.M)) if params.M > 1 else 0)
    return {"q_index": q_bits, "beta": beta_bits, "total": q_bits + beta_bits}


def quantization_constants(D, gamma2):
    """``(kappa1, kappa2)`` with ``|S - S~|^2 <= kappa1/n^2`` and ``2|S - S~| <= kappa2/n``.

    Follows from a cell half-width of ``(gamma2 - D)/(2n)`` and both norms
    exceeding ``D``.
    """
    half = (gamma2 - D) / (4.0 * math.sqrt(D))
    return half * half, 2.0 * half


def distortion_chain(S, s_tilde, s_hat, D, gamma2):
    """Evaluate each link of the triangle-inequality bound on the total distortion.

    Returns the terms and a flag per inequality; ``ok`` is their conjunction.
    """
    S, s_tilde, s_hat = (np.asarray(v, dtype=float) for v in (S, s_tilde, s_hat))
    n = S.shape[0]
    kappa1, kappa2 = quantization_constants(D, gamma2)
    total = _search.sqnorm(S - s_hat)
    quant = math.sqrt(_search.sqnorm(S - s_tilde))
    resid = math.sqrt(_search.sqnorm(s_tilde - s_hat))
    expanded = quant**2 + 2.0 * quant * resid + resid**2
    bound = kappa1 / n**2 + kappa2 * resid / n + resid**2
    rel = 1e-12 * (1.0 + total)
    checks = {
        "triangle": total <= expanded + rel,
        "quant_sq": quant**2 <= kappa1 / n**2 + rel,
        "quant_lin": 2.0 * quant <= kappa2 / n + rel,
        "bound": total <= bound + rel,
    }
    return {
        "total": total,
        "quant": quant,
        "resid": resid,
        "expanded": expanded,
        "bound": bound,
        **checks,
        "ok": all(checks.values()),
    }


def distortion_slack(n, D, gamma2):
    """Excess over ``D`` permitted when the quantized block is matched within ``D``."""
    kappa1, kappa2 = quantization_constants(D, gamma2)
    return kappa1 / n**2 + kappa2 * math.sqrt(D) / n
