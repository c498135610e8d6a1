"""Exhaustive enumeration of a SPARC codebook.

Codewords are visited in lexicographic order of their section indices.
The sections are split into a prefix half and a suffix half; the partial
sums of each half are tabulated once, and all pairwise distances are then
obtained from one matrix product per block, which makes the scan
``O(M^L n)`` with BLAS doing the inner loop.

Distances from the expansion can differ from the direct ``|s - Ab|^2`` in
the last few bits. Wherever a decision depends on them (the argmin, the
``<= D`` test) the borderline codewords are re-evaluated with
:func:`codeword_distance`, so results match a naive enumeration.
"""

import numpy as np

from ._validation import check_budget
from .codebook import flat_to_digits

BLOCK_ELEMS = 2**21


def sqnorm(v):
    """Normalised squared norm ``|v|^2 = ||v||^2 / n``."""
    v = np.ascontiguousarray(v, dtype=float)
    return float(v @ v) / v.shape[0]


def codeword_distance(s, A, coeff, flat):
    """Direct ``|s - A beta|^2`` for the codeword with lexicographic rank ``flat``."""
    X = A.entries
    digits = flat_to_digits(np.array([flat]), A.L, A.M)[0]
    acc = np.zeros(A.n)
    for ell, m in enumerate(digits):
        acc += X[:, ell * A.M + m]
    return sqnorm(s - coeff * acc)


def _partial_sums(A, sections):
    X = A.entries
    P = np.zeros((A.n, 1))
    for ell in sections:
        sec = X[:, ell * A.M : (ell + 1) * A.M]
        P = (P[:, :, None] + sec[:, None, :]).reshape(A.n, -1)
    return P


def _tolerance(s, A, coeff):
    X = A.entries
    col_power = float(np.max(np.mean(X * X, axis=0))) if X.size else 0.0
    scale = sqnorm(s) + coeff * coeff * A.L * A.L * col_power + 1.0
    return 1e-11 * A.n * scale


def scan_distances(s, A, coeff, *, budget):
    """Yield ``(start, d2)`` blocks covering the whole codebook in lex order."""
    check_budget(A.M**A.L, budget)
    s = np.asarray(s, dtype=float)
    n = A.n
    half = A.L // 2
    P = _partial_sums(A, range(half))
    Q = _partial_sums(A, range(half, A.L))
    n_suffix = Q.shape[1]
    q_norm = coeff * coeff * np.einsum("ij,ij->j", Q, Q)
    rows_per_block = max(1, BLOCK_ELEMS // max(n_suffix, 1))
    for i0 in range(0, P.shape[1], rows_per_block):
        i1 = min(i0 + rows_per_block, P.shape[1])
        resid = s[:, None] - coeff * P[:, i0:i1]
        r_norm = np.einsum("ij,ij->j", resid, resid)
        cross = resid.T @ Q
        d2 = (r_norm[:, None] - 2.0 * coeff * cross + q_norm[None, :]) / n
        yield i0 * n_suffix, d2.ravel()


def argmin_codeword(s, A, coeff, *, budget):
    """Exact minimiser (lex-smallest on ties) and its direct distance."""
    if coeff == 0:
        check_budget(A.M**A.L, budget)
        return 0, sqnorm(s)
    tol = _tolerance(s, A, coeff)
    best = np.inf
    cand_flat, cand_val = [], []
    for start, d2 in scan_distances(s, A, coeff, budget=budget):
        block_min = float(d2.min())
        best = min(best, block_min)
        keep = np.flatnonzero(d2 <= best + tol)
        cand_flat.append(keep + start)
        cand_val.append(d2[keep])
    flats = np.concatenate(cand_flat)
    vals = np.concatenate(cand_val)
    flats = flats[vals <= best + tol]
    exact = [(codeword_distance(s, A, coeff, int(f)), int(f)) for f in flats]
    d2, flat = min(exact)
    return flat, d2


def solution_blocks(s, A, coeff, D, *, budget):
    """Yield arrays of lex ranks of codewords with ``|s - A beta|^2 <= D``."""
    if coeff == 0:
        check_budget(A.M**A.L, budget)
        if sqnorm(s) <= D:
            yield np.arange(A.M**A.L)
        return
    tol = _tolerance(s, A, coeff)
    for start, d2 in scan_distances(s, A, coeff, budget=budget):
        hit = d2 <= D
        border = np.flatnonzero(np.abs(d2 - D) <= tol)
        for k in border:
            hit[k] = codeword_distance(s, A, coeff, int(k + start)) <= D
        yield np.flatnonzero(hit) + start
