"""scikit-learn style wrapper around the encoder and decoder."""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._search import sqnorm
from ._validation import DEFAULT_BUDGET, DomainError, check_budget
from .codebook import BetaIndex, SparcParams, derive_dimensions, sample_design_matrix
from .encoder import CODED, NORM_OVERFLOW, STATUSES, TRIVIAL_ZERO, decode, encode, EncodeOutcome

STATUS_CODES = {s: i for i, s in enumerate(STATUSES)}


class SparcCompressor(TransformerMixin, BaseEstimator):
    """Compress rows of ``X`` (blocks of length ``n``) with one shared SPARC codebook.

    Parameters
    ----------
    rate : float, optional
        Nominal rate in nats per sample. Used with ``b`` when ``L`` and
        ``M`` are not given.
    b : float
        Exponent in ``M = L^b``.
    distortion : float
        Target distortion ``D``.
    gamma2 : float, optional
        Norm overflow threshold; defaults to ``2 * distortion + 2 * var``
        with ``var`` the mean sample power seen by :meth:`fit`.
    seed : int
        Seed of the design matrix.
    budget : int
        Largest codebook the exhaustive encoder may scan.
    L, M : int, optional
        Explicit geometry, overriding ``rate`` and ``b``.

    Attributes
    ----------
    params_ : SparcParams
    design_ : DesignMatrix
    gamma2_ : float
    """

    def __init__(self, rate=None, b=2.0, distortion=0.5, gamma2=None, seed=0,
                 budget=DEFAULT_BUDGET, L=None, M=None):
        self.rate = rate
        self.b = b
        self.distortion = distortion
        self.gamma2 = gamma2
        self.seed = seed
        self.budget = budget
        self.L = L
        self.M = M

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        n = X.shape[1]
        if self.L is not None and self.M is not None:
            params = SparcParams.from_geometry(n, int(self.L), int(self.M))
        elif self.rate is not None:
            params = derive_dimensions(n, self.rate, self.b)
        else:
            raise DomainError("give either rate (with b) or both L and M")
        check_budget(params.n_codewords, self.budget)
        if not self.distortion > 0:
            raise DomainError(f"distortion must be positive, got {self.distortion}")
        if self.gamma2 is None:
            gamma2 = 2.0 * self.distortion + 2.0 * float(np.mean(X * X))
        else:
            gamma2 = float(self.gamma2)
        if not gamma2 > self.distortion:
            raise DomainError(f"need gamma2 > distortion, got {gamma2}")
        self.params_ = params
        self.gamma2_ = gamma2
        self.design_ = sample_design_matrix(params, self.seed)
        self.n_features_in_ = n
        return self

    def encode_blocks(self, X):
        """List of :class:`EncodeOutcome`, one per row."""
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DomainError(f"expected blocks of length {self.n_features_in_}, got {X.shape[1]}")
        return [encode(row, self.design_, self.params_, self.distortion, self.gamma2_,
                       budget=self.budget) for row in X]

    def transform(self, X):
        """Integer codes ``[status, q_index, beta_1 .. beta_L]`` per row.

        Status codes follow ``STATUS_CODES``; absent fields are ``0`` for
        the cell index and ``-1`` for the sections.
        """
        L = self.params_.L if hasattr(self, "params_") else 0
        outcomes = self.encode_blocks(X)
        codes = np.full((len(outcomes), 2 + L), -1, dtype=np.int64)
        for k, o in enumerate(outcomes):
            codes[k, 0] = STATUS_CODES[o.status]
            codes[k, 1] = o.q_index or 0
            if o.beta_hat is not None:
                codes[k, 2:] = o.beta_hat.sections
        return codes

    def inverse_transform(self, codes):
        """Reconstructions; overflow rows carry no codeword and decode to zeros."""
        check_is_fitted(self)
        codes = check_array(codes, dtype=np.int64)
        out = np.zeros((codes.shape[0], self.params_.n))
        for k, row in enumerate(codes):
            status = STATUSES[int(row[0])]
            if status == CODED:
                o = EncodeOutcome(CODED, q_index=int(row[1]), beta_hat=BetaIndex(tuple(row[2:])))
                out[k] = decode(o, self.design_, self.params_, self.distortion, self.gamma2_)
            elif status not in (TRIVIAL_ZERO, NORM_OVERFLOW):
                raise DomainError(f"unknown status code {row[0]}")
        return out

    def score(self, X, y=None):
        """Negative mean distortion ``-mean |x - x_hat|^2`` over rows."""
        X = check_array(X, dtype=float)
        X_hat = self.inverse_transform(self.transform(X))
        return -float(np.mean([sqnorm(a - b) for a, b in zip(X, X_hat)]))

    @property
    def rate_(self):
        check_is_fitted(self)
        return self.params_.R_actual if self.params_.M > 1 else 0.0

    def bits_per_sample(self):
        return self.rate_ / math.log(2)
