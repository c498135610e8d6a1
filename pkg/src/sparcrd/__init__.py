"""Sparse superposition codes for lossy compression of Gaussian sources."""

__version__ = "0.1.0"

from ._validation import BudgetError, ConvergenceError, DomainError  # noqa: E402
from .codebook import (  # noqa: E402
    BetaIndex,
    DesignMatrix,
    SparcParams,
    derive_dimensions,
    sample_design_matrix,
    synthesize_codeword,
)
from .counting import (  # noqa: E402
    SolutionCensus,
    count_overlap_solutions,
    count_solutions,
    is_eps_good,
    overlap_census,
    solution_census,
)
from .encoder import EncodeOutcome, decode, encode, payload_bits  # noqa: E402
from .estimator import SparcCompressor  # noqa: E402
from .theory import StylizedParams, TheoryPoint  # noqa: E402

__all__ = [
    "BetaIndex",
    "BudgetError",
    "ConvergenceError",
    "DesignMatrix",
    "DomainError",
    "EncodeOutcome",
    "SolutionCensus",
    "SparcCompressor",
    "SparcParams",
    "StylizedParams",
    "TheoryPoint",
    "count_overlap_solutions",
    "count_solutions",
    "decode",
    "derive_dimensions",
    "encode",
    "is_eps_good",
    "overlap_census",
    "payload_bits",
    "sample_design_matrix",
    "solution_census",
    "synthesize_codeword",
]
