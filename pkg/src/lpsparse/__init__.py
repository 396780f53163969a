"""Sparse estimation for overdetermined noisy linear systems.

LSE, then soft-thresholding at lam = sqrt(2n / N**(1 - epsilon)), then least
squares restricted to the surviving support.
"""
from .estimator import (
    EstimatorConfig,
    PipelineTrace,
    SparseEstimate,
    compute_lambda,
    detect_support,
    estimate,
    oracle_lse,
    soft_threshold,
    solution_path,
)
from .linalg import (
    RichnessCertificate,
    SvdFactors,
    least_squares,
    richness_certificate,
    subset_least_squares,
    svd_thin,
)

__version__ = "0.1.0"
