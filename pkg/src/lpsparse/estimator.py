"""LSE -> soft-threshold (the analytic LP solution) -> support-restricted re-LSE."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .linalg import as_matrix, as_vector, least_squares, subset_least_squares, svd_thin

SUPPORT_CUSHION = 1e-12

LSE = "LSE"
LP_RELSE = "LP_RELSE"
ORACLE_LSE = "ORACLE_LSE"
LASSO = "LASSO"
ADALASSO = "ADALASSO"
METHODS = (LSE, LP_RELSE, ORACLE_LSE, LASSO, ADALASSO)


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning for :func:`estimate`.

    ``lambda_override`` replaces the schedule sqrt(2n / N**(1 - epsilon));
    ``noise_std_scaling`` multiplies whichever threshold is in force, for
    noise levels other than unit variance.
    """

    epsilon: float = 1.0 / 3.0
    lambda_override: float | None = None
    noise_std_scaling: float | None = None

    def __post_init__(self):
        if self.lambda_override is None and not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.lambda_override is not None and not self.lambda_override > 0:
            raise ValueError(f"lambda_override must be positive, got {self.lambda_override}")
        if self.noise_std_scaling is not None and not self.noise_std_scaling > 0:
            raise ValueError(f"noise_std_scaling must be positive, got {self.noise_std_scaling}")


@dataclass(frozen=True)
class PipelineTrace:
    x_ls: np.ndarray
    lam: float
    x_lp: np.ndarray
    support_lp: tuple[int, ...]
    x_rels: np.ndarray
    rank_warning: bool


@dataclass(frozen=True)
class SparseEstimate:
    x: np.ndarray
    support: tuple[int, ...]
    method: str


def compute_lambda(n: int, n_obs: int, epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 1 or n_obs < 1:
        raise ValueError(f"need n >= 1 and N >= 1, got n={n}, N={n_obs}")
    return float(np.sqrt(2.0 * n / n_obs ** (1.0 - epsilon)))


def soft_threshold(x, lam: float) -> np.ndarray:
    """Componentwise shrinkage toward zero; ties |x_i| == lam map to exactly 0."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    x = np.asarray(x, dtype=float)
    out = np.where(x > lam, x - lam, 0.0)
    return np.where(x < -lam, x + lam, out)


def detect_support(x, cushion: float = SUPPORT_CUSHION) -> tuple[int, ...]:
    x = np.asarray(x, dtype=float)
    return tuple(int(i) for i in np.flatnonzero(np.abs(x) > cushion))


def resolve_lambda(config: EstimatorConfig, n: int, n_obs: int) -> float:
    if config.lambda_override is not None:
        lam = float(config.lambda_override)
    else:
        lam = compute_lambda(n, n_obs, config.epsilon)
    if config.noise_std_scaling is not None:
        lam *= config.noise_std_scaling
    return lam


def estimate(a, y, config: EstimatorConfig | None = None, svd=None) -> PipelineTrace:
    """Run the three-step estimator.

    ``svd`` may be passed when the caller already holds the factors of ``a``.
    """
    config = config or EstimatorConfig()
    a = as_matrix(a)
    y = as_vector(y, a.shape[0])
    svd = svd if svd is not None else svd_thin(a)
    x_ls = least_squares(svd, y)
    lam = resolve_lambda(config, a.shape[1], a.shape[0])
    x_lp = soft_threshold(x_ls, lam)
    support = detect_support(x_lp)
    x_rels, deficient = subset_least_squares(a, y, support)
    return PipelineTrace(x_ls=x_ls, lam=lam, x_lp=x_lp, support_lp=support, x_rels=x_rels, rank_warning=deficient)


def oracle_lse(a, y, true_support: Iterable[int]) -> SparseEstimate:
    x, _ = subset_least_squares(a, y, true_support)
    return SparseEstimate(x=x, support=tuple(sorted(int(i) for i in true_support)), method=ORACLE_LSE)


def solution_path(x_ls, lambda_grid) -> np.ndarray:
    """Rows are soft_threshold(x_ls, lam) for each lam of the ascending grid."""
    grid = np.asarray(lambda_grid, dtype=float).reshape(-1)
    if grid.size and (np.any(grid < 0) or np.any(np.diff(grid) < 0)):
        raise ValueError("lambda grid must be nonnegative and ascending")
    x_ls = np.asarray(x_ls, dtype=float)
    return np.array([soft_threshold(x_ls, lam) for lam in grid]).reshape(grid.size, x_ls.size)
