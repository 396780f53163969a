"""Comparison estimators: LASSO by cyclic coordinate descent and the adaptive LASSO.

The LASSO objective is 0.5 * ||y - A x||^2 + reg_param * sum_i w_i |x_i|.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import ADALASSO, LASSO, SparseEstimate, detect_support, soft_threshold
from .linalg import as_matrix, as_vector, least_squares, svd_thin

WEIGHT_CAP = 1e12
LASSO_SUPPORT_CUSHION = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, x: np.ndarray, sweeps: int):
        super().__init__(message)
        self.x = x
        self.sweeps = sweeps


@dataclass(frozen=True)
class LassoConfig:
    reg_param: float
    weights: np.ndarray | None = None
    max_iter: int = 100_000
    tol: float = 1e-10

    def __post_init__(self):
        if not self.reg_param >= 0:
            raise ValueError(f"reg_param must be nonnegative, got {self.reg_param}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if not (np.all(np.isfinite(w)) and np.all(w > 0)):
                raise ValueError("weights must be positive and finite")


def lasso_objective(a, y, x, reg_param: float, weights=None) -> float:
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    r = np.asarray(y, dtype=float) - a @ x
    return float(0.5 * r @ r + reg_param * np.sum(w * np.abs(x)))


def kkt_violation(a, y, x, reg_param: float, weights=None) -> float:
    """Largest deviation from the LASSO subgradient optimality conditions."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    corr = a.T @ (np.asarray(y, dtype=float) - a @ x)
    thr = reg_param * w
    zero = x == 0
    viol = np.where(zero, np.maximum(np.abs(corr) - thr, 0.0), np.abs(corr - np.sign(x) * thr))
    return float(viol.max()) if viol.size else 0.0


def lasso_cd(a, y, config: LassoConfig, history: list | None = None) -> SparseEstimate:
    """Cyclic coordinate descent, stopping when a full sweep moves no coordinate by more than tol.

    If ``history`` is given, the objective after every sweep is appended to it.
    """
    a = as_matrix(a)
    y = as_vector(y, a.shape[0])
    n = a.shape[1]
    col_sq = np.einsum("ij,ij->j", a, a)
    if np.any(col_sq == 0):
        raise ValueError(f"zero columns at {np.flatnonzero(col_sq == 0).tolist()}")
    w = np.ones(n) if config.weights is None else np.asarray(config.weights, dtype=float)
    thr = config.reg_param * w

    x = np.zeros(n)
    r = y.copy()
    for sweep in range(1, config.max_iter + 1):
        max_change = 0.0
        for j in range(n):
            aj = a[:, j]
            old = x[j]
            rho = aj @ r + col_sq[j] * old
            new = float(soft_threshold(rho, thr[j])) / col_sq[j]
            if new != old:
                r -= aj * (new - old)
                x[j] = new
                max_change = max(max_change, abs(new - old))
        if history is not None:
            history.append(lasso_objective(a, y, x, config.reg_param, w))
        if max_change <= config.tol:
            break
    else:
        raise ConvergenceError(
            f"coordinate descent did not reach tol={config.tol:g} in {config.max_iter} sweeps",
            x.copy(),
            config.max_iter,
        )
    support = detect_support(x, LASSO_SUPPORT_CUSHION)
    x = np.where(np.isin(np.arange(n), support), x, 0.0)
    return SparseEstimate(x=x, support=support, method=LASSO)


def adaptive_weights(x_ls, gamma: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        w = 1.0 / np.abs(np.asarray(x_ls, dtype=float)) ** gamma
    return np.minimum(w, WEIGHT_CAP)


def adalasso_reg_param(n_obs: int, gamma: float) -> float:
    return float(n_obs ** (0.5 - gamma / 4.0))


def adalasso(a, y, gamma: float = 1.0, n_obs: int | None = None, **cd_options) -> SparseEstimate:
    """Reweighted LASSO with weights 1/|x_ls|**gamma and reg_param N**(1/2 - gamma/4)."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    a = as_matrix(a)
    n_obs = a.shape[0] if n_obs is None else n_obs
    x_ls = least_squares(svd_thin(a), y)
    config = LassoConfig(
        reg_param=adalasso_reg_param(n_obs, gamma), weights=adaptive_weights(x_ls, gamma), **cd_options
    )
    fit = lasso_cd(a, y, config)
    return SparseEstimate(x=fit.x, support=fit.support, method=ADALASSO)
