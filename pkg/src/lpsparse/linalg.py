"""Dense linear-algebra substrate: thin SVD, SVD least squares, column-subset solves.

Singular values are stored in *ascending* order (sigma[0] is the smallest),
which is the opposite of the LAPACK/numpy convention.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

RANK_TOL = 1e-10


class NumericalFailureError(RuntimeError):
    """The SVD did not converge or produced non-finite factors."""


class RankDeficiencyError(ValueError):
    """A solve needed full column rank and did not get it."""

    def __init__(self, index: int, sigma: float, sigma_max: float):
        self.index = index
        self.sigma = sigma
        self.sigma_max = sigma_max
        super().__init__(
            f"rank deficient: singular value #{index} (ascending) = {sigma:.3e} "
            f"<= {RANK_TOL:g} * max singular value {sigma_max:.3e}"
        )


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def as_vector(y, length: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if length is not None and y.shape[0] != length:
        raise ValueError(f"vector length {y.shape[0]} does not match {length}")
    if not np.all(np.isfinite(y)):
        raise ValueError("vector has non-finite entries")
    return y


@dataclass(frozen=True)
class SvdFactors:
    u: np.ndarray  # N x n, orthonormal columns
    sigma: np.ndarray  # n, ascending
    v: np.ndarray  # n x n orthogonal

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T

    def rank_deficient_index(self) -> int | None:
        """Index of the first singular value below the rank tolerance, or None."""
        smax = self.sigma[-1] if self.sigma.size else 0.0
        bad = np.flatnonzero(self.sigma <= RANK_TOL * smax) if smax > 0 else np.arange(self.sigma.size)
        return int(bad[0]) if bad.size else None


@dataclass(frozen=True)
class RichnessCertificate:
    c1_hat: float
    c2_hat: float
    full_rank: bool


def svd_thin(a) -> SvdFactors:
    a = as_matrix(a)
    if a.shape[0] < a.shape[1]:
        raise ValueError(f"need rows >= cols, got {a.shape}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s)) and np.all(np.isfinite(vt))):
        raise NumericalFailureError("SVD produced non-finite factors")
    # numpy returns descending order
    return SvdFactors(u=u[:, ::-1].copy(), sigma=s[::-1].copy(), v=vt[::-1].T.copy())


def least_squares(svd: SvdFactors, y) -> np.ndarray:
    """Return V diag(1/sigma) U^T y; raises RankDeficiencyError unless full column rank."""
    y = as_vector(y, svd.u.shape[0])
    bad = svd.rank_deficient_index()
    if bad is not None:
        smax = float(svd.sigma[-1]) if svd.sigma.size else 0.0
        raise RankDeficiencyError(bad, float(svd.sigma[bad]), smax)
    return svd.v @ ((svd.u.T @ y) / svd.sigma)


class SubsetSolution(NamedTuple):
    x: np.ndarray
    rank_deficient: bool


def _normalize_support(support: Iterable[int], n: int) -> np.ndarray:
    idx = np.array(sorted({int(i) for i in support}), dtype=int)
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise IndexError(f"support indices must lie in [0, {n}), got {idx.tolist()}")
    return idx


def subset_least_squares(a, y, support: Iterable[int]) -> SubsetSolution:
    """Least squares restricted to the columns in ``support`` (0-based).

    Entries off the support are exactly zero. A rank-deficient column
    submatrix is solved with a truncated pseudo-inverse and flagged.
    """
    a = as_matrix(a)
    y = as_vector(y, a.shape[0])
    n = a.shape[1]
    idx = _normalize_support(support, n)
    x = np.zeros(n)
    if idx.size == 0:
        return SubsetSolution(x, False)
    sub = a[:, idx]
    try:
        u, s, vt = np.linalg.svd(sub, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge: {exc}") from exc
    keep = s > RANK_TOL * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    deficient = bool(keep.sum() < idx.size)
    coef = vt[keep].T @ ((u[:, keep].T @ y) / s[keep])
    x[idx] = coef
    return SubsetSolution(x, deficient)


def richness_certificate(svd: SvdFactors, n_rows: int) -> RichnessCertificate:
    root = np.sqrt(n_rows)
    c1 = float(svd.sigma[0]) / root
    c2 = float(svd.sigma[-1]) / root
    return RichnessCertificate(c1_hat=c1, c2_hat=c2, full_rank=svd.rank_deficient_index() is None)
