"""Seeded synthetic problems: correlated Gaussian design and sinusoid dictionary.

Randomness comes from numpy's Philox4x32 counter-based bit generator keyed by
the integer seed. Gaussian draws use the Box-Muller transform on Philox
uniforms (both branches used), so a seed pins every value independently of
numpy's own normal sampler.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .io import read_matrix_csv, read_vector_csv, write_matrix_csv, write_vector_csv, CsvParseError

EXP1_X_TRUE = np.array([3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0])
EXP1_RHO = 0.5
EXP2_N_FREQS = 10
EXP2_SAMPLE_PERIOD = 0.1

_RESONANCE_TOL = 1e-9


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox keyed by (seed, stream); stream 0 is the problem data."""
    key = np.array([int(seed) & (2**64 - 1), int(stream) & (2**64 - 1)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normals from pairs of uniforms (u1 in (0, 1], u2 in [0, 1))."""
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)
    u2 = rng.random(m)
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = rad * np.cos(2.0 * np.pi * u2)
    z[1::2] = rad * np.sin(2.0 * np.pi * u2)
    return z[:size]


@dataclass(frozen=True)
class Problem:
    a: np.ndarray
    y: np.ndarray
    x_true: np.ndarray
    noise_var: float = 1.0
    seed: int = 0
    noise: np.ndarray | None = field(default=None, repr=False)

    @property
    def true_support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.x_true != 0))

    @property
    def sparsity(self) -> int:
        return len(self.true_support)

    @property
    def x0_min(self) -> float:
        nz = np.abs(self.x_true[self.x_true != 0])
        return float(nz.min()) if nz.size else float("nan")

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape


def _wrapped(theta: float) -> float:
    """Distance of theta from the nearest integer multiple of 2*pi."""
    return abs((theta + np.pi) % (2.0 * np.pi) - np.pi)


@dataclass(frozen=True)
class SinusoidDict:
    freqs: tuple[float, ...]
    sample_period: float
    n_samples: int

    def __post_init__(self):
        object.__setattr__(self, "freqs", tuple(float(w) for w in self.freqs))
        if self.sample_period <= 0:
            raise ValueError(f"sample period must be positive, got {self.sample_period}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if len(set(self.freqs)) != len(self.freqs):
            raise ValueError("frequencies must be distinct")
        ts = self.sample_period
        for i, wi in enumerate(self.freqs):
            if _wrapped(2 * wi * ts) < _RESONANCE_TOL:
                raise ValueError(f"frequency {wi} is resonant: 2*w*t_s is a multiple of 2*pi")
            for wj in self.freqs[i + 1:]:
                if _wrapped((wi - wj) * ts) < _RESONANCE_TOL or _wrapped((wi + wj) * ts) < _RESONANCE_TOL:
                    raise ValueError(f"frequencies {wi}, {wj} are resonant at t_s={ts}")

    @property
    def n_freqs(self) -> int:
        return len(self.freqs)

    def with_samples(self, n_samples: int) -> "SinusoidDict":
        return SinusoidDict(self.freqs, self.sample_period, n_samples)


def default_sinusoid_dict(n_samples: int) -> SinusoidDict:
    return SinusoidDict(tuple(float(k) for k in range(1, EXP2_N_FREQS + 1)), EXP2_SAMPLE_PERIOD, n_samples)


def build_sinusoid_matrix(d: SinusoidDict) -> np.ndarray:
    """Entry (i, k) = sin(i * w_k * t_s) for sample index i = 1..N."""
    t = np.arange(1, d.n_samples + 1, dtype=float)[:, None]
    return np.sin(t * (np.asarray(d.freqs)[None, :] * d.sample_period))


@lru_cache(maxsize=None)
def _toeplitz_factor(n: int, rho: float) -> np.ndarray:
    idx = np.arange(n)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(cov)


def exp1_covariance(n: int = 8, rho: float = EXP1_RHO) -> np.ndarray:
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def correlated_rows(rng: np.random.Generator, n_rows: int, n: int = 8, rho: float = EXP1_RHO) -> np.ndarray:
    z = box_muller(rng, n_rows * n).reshape(n_rows, n)
    return z @ _toeplitz_factor(n, rho).T


def gen_experiment1(n_obs: int, seed: int) -> Problem:
    """x0 = (3, 1.5, 0, 0, 2, 0, 0, 0); rows i.i.d. N(0, 0.5**|j1-j2|); unit noise.

    Draw order from the seeded stream: the N*8 design normals, then N noise normals.
    """
    n = EXP1_X_TRUE.size
    if n_obs <= n:
        raise ValueError(f"experiment 1 needs N > {n}, got {n_obs}")
    rng = make_rng(seed)
    a = correlated_rows(rng, n_obs, n)
    v = box_muller(rng, n_obs)
    x = EXP1_X_TRUE.copy()
    return Problem(a=a, y=a @ x + v, x_true=x, noise_var=1.0, seed=int(seed), noise=v)


def gen_experiment2(n_obs: int, seed: int) -> Problem:
    """Ten sinusoids w_k = k at t_s = 0.1 s, amplitudes (1, 1, 1, 0, ..., 0), unit noise."""
    if n_obs <= EXP2_N_FREQS:
        raise ValueError(f"experiment 2 needs N > {EXP2_N_FREQS}, got {n_obs}")
    a = build_sinusoid_matrix(default_sinusoid_dict(n_obs))
    x = np.zeros(EXP2_N_FREQS)
    x[:3] = 1.0
    v = box_muller(make_rng(seed), n_obs)
    return Problem(a=a, y=a @ x + v, x_true=x, noise_var=1.0, seed=int(seed), noise=v)


GENERATORS = {"exp1": gen_experiment1, "exp2": gen_experiment2}


def generate(generator: str, n_obs: int, seed: int) -> Problem:
    try:
        fn = GENERATORS[generator]
    except KeyError:
        raise ValueError(f"unknown generator {generator!r}; choose from {sorted(GENERATORS)}") from None
    return fn(n_obs, seed)


def save_bundle(problem: Problem, out_dir) -> list[Path]:
    """Write A.csv, y.csv, xtrue.csv and meta.csv (seed, noise_var)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "A.csv", out / "y.csv", out / "xtrue.csv", out / "meta.csv"]
    write_matrix_csv(paths[0], problem.a)
    write_vector_csv(paths[1], problem.y)
    write_vector_csv(paths[2], problem.x_true)
    with open(paths[3], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "noise_var"])
        w.writerow([problem.seed, format(problem.noise_var, ".17g")])
    return paths


def load_bundle(in_dir, require_truth: bool = False) -> Problem:
    """Read a bundle written by :func:`save_bundle`. xtrue.csv and meta.csv are optional."""
    d = Path(in_dir)
    a = read_matrix_csv(d / "A.csv")
    y = read_vector_csv(d / "y.csv")
    if y.size != a.shape[0]:
        raise CsvParseError(d / "y.csv", y.size, f"y has {y.size} rows but A has {a.shape[0]}")
    xt_path = d / "xtrue.csv"
    if xt_path.exists():
        x = read_vector_csv(xt_path)
        if x.size != a.shape[1]:
            raise CsvParseError(xt_path, x.size, f"xtrue has {x.size} rows but A has {a.shape[1]} columns")
    elif require_truth:
        raise CsvParseError(xt_path, 0, "missing file")
    else:
        x = np.full(a.shape[1], np.nan)
    seed, noise_var = 0, 1.0
    meta = d / "meta.csv"
    if meta.exists():
        with open(meta, newline="") as fh:
            rows = list(csv.reader(fh))
        try:
            rec = dict(zip(rows[0], rows[1]))
            seed, noise_var = int(rec["seed"]), float(rec["noise_var"])
        except (IndexError, KeyError, ValueError) as exc:
            raise CsvParseError(meta, 2, f"bad meta line: {exc}") from exc
    return Problem(a=a, y=y, x_true=x, noise_var=noise_var, seed=seed)
