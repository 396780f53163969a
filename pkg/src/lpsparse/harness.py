"""Monte Carlo engine and executable checks of the estimator's guarantees.

Every trial is keyed by (N, trial_index) and draws its problem from seed
``base_seed + trial_index``; all methods in a trial see the same data.
Results are reduced in key order, so reports do not depend on ``jobs``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .baselines import ConvergenceError, LassoConfig, adalasso, lasso_cd
from .datagen import Problem, SinusoidDict, build_sinusoid_matrix, generate, make_rng
from .estimator import (
    ADALASSO,
    LASSO,
    LP_RELSE,
    LSE,
    METHODS,
    ORACLE_LSE,
    EstimatorConfig,
    PipelineTrace,
    compute_lambda,
    detect_support,
    estimate,
    oracle_lse,
)
from .linalg import NumericalFailureError, RankDeficiencyError, least_squares, richness_certificate, svd_thin

ORACLE_MATCH_TOL = 1e-10
LP_BOUND_CUSHION = 1e-12
LSE_IDENTITY_TOL = 1e-8
N_FOLDS = 5

RECOVERABLE = (RankDeficiencyError, ConvergenceError, NumericalFailureError)


class BoundViolation(AssertionError):
    """A deterministic inequality failed; message carries both sides."""

    def __init__(self, name: str, lhs: float, rhs: float, relation: str = "<="):
        self.name, self.lhs, self.rhs = name, lhs, rhs
        super().__init__(f"{name} violated: {lhs!r} {relation} {rhs!r} is false")


@dataclass(frozen=True)
class TrialRecord:
    n_obs: int
    trial: int
    seed: int
    method: str
    sq_error: float
    support_exact: bool
    feasible: bool
    lam: float
    sigma_min: float
    x0_min: float
    oracle_match: bool
    lp_sq_error: float = float("nan")
    lp_bound: float = float("nan")
    n_params: int = 8


@dataclass
class MonteCarloReport:
    kind: str
    generator: str
    config: dict
    records: list[TrialRecord] = field(default_factory=list)
    failures: list[tuple[int, int, str, str]] = field(default_factory=list)

    def groups(self) -> dict[tuple[int, str], list[TrialRecord]]:
        out: dict[tuple[int, str], list[TrialRecord]] = {}
        for r in self.records:
            out.setdefault((r.n_obs, r.method), []).append(r)
        return out

    def metric(self, n_obs: int, method: str, name: str) -> float:
        return {k: v for _, k, v in self._metrics(self.groups()[(n_obs, method)])}[name]

    @staticmethod
    def _metrics(recs: list[TrialRecord]):
        m = len(recs)
        yield m, "mse", float(np.mean([r.sq_error for r in recs]))
        yield m, "recovery_portion", float(np.mean([r.support_exact for r in recs]))
        yield m, "oracle_match_rate", float(np.mean([r.oracle_match for r in recs]))
        yield m, "feasibility_freq", float(np.mean([r.feasible for r in recs]))
        yield m, "feasibility_bound", float(np.mean([feasibility_bound(r.lam, r.sigma_min, r.n_params) for r in recs]))
        yield m, "lambda", float(np.mean([r.lam for r in recs]))
        lp = [r for r in recs if not math.isnan(r.lp_bound)]
        if lp:
            yield m, "lp_error_bound_mean", float(np.mean([r.lp_bound for r in lp]))

    def rows(self) -> list[tuple]:
        """Tidy rows (N, method, metric, value, trials)."""
        out = []
        for (n_obs, method), recs in sorted(self.groups().items(), key=_group_key):
            for m, name, value in self._metrics(recs):
                out.append((n_obs, method, name, value, m))
        return out

    def mse_rows(self) -> list[tuple]:
        return [(n, meth, v, m) for (n, meth, name, v, m) in self.rows() if name == "mse"]

    def portions(self, method: str) -> dict[int, float]:
        return {n: float(np.mean([r.support_exact for r in recs])) for (n, meth), recs in self.groups().items() if meth == method}

    def summability_proxy(self, method: str) -> float:
        """Sum over the N grid of (1 - recovery portion)."""
        return float(sum(1.0 - p for p in self.portions(method).values()))


def _group_key(item):
    (n_obs, method), _ = item
    order = METHODS.index(method) if method in METHODS else len(METHODS)
    return n_obs, order, method


def _map(fn: Callable, tasks: Sequence, jobs: int = 1) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def feasibility_bound(lam: float, sigma_min: float, n: int) -> float:
    """1 - n exp(-lam^2 sigma^2 / (2n)); may be negative (vacuous)."""
    return 1.0 - n * math.exp(-(lam * lam) * (sigma_min * sigma_min) / (2.0 * n))


def schedule_feasibility_bound(c1_hat: float, n: int, n_obs: int, epsilon: float) -> float:
    return 1.0 - n * math.exp(-(c1_hat * c1_hat) * n_obs**epsilon)


def lp_error_bound(sparsity: int, lam: float) -> float:
    return 4.0 * sparsity * lam * lam


def check_lp_error_bound(trace: PipelineTrace, problem: Problem) -> bool:
    """If x0 lies in the LP feasible box, assert ||x_lp - x0||^2 <= 4 s lam^2.

    Returns whether the precondition held (and the bound was checked).
    """
    if np.max(np.abs(trace.x_ls - problem.x_true)) > trace.lam:
        return False
    err = float(np.sum((trace.x_lp - problem.x_true) ** 2))
    bound = lp_error_bound(problem.sparsity, trace.lam)
    if err > bound + LP_BOUND_CUSHION:
        raise BoundViolation("||x_lp - x0||^2 <= 4 s lam^2", err, bound)
    return True


def lse_identity_deviation(problem: Problem, x_ls: np.ndarray, svd=None) -> float:
    """max |x_ls - (x0 + V diag(1/sigma) U^T v)| using the recorded noise v."""
    if problem.noise is None:
        raise ValueError("problem does not carry its noise realization")
    svd = svd if svd is not None else svd_thin(problem.a)
    predicted = problem.x_true + svd.v @ ((svd.u.T @ problem.noise) / svd.sigma)
    return float(np.max(np.abs(np.asarray(x_ls) - predicted)))


def check_lse_identity(problem: Problem, trace: PipelineTrace) -> float:
    dev = lse_identity_deviation(problem, trace.x_ls)
    if dev > LSE_IDENTITY_TOL:
        raise BoundViolation("LSE identity deviation", dev, LSE_IDENTITY_TOL)
    return dev


def _run_trial(task) -> tuple[list[TrialRecord], list[tuple]]:
    generator, n_obs, trial, base_seed, methods, epsilon, gamma = task
    seed = base_seed + trial
    problem = generate(generator, n_obs, seed)
    a, y, x0 = problem.a, problem.y, problem.x_true
    truth = problem.true_support
    records: list[TrialRecord] = []
    failures: list[tuple] = []
    try:
        svd = svd_thin(a)
        trace = estimate(a, y, EstimatorConfig(epsilon=epsilon), svd=svd)
    except RECOVERABLE as exc:
        return [], [(n_obs, trial, m, repr(exc)) for m in methods]
    oracle = oracle_lse(a, y, truth)
    sigma_min = float(svd.sigma[0])
    feasible = bool(np.max(np.abs(trace.x_ls - x0)) <= trace.lam)
    check_lp_error_bound(trace, problem)
    lp_sq = float(np.sum((trace.x_lp - x0) ** 2))
    lp_bound = lp_error_bound(problem.sparsity, trace.lam)
    for method in methods:
        try:
            if method == LSE:
                x, supp = trace.x_ls, detect_support(trace.x_ls)
            elif method == LP_RELSE:
                x, supp = trace.x_rels, trace.support_lp
            elif method == ORACLE_LSE:
                x, supp = oracle.x, oracle.support
            elif method == LASSO:
                fit = lasso_cd(a, y, LassoConfig(reg_param=math.sqrt(n_obs)))
                x, supp = fit.x, fit.support
            elif method == ADALASSO:
                fit = adalasso(a, y, gamma=gamma, n_obs=n_obs)
                x, supp = fit.x, fit.support
            else:
                raise ValueError(f"unknown method {method!r}")
        except RECOVERABLE as exc:
            failures.append((n_obs, trial, method, repr(exc)))
            continue
        records.append(
            TrialRecord(
                n_obs=n_obs,
                trial=trial,
                seed=seed,
                method=method,
                sq_error=float(np.sum((x - x0) ** 2)),
                support_exact=tuple(supp) == truth,
                feasible=feasible,
                lam=trace.lam,
                sigma_min=sigma_min,
                x0_min=problem.x0_min,
                oracle_match=bool(np.max(np.abs(x - oracle.x)) <= ORACLE_MATCH_TOL),
                lp_sq_error=lp_sq if method == LP_RELSE else float("nan"),
                lp_bound=lp_bound if method == LP_RELSE else float("nan"),
                n_params=a.shape[1],
            )
        )
    return records, failures


def _validate_grid(n_grid, trials):
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not n_grid:
        raise ValueError("empty N grid")


def run_mse_experiment(
    generator: str,
    n_grid: Sequence[int],
    methods: Sequence[str] = METHODS,
    trials: int = 50,
    base_seed: int = 0,
    epsilon: float = 1.0 / 3.0,
    gamma: float = 1.0,
    jobs: int = 1,
) -> MonteCarloReport:
    _validate_grid(n_grid, trials)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown methods {bad}; choose from {list(METHODS)}")
    tasks = [(generator, int(n), t, base_seed, tuple(methods), epsilon, gamma) for n in n_grid for t in range(trials)]
    report = MonteCarloReport(
        kind="mse",
        generator=generator,
        config=dict(n_grid=list(map(int, n_grid)), methods=list(methods), trials=trials, base_seed=base_seed,
                    epsilon=epsilon, gamma=gamma),
    )
    for recs, fails in _map(_run_trial, tasks, jobs):
        report.records.extend(recs)
        report.failures.extend(fails)
    return report


def eps_label(epsilon: float) -> str:
    return f"eps={epsilon:.6g}"


def _run_support_trial(task) -> list[TrialRecord]:
    generator, n_obs, trial, base_seed, epsilons = task
    problem = generate(generator, n_obs, base_seed + trial)
    svd = svd_thin(problem.a)
    x_ls = least_squares(svd, problem.y)
    out = []
    for eps in epsilons:
        trace = estimate(problem.a, problem.y, EstimatorConfig(epsilon=eps), svd=svd)
        check_lp_error_bound(trace, problem)
        exact = trace.support_lp == problem.true_support
        out.append(
            TrialRecord(
                n_obs=n_obs,
                trial=trial,
                seed=base_seed + trial,
                method=eps_label(eps),
                sq_error=float(np.sum((trace.x_rels - problem.x_true) ** 2)),
                support_exact=exact,
                feasible=bool(np.max(np.abs(x_ls - problem.x_true)) <= trace.lam),
                lam=trace.lam,
                sigma_min=float(svd.sigma[0]),
                x0_min=problem.x0_min,
                oracle_match=exact,
                lp_sq_error=float(np.sum((trace.x_lp - problem.x_true) ** 2)),
                lp_bound=lp_error_bound(problem.sparsity, trace.lam),
                n_params=problem.a.shape[1],
            )
        )
    return out


def run_support_recovery(
    generator: str,
    n_grid: Sequence[int],
    epsilons: Sequence[float] = (1 / 8, 1 / 4, 1 / 2),
    trials: int = 200,
    base_seed: int = 0,
    jobs: int = 1,
) -> MonteCarloReport:
    """Portion of trials whose LP support equals the true support, per (N, epsilon)."""
    _validate_grid(n_grid, trials)
    for eps in epsilons:
        if not 0 < eps < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    tasks = [(generator, int(n), t, base_seed, tuple(epsilons)) for n in n_grid for t in range(trials)]
    report = MonteCarloReport(
        kind="support",
        generator=generator,
        config=dict(n_grid=list(map(int, n_grid)), epsilons=list(epsilons), trials=trials, base_seed=base_seed),
    )
    for recs in _map(_run_support_trial, tasks, jobs):
        report.records.extend(recs)
    return report


# -- feasibility (probability lower bound) ---------------------------------------------


@dataclass(frozen=True)
class FeasibilityReport:
    trials: int
    frequency: float
    mean_bound: float
    mean_schedule_bound: float
    slack: float
    feasible: np.ndarray  # per-trial booleans

    @property
    def passed(self) -> bool:
        return self.frequency >= self.mean_bound - self.slack


def mc_slack(trials: int) -> float:
    """Three standard errors at the worst-case variance p(1-p) = 1/4."""
    return 3.0 * math.sqrt(0.25 / trials)


def check_feasibility_bound(
    problems: Iterable[Problem], epsilon: float = 1.0 / 3.0, lambda_override: float | None = None
) -> FeasibilityReport:
    feas, bounds, thm = [], [], []
    for p in problems:
        n_obs, n = p.a.shape
        svd = svd_thin(p.a)
        x_ls = least_squares(svd, p.y)
        lam = lambda_override if lambda_override is not None else compute_lambda(n, n_obs, epsilon)
        feas.append(bool(np.max(np.abs(x_ls - p.x_true)) <= lam))
        bounds.append(feasibility_bound(lam, float(svd.sigma[0]), n))
        cert = richness_certificate(svd, n_obs)
        thm.append(schedule_feasibility_bound(cert.c1_hat, n, n_obs, epsilon) if lambda_override is None else float("nan"))
    m = len(feas)
    if m == 0:
        raise ValueError("no problems supplied")
    return FeasibilityReport(
        trials=m,
        frequency=float(np.mean(feas)),
        mean_bound=float(np.mean(bounds)),
        mean_schedule_bound=float(np.mean(thm)),
        slack=mc_slack(m),
        feasible=np.array(feas),
    )


def exact_scalar_feasibility(lam: float, sigma: float) -> float:
    """P(|x_ls - x0| <= lam) for a single column with norm sigma and unit noise."""
    return math.erf(lam * sigma / math.sqrt(2.0))


def problem_stream(generator: str, n_obs: int, trials: int, base_seed: int = 0):
    for t in range(trials):
        yield generate(generator, n_obs, base_seed + t)


# -- whitened residual Gaussianity ------------------------------------------------------


@dataclass(frozen=True)
class GaussianityReport:
    trials: int
    mean_dev: float
    cov_dev: float
    mean_band: float
    cov_band: float

    @property
    def passed(self) -> bool:
        return self.mean_dev <= self.mean_band and self.cov_dev <= self.cov_band


def whitened_residuals(problems: Iterable[Problem], whiten: bool = True) -> np.ndarray:
    """Rows b = diag(sigma) V^T (x_ls - x0); with whiten=False the diag(sigma) factor is skipped."""
    rows = []
    for p in problems:
        svd = svd_thin(p.a)
        c = svd.v.T @ (least_squares(svd, p.y) - p.x_true)
        rows.append(svd.sigma * c if whiten else c)
    return np.array(rows)


def gaussianity_bands(b: np.ndarray) -> GaussianityReport:
    b = np.asarray(b, dtype=float)
    m, n = b.shape
    if m < 1000:
        raise ValueError(f"need at least 1000 trials, got {m}")
    mean = b.mean(axis=0)
    cov = (b - mean).T @ (b - mean) / (m - 1)
    return GaussianityReport(
        trials=m,
        mean_dev=float(np.max(np.abs(mean))),
        cov_dev=float(np.max(np.abs(cov - np.eye(n)))),
        mean_band=5.0 / math.sqrt(m),
        cov_band=5.0 * math.sqrt(2.0 / m),
    )


def check_whitened_gaussianity(problems: Iterable[Problem], whiten: bool = True) -> GaussianityReport:
    return gaussianity_bands(whitened_residuals(problems, whiten=whiten))


# -- Gram bounds for the sinusoid dictionary --------------------------------------------


def _geometric_cos_bound(theta: float) -> float:
    return 2.0 / abs(1.0 - complex(math.cos(theta), math.sin(theta))) + 1.0


def gram_constants(d: SinusoidDict) -> np.ndarray:
    """N-independent constants bounding the off-diagonal Gram entries and the diagonal deficit from N/2."""
    w = np.asarray(d.freqs)
    ts = d.sample_period
    n = w.size
    c = np.empty((n, n))
    for i in range(n):
        c[i, i] = 0.5 * _geometric_cos_bound(2.0 * w[i] * ts)
        for j in range(n):
            if j != i:
                c[i, j] = 0.5 * (_geometric_cos_bound((w[i] - w[j]) * ts) + _geometric_cos_bound((w[i] + w[j]) * ts))
    return c


@dataclass(frozen=True)
class GramRow:
    n_obs: int
    offdiag_violations: int
    diag_violations: int
    max_offdiag_ratio: float  # max |G_ij| / C_ij
    min_diag_slack: float  # min G_ii - (N/2 - C_ii)
    gershgorin_empirical: float  # min_i G_ii - sum_{j!=i} |G_ij|
    gershgorin_analytic: float  # min_i N/2 - C_ii - sum_{j!=i} C_ij
    lambda_min: float

    @property
    def passed(self) -> bool:
        return self.offdiag_violations == 0 and self.diag_violations == 0


@dataclass(frozen=True)
class GramReport:
    constants: np.ndarray
    rows: list[GramRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def check_gram_bounds(d: SinusoidDict, n_grid: Sequence[int]) -> GramReport:
    c = gram_constants(d)
    n = c.shape[0]
    off = ~np.eye(n, dtype=bool)
    rows = []
    for n_obs in n_grid:
        a = build_sinusoid_matrix(d.with_samples(int(n_obs)))
        g = a.T @ a
        diag = np.diag(g)
        abs_off = np.where(off, np.abs(g), 0.0)
        rows.append(
            GramRow(
                n_obs=int(n_obs),
                offdiag_violations=int(np.sum(abs_off[off] > c[off])),
                diag_violations=int(np.sum(diag < n_obs / 2.0 - np.diag(c))),
                max_offdiag_ratio=float(np.max(abs_off[off] / c[off])) if n > 1 else 0.0,
                min_diag_slack=float(np.min(diag - (n_obs / 2.0 - np.diag(c)))),
                gershgorin_empirical=float(np.min(diag - abs_off.sum(axis=1))),
                gershgorin_analytic=float(np.min(n_obs / 2.0 - c.sum(axis=1))),
                lambda_min=float(np.linalg.eigvalsh(g)[0]),
            )
        )
    return GramReport(constants=c, rows=rows)


# -- cross validation -------------------------------------------------------------------


class FoldSizeError(ValueError):
    pass


@dataclass
class CvGrid:
    param_name: str
    candidates: list[float]
    mean_losses: list[float]
    chosen: float
    n_obs: int
    choices: list[float] = field(default_factory=list)  # per realization
    test_errors: list[float] = field(default_factory=list)  # per realization
    excluded: int = 0


def _fit(param_name: str, value: float, a, y) -> np.ndarray:
    if param_name == "epsilon":
        return estimate(a, y, EstimatorConfig(epsilon=value)).x_rels
    if param_name == "gamma":
        return adalasso(a, y, gamma=value).x
    raise ValueError(f"unknown tuning parameter {param_name!r}")


def fold_indices(n_obs: int, rng: np.random.Generator, folds: int = N_FOLDS) -> list[np.ndarray]:
    """Contiguous blocks of a seeded permutation; sizes differ by at most one."""
    if n_obs < 2 * folds:
        raise FoldSizeError(f"need N >= {2 * folds} for {folds}-fold CV, got {n_obs}")
    return np.array_split(rng.permutation(n_obs), folds)


def argmin_smallest(candidates: Sequence[float], losses: Sequence[float]) -> float:
    return min(zip(losses, candidates))[1]


def _cv_realization(task):
    param_name, candidates, generator, n_obs, r, base_seed, trials = task
    train = generate(generator, n_obs, base_seed + r)
    folds = fold_indices(n_obs, make_rng(base_seed + r, stream=1))
    losses = []
    try:
        for value in candidates:
            fold_losses = []
            for k in range(len(folds)):
                val = folds[k]
                tr = np.concatenate([f for i, f in enumerate(folds) if i != k])
                x_hat = _fit(param_name, value, train.a[tr], train.y[tr])
                resid = train.y[val] - train.a[val] @ x_hat
                fold_losses.append(float(resid @ resid))
            losses.append(float(np.mean(fold_losses)))
    except RECOVERABLE:
        return None
    chosen = argmin_smallest(candidates, losses)
    test = generate(generator, n_obs, base_seed + trials + r)
    err = float(np.sum((_fit(param_name, chosen, test.a, test.y) - test.x_true) ** 2))
    return losses, chosen, err


def cross_validate(
    param_name: str,
    candidates: Sequence[float],
    n_obs: int,
    trials: int = 100,
    base_seed: int = 0,
    generator: str = "exp1",
    jobs: int = 1,
) -> CvGrid:
    """Per realization: 5-fold CV on a training problem, then the chosen value is
    applied to an independent test problem of the same size.

    Training data for realization r uses seed base_seed + r, its fold shuffle
    uses stream 1 of that seed, and the test problem uses seed base_seed + trials + r.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no candidates")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n_obs < 2 * N_FOLDS:
        raise FoldSizeError(f"need N >= {2 * N_FOLDS} for {N_FOLDS}-fold CV, got {n_obs}")
    tasks = [(param_name, tuple(candidates), generator, n_obs, r, base_seed, trials) for r in range(trials)]
    results = _map(_cv_realization, tasks, jobs)
    kept = [res for res in results if res is not None]
    grid = CvGrid(param_name=param_name, candidates=candidates, mean_losses=[], chosen=candidates[0], n_obs=n_obs)
    grid.excluded = len(results) - len(kept)
    if not kept:
        grid.mean_losses = [float("nan")] * len(candidates)
        return grid
    grid.mean_losses = [float(v) for v in np.mean([k[0] for k in kept], axis=0)]
    grid.chosen = argmin_smallest(candidates, grid.mean_losses)
    grid.choices = [k[1] for k in kept]
    grid.test_errors = [k[2] for k in kept]
    return grid
