"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 data/parse, 3 numerical failure, 4 check violation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness, plotting
from .baselines import ConvergenceError
from .datagen import generate, load_bundle, default_sinusoid_dict, save_bundle
from .estimator import LP_RELSE, LSE, METHODS, ORACLE_LSE, EstimatorConfig, estimate, solution_path
from .io import CsvParseError, sha256, write_json, write_manifest, write_table, write_vector_csv
from .linalg import NumericalFailureError, RankDeficiencyError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3, 4

EXP1_N_GRID = (20, 50, 75, 100, 200, 300, 500)
EXP2_N_GRID = (20, 50, 100, 200, 300, 400, 500)
CV_N_GRID = (20, 50, 100, 200, 300, 500)
CV_CANDIDATES = {"epsilon": (1 / 8, 1 / 4, 1 / 2), "gamma": (1 / 2, 1.0, 2.0)}
SUPPORT_EPSILONS = (1 / 8, 1 / 4, 1 / 2)
PATH_DEMO = (2.0, 0.5, -1.0, -1.5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _floats(text: str) -> list[float]:
    try:
        return [_fraction(t) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"grid entries must be positive integers, got {text!r}")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _methods(text: str) -> list[str]:
    vals = [t.strip().upper() for t in text.split(",") if t.strip()]
    bad = [v for v in vals if v not in METHODS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS)}")
    return vals


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args, out: Path, command: str, config: dict, outputs: list[Path]) -> None:
    write_manifest(out, command, config, getattr(args, "seed", None), outputs)
    for p in sorted(outputs):
        print(p)


# -- commands ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _out_dir(args)
    problem = generate(args.experiment, args.n, args.seed)
    paths = save_bundle(problem, out)
    _finish(args, out, "generate", dict(experiment=args.experiment, n=args.n, seed=args.seed), paths)
    return EXIT_OK


def _input_checksums(bundle: Path) -> dict:
    # checksums rather than paths, so reruns from another directory give the same manifest
    return {p.name: sha256(p) for p in sorted(bundle.glob("*.csv"))}


def cmd_estimate(args) -> int:
    if (args.epsilon is None) == (args.lam is None):
        raise UsageError("give exactly one of --epsilon or --lambda")
    problem = load_bundle(args.input)
    if args.epsilon is not None:
        config = EstimatorConfig(epsilon=args.epsilon, noise_std_scaling=args.noise_std)
    else:
        config = EstimatorConfig(lambda_override=args.lam, noise_std_scaling=args.noise_std)
    trace = estimate(problem.a, problem.y, config)
    out = _out_dir(args)
    paths = [out / "estimate.csv", out / "support.csv", out / "trace.csv", out / "trace.json"]
    write_vector_csv(paths[0], trace.x_rels)
    write_table(paths[1], ["index"], [(i,) for i in trace.support_lp])
    support = set(trace.support_lp)
    write_table(
        paths[2],
        ["index", "x_ls", "x_lp", "x_rels", "in_support"],
        [(i, trace.x_ls[i], trace.x_lp[i], trace.x_rels[i], i in support) for i in range(trace.x_ls.size)],
    )
    write_json(
        paths[3],
        dict(lam=trace.lam, support_lp=list(trace.support_lp), rank_warning=trace.rank_warning,
             n_obs=int(problem.a.shape[0]), n=int(problem.a.shape[1])),
    )
    _finish(
        args, out, "estimate",
        dict(input_checksums=_input_checksums(Path(args.input)), epsilon=args.epsilon, lam=args.lam,
             noise_std=args.noise_std),
        paths,
    )
    return EXIT_OK


def _experiment(args, generator: str, default_grid, default_methods) -> int:
    n_grid = args.n_grid or list(default_grid)
    methods = args.methods or list(default_methods)
    epsilons = args.epsilons or list(SUPPORT_EPSILONS)
    out = _out_dir(args)
    mse = harness.run_mse_experiment(
        generator, n_grid, methods, args.trials, args.seed, epsilon=args.epsilon, gamma=args.gamma, jobs=args.jobs
    )
    sup = harness.run_support_recovery(generator, n_grid, epsilons, args.trials, args.seed, jobs=args.jobs)
    paths = [out / "mse.csv", out / "report.csv", out / "support.csv", out / "metadata.json"]
    write_table(paths[0], ["N", "method", "mse", "trials"], mse.mse_rows())
    write_table(paths[1], ["N", "method", "metric", "value", "trials"], mse.rows() + sup.rows())
    write_table(
        paths[2],
        ["N", "epsilon", "portion", "trials"],
        [(n, eps, sup.portions(harness.eps_label(eps))[n], args.trials) for eps in epsilons for n in n_grid],
    )
    write_json(
        paths[3],
        dict(
            generator=generator, seed=args.seed, n_grid=n_grid, methods=methods, trials=args.trials,
            epsilon=args.epsilon, gamma=args.gamma, support_epsilons=epsilons,
            failed_trials=[list(f) for f in mse.failures],
            summability_proxy={harness.eps_label(e): sup.summability_proxy(harness.eps_label(e)) for e in epsilons},
            tolerances=dict(oracle_match=harness.ORACLE_MATCH_TOL, lp_bound_cushion=harness.LP_BOUND_CUSHION),
        ),
    )
    if not args.no_plots:
        paths.append(plotting.plot_mse(mse, out / "mse.png", title=generator))
        paths.append(plotting.plot_support(sup, out / "support.png"))
    _finish(args, out, generator, dict(n_grid=n_grid, methods=methods, trials=args.trials, epsilon=args.epsilon,
                                       gamma=args.gamma, epsilons=epsilons), paths)
    return EXIT_OK


def cmd_exp1(args) -> int:
    return _experiment(args, "exp1", EXP1_N_GRID, METHODS)


def cmd_exp2(args) -> int:
    return _experiment(args, "exp2", EXP2_N_GRID, (LSE, LP_RELSE, ORACLE_LSE))


def cmd_path(args) -> int:
    x_ls = np.array(args.x_ls or PATH_DEMO)
    grid = args.lambda_grid
    if grid is None:
        grid = list(np.linspace(0.0, float(np.max(np.abs(x_ls))) * 1.1, 45))
    values = solution_path(x_ls, grid)
    out = _out_dir(args)
    paths = [out / "path.csv"]
    write_table(paths[0], ["lambda"] + [f"x{k}" for k in range(x_ls.size)],
                [(lam, *row) for lam, row in zip(grid, values)])
    if not args.no_plots:
        paths.append(plotting.plot_path(grid, values, out / "path.png"))
    _finish(args, out, "path", dict(x_ls=list(map(float, x_ls)), lambda_grid=list(map(float, grid))), paths)
    return EXIT_OK


def _check_gram(args, out):
    grid = args.n_grid or [100, 1000, 10_000, 100_000]
    report = harness.check_gram_bounds(default_sinusoid_dict(max(grid)), grid)
    rows = [(r.n_obs, r.offdiag_violations, r.diag_violations, r.max_offdiag_ratio, r.min_diag_slack,
             r.gershgorin_empirical, r.gershgorin_analytic, r.lambda_min) for r in report.rows]
    header = ["N", "offdiag_violations", "diag_violations", "max_offdiag_ratio", "min_diag_slack",
              "gershgorin_empirical", "gershgorin_analytic", "lambda_min"]
    messages = []
    for r in report.rows:
        if r.offdiag_violations:
            messages.append(f"N={r.n_obs}: |(A^T A)_ij| <= C_ij fails, max ratio {r.max_offdiag_ratio!r} > 1")
        if r.diag_violations:
            messages.append(f"N={r.n_obs}: (A^T A)_ii >= N/2 - C_ii fails, slack {r.min_diag_slack!r} < 0")
        if r.n_obs >= 10_000 and not (r.lambda_min >= r.gershgorin_analytic > 0):
            messages.append(f"N={r.n_obs}: lambda_min {r.lambda_min!r} >= Gershgorin {r.gershgorin_analytic!r} > 0 fails")
    extra = [] if args.no_plots else [plotting.plot_gram(report, out / "gram.png")]
    return header, rows, messages, extra


def _check_lemma7(args, out):
    grid = args.n_grid or [50, 200]
    header = ["N", "trials", "feasible_trials", "violations", "max_ratio"]
    rows, messages = [], []
    config = _check_config(args)
    for n_obs in grid:
        feasible = violations = 0
        max_ratio = 0.0
        for p in harness.problem_stream("exp1", n_obs, args.trials, args.seed):
            trace = estimate(p.a, p.y, config)
            try:
                if harness.check_lp_error_bound(trace, p):
                    feasible += 1
                    err = float(np.sum((trace.x_lp - p.x_true) ** 2))
                    max_ratio = max(max_ratio, err / harness.lp_error_bound(p.sparsity, trace.lam))
            except harness.BoundViolation as exc:
                violations += 1
                messages.append(f"N={n_obs} seed={p.seed}: {exc}")
        rows.append((n_obs, args.trials, feasible, violations, max_ratio))
    return header, rows, messages, []


def _check_config(args) -> EstimatorConfig:
    if args.lam is not None:
        return EstimatorConfig(lambda_override=args.lam)
    return EstimatorConfig(epsilon=args.epsilon)


def _check_feasibility(args, out):
    grid = args.n_grid or [100]
    header = ["N", "trials", "frequency", "mean_bound", "mean_schedule_bound", "slack", "passed"]
    rows, messages = [], []
    for n_obs in grid:
        rep = harness.check_feasibility_bound(
            harness.problem_stream("exp1", n_obs, args.trials, args.seed), args.epsilon, args.lam
        )
        rows.append((n_obs, rep.trials, rep.frequency, rep.mean_bound, rep.mean_schedule_bound, rep.slack, rep.passed))
        if not rep.passed:
            messages.append(f"N={n_obs}: frequency {rep.frequency!r} >= bound - slack "
                            f"{rep.mean_bound - rep.slack!r} fails")
    return header, rows, messages, []


def _check_lemma1(args, out):
    grid = args.n_grid or [100]
    header = ["N", "trials", "max_deviation", "tolerance"]
    rows, messages = [], []
    for n_obs in grid:
        worst = 0.0
        for p in harness.problem_stream("exp1", n_obs, args.trials, args.seed):
            trace = estimate(p.a, p.y, _check_config(args))
            worst = max(worst, harness.lse_identity_deviation(p, trace.x_ls))
        rows.append((n_obs, args.trials, worst, harness.LSE_IDENTITY_TOL))
        if worst > harness.LSE_IDENTITY_TOL:
            messages.append(f"N={n_obs}: deviation {worst!r} <= {harness.LSE_IDENTITY_TOL!r} fails")
    return header, rows, messages, []


def _check_lemma2(args, out):
    grid = args.n_grid or [100]
    header = ["N", "trials", "mean_dev", "mean_band", "cov_dev", "cov_band", "passed"]
    rows, messages = [], []
    for n_obs in grid:
        rep = harness.check_whitened_gaussianity(harness.problem_stream("exp1", n_obs, args.trials, args.seed))
        rows.append((n_obs, rep.trials, rep.mean_dev, rep.mean_band, rep.cov_dev, rep.cov_band, rep.passed))
        if not rep.passed:
            messages.append(f"N={n_obs}: mean {rep.mean_dev!r} <= {rep.mean_band!r} and "
                            f"cov {rep.cov_dev!r} <= {rep.cov_band!r} fails")
    return header, rows, messages, []


CHECKS = {
    "gram": _check_gram,
    "lemma1": _check_lemma1,
    "lemma2": _check_lemma2,
    "feasibility": _check_feasibility,
    "lemma7": _check_lemma7,
}


def cmd_check(args) -> int:
    out = _out_dir(args)
    if args.which == "lemma2" and args.trials < 1000:
        raise UsageError("lemma2 needs --trials >= 1000")
    header, rows, messages, extra = CHECKS[args.which](args, out)
    path = out / f"check_{args.which}.csv"
    write_table(path, header, rows)
    _finish(args, out, f"check {args.which}",
            dict(which=args.which, n_grid=args.n_grid, trials=args.trials, epsilon=args.epsilon, lam=args.lam),
            [path, *extra])
    for msg in messages:
        print(f"VIOLATION {msg}", file=sys.stderr)
    print(f"check {args.which}: {'FAIL' if messages else 'PASS'}")
    return EXIT_CHECK if messages else EXIT_OK


def cmd_cv(args) -> int:
    params = ["epsilon", "gamma"] if args.param == "both" else [args.param]
    if args.candidates is not None and len(params) > 1:
        raise UsageError("--candidates needs a single --param")
    grid = args.n_grid or list(CV_N_GRID)
    out = _out_dir(args)
    results: dict[str, list[harness.CvGrid]] = {}
    loss_rows, err_rows = [], []
    for name in params:
        cands = args.candidates or list(CV_CANDIDATES[name])
        for n_obs in grid:
            g = harness.cross_validate(name, cands, n_obs, args.trials, args.seed, jobs=args.jobs)
            results.setdefault(name, []).append(g)
            for c, loss in zip(g.candidates, g.mean_losses):
                loss_rows.append((n_obs, name, c, loss, c == g.chosen, g.excluded))
            for t, (choice, err) in enumerate(zip(g.choices, g.test_errors)):
                err_rows.append((n_obs, name, t, choice, err))
    paths = [out / "cv.csv", out / "cv_test_errors.csv"]
    write_table(paths[0], ["N", "param", "candidate", "mean_val_loss", "chosen", "excluded"], loss_rows)
    write_table(paths[1], ["N", "param", "trial", "chosen_value", "test_sq_error"], err_rows)
    if not args.no_plots:
        paths.append(plotting.plot_cv_boxplots(results, out / "cv_boxplots.png"))
    _finish(args, out, "cv", dict(params=params, candidates=args.candidates, n_grid=grid, trials=args.trials), paths)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpsparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, trials=50):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--trials", type=_positive_int, default=trials)
        p.add_argument("--jobs", type=_positive_int, default=1)
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    p = sub.add_parser("generate", help="export a synthetic problem as a CSV bundle")
    p.add_argument("--experiment", choices=["exp1", "exp2"], default="exp1")
    p.add_argument("--n", "--N", dest="n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="run LSE -> soft-threshold -> re-LSE on a CSV bundle")
    p.add_argument("--input", required=True, help="bundle directory with A.csv and y.csv")
    p.add_argument("--epsilon", type=_fraction)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--noise-std", type=float, default=None, help="multiply the threshold by this noise std")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_estimate)

    for name, func, help_ in (("exp1", cmd_exp1, "correlated Gaussian design"), ("exp2", cmd_exp2, "sinusoid dictionary")):
        p = sub.add_parser(name, help=f"MSE and support-recovery curves, {help_}")
        common(p)
        p.add_argument("--n-grid", "--N", dest="n_grid", type=_ints)
        p.add_argument("--methods", type=_methods)
        p.add_argument("--epsilon", type=_fraction, default=1 / 3)
        p.add_argument("--epsilons", type=_floats, help="epsilons for the support-recovery curves")
        p.add_argument("--gamma", type=_fraction, default=1.0)
        p.set_defaults(func=func)

    p = sub.add_parser("path", help="soft-threshold solution path over a lambda grid")
    p.add_argument("--x-ls", type=_floats)
    p.add_argument("--lambda-grid", type=_floats)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("check", help="run one of the bound checkers")
    p.add_argument("which", choices=sorted(CHECKS))
    common(p, trials=1000)
    p.add_argument("--n-grid", "--N", dest="n_grid", type=_ints)
    p.add_argument("--epsilon", type=_fraction, default=1 / 3)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("cv", help="5-fold cross validation of epsilon (LP) and/or gamma (ADALASSO)")
    common(p, trials=100)
    p.add_argument("--param", choices=["epsilon", "gamma", "both"], default="both")
    p.add_argument("--candidates", type=_floats)
    p.add_argument("--n-grid", "--N", dest="n_grid", type=_ints)
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CsvParseError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficiencyError, NumericalFailureError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except harness.BoundViolation as exc:
        print(f"VIOLATION {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
