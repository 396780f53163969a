"""Report figures written next to the CSV outputs (Agg backend, PNG)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps reruns byte-stable
_SAVE_KW = dict(dpi=120, metadata={"Software": None})

STYLE = {
    "LSE": dict(color="0.45", marker="o", ls="--"),
    "LP_RELSE": dict(color="C3", marker="s", ls="-"),
    "ORACLE_LSE": dict(color="k", marker="", ls=":"),
    "LASSO": dict(color="C0", marker="^", ls="-."),
    "ADALASSO": dict(color="C2", marker="v", ls="-"),
}

LABELS = {"LP_RELSE": "LP + RE-LSE", "ORACLE_LSE": "ORACLE-LSE"}


def _finish(fig, ax, path) -> Path:
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_mse(report, path, title: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    by_method: dict[str, list[tuple[int, float]]] = {}
    for n_obs, method, mse, _ in report.mse_rows():
        by_method.setdefault(method, []).append((n_obs, mse))
    for method, pts in by_method.items():
        n, v = zip(*sorted(pts))
        ax.semilogy(n, v, label=LABELS.get(method, method), **STYLE.get(method, {}))
    ax.set_xlabel("N")
    ax.set_ylabel("MSE")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_support(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = sorted({r.method for r in report.records})
    for label in labels:
        pts = sorted(report.portions(label).items())
        n, p = zip(*pts)
        ax.plot(n, p, marker="o", label=label)
    ax.set_xlabel("N")
    ax.set_ylabel("portion")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_path(grid, path_values, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    path_values = np.asarray(path_values)
    for k in range(path_values.shape[1]):
        ax.plot(grid, path_values[:, k], label=f"x[{k}]")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("lambda")
    ax.set_ylabel("x_lp")
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)


def plot_cv_boxplots(results, path) -> Path:
    """``results`` maps param name -> list of CvGrid over N; one panel per param."""
    params = sorted(results)
    fig, axes = plt.subplots(1, len(params), figsize=(5 * len(params), 4), squeeze=False)
    for ax, name in zip(axes[0], params):
        grids = results[name]
        data = [g.test_errors if g.test_errors else [np.nan] for g in grids]
        ax.boxplot(data, tick_labels=[str(g.n_obs) for g in grids])
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel("||x_hat - x0||^2")
        ax.set_title("LP + RE-LSE (epsilon)" if name == "epsilon" else "ADALASSO (gamma)")
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_gram(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    n = [r.n_obs for r in report.rows]
    ax.loglog(n, [r.lambda_min for r in report.rows], "o-", label="lambda_min(A^T A)")
    pos = [(r.n_obs, r.gershgorin_analytic) for r in report.rows if r.gershgorin_analytic > 0]
    if pos:
        ax.loglog(*zip(*pos), "s--", label="Gershgorin bound (closed form)")
    ax.loglog(n, [x / 2 for x in n], "k:", label="N/2")
    ax.set_xlabel("N")
    ax.legend(fontsize=8)
    return _finish(fig, ax, path)
