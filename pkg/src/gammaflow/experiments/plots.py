"""Static vector plots rendered from the CSV artifacts (no display server)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class MissingInputError(FileNotFoundError):
    pass


def _read_csv(path):
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing CSV input: {path}")
    with open(path) as fh:
        return list(csv.DictReader(fh))


def plot_entropy_curves(curve_paths, out_path, bound_paths=()):
    """Line plot of KL evolution curves, optionally overlaid with bound traces."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in curve_paths:
        rows = _read_csv(path)
        t = np.array([float(r["forward_time"]) for r in rows])
        v = np.array([float(r["estimate"]) for r in rows])
        order = np.argsort(-t)
        ax.plot(t[order], v[order], marker="o", label=label)
    for label, path in bound_paths:
        rows = _read_csv(path)
        t = np.array([float(r["forward_time"]) for r in rows])
        v = np.array([float(r["bound_value"]) for r in rows])
        order = np.argsort(-t)
        ax.plot(t[order], v[order], linestyle="--", label=label)
    ax.set_xlabel("forward time t")
    ax.set_ylabel("KL divergence (nats)")
    ax.invert_xaxis()  # sampling runs right to left in forward time
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_run(run_dir):
    """Standard plot set for a run_sampling output directory."""
    run_dir = Path(run_dir)
    curves = [("H(generated|target)", run_dir / "entropy_quality.csv")]
    cov = run_dir / "entropy_coverage.csv"
    if cov.exists():
        curves.append(("H(target|generated)", cov))
    bounds = [(p.stem.replace("bound_", "bound "), p)
              for p in sorted(run_dir.glob("bound_*.csv"))]
    return plot_entropy_curves(curves, run_dir / "entropy_evolution.svg",
                               bound_paths=bounds)


def plot_gamma_sweep(csv_path, out_path):
    """Final KL vs gamma (left) and vs gamma/n_steps (right), one line per n_steps."""
    rows = _read_csv(csv_path)
    by_steps = {}
    for r in rows:
        by_steps.setdefault(int(r["n_steps"]), []).append(
            (float(r["gamma"]), float(r["gamma_over_steps"]), float(r["final_kl"]))
        )
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for n_steps, pts in sorted(by_steps.items()):
        pts.sort()
        g = [p[0] for p in pts]
        eff = [p[1] for p in pts]
        kl = [p[2] for p in pts]
        ax1.plot(g, kl, marker="o", label=f"n_steps={n_steps}")
        ax2.plot(eff, kl, marker="o", label=f"n_steps={n_steps}")
    for ax, xlabel in ((ax1, "gamma"), (ax2, "gamma / n_steps")):
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("final KL")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_time_sweep(csv_path, out_path):
    rows = _read_csv(csv_path)
    t = np.array([float(r["start_node"]) for r in rows])
    order = np.argsort(t)
    fig, ax = plt.subplots(figsize=(6, 4))
    for col, label in (("h_init", "initial KL"), ("final_sde", "final KL (SDE)"),
                       ("final_ode", "final KL (ODE)")):
        vals = np.array([float(r[col]) if r[col] else np.nan for r in rows])
        ax.plot(t[order], vals[order], marker="o", label=label)
    ax.set_xlabel("start time T")
    ax.set_ylabel("KL divergence (nats)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_interval_grid(csv_path, out_path):
    """Heatmap of the final KL over stochasticity windows; diagonal is the ODE."""
    path = Path(csv_path)
    if not path.exists():
        raise MissingInputError(f"missing CSV input: {path}")
    lines = path.read_text().strip().splitlines()
    s_values = [float(x) for x in lines[0].split(",")[1:]]
    m = len(s_values)
    matrix = np.full((m, m), np.nan)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")[1:]
        for j, cell in enumerate(cells):
            if cell:
                matrix[i, j] = float(cell)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.imshow(matrix, origin="lower", cmap="viridis")
    ax.set_xticks(range(m), [f"{s:.2g}" for s in s_values])
    ax.set_yticks(range(m), [f"{s:.2g}" for s in s_values])
    ax.set_xlabel("s_max")
    ax.set_ylabel("s_min")
    for i in range(m):
        ax.text(i, i, "ODE", ha="center", va="center", fontsize=7, color="white")
    fig.colorbar(im, ax=ax, label="final KL")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_analytic_sweep(csv_path, out_path):
    """Final KL distribution per gamma for the closed-form example sweep."""
    rows = _read_csv(csv_path)
    by_gamma = {}
    for r in rows:
        by_gamma.setdefault(float(r["gamma"]), []).append(float(r["final_kl"]))
    gammas = sorted(by_gamma)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([by_gamma[g] for g in gammas], tick_labels=[f"{g:g}" for g in gammas])
    ax.set_yscale("log")
    ax.set_xlabel("gamma")
    ax.set_ylabel("final KL across parameter grid")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)
