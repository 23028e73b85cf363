"""Experiment drivers: sampling runs, sweeps, and the interval grid search.

Every driver is deterministic given the config seed.  All cells of a sweep
share the master seed end to end (prior draw, step noise, reference samples):
zero-stochasticity cells are then bit-identical to the plain ODE run, and
cells differing only in gamma are compared under common random numbers.
"""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

import numpy as np

from .. import bounds as bounds_mod
from .. import entropy as entropy_mod
from .. import mixture as mixture_mod
from .. import score_net as score_net_mod
from ..population import write_population_csv
from ..sampler import constant_gamma, integrate, interval_gamma
from .config import (ExperimentConfig, build_dataset, build_grid, build_prior,
                     build_process, build_schedule, build_score_field)

REF_STREAM = 7_778  # reference-sample stream tag for final-KL estimates


def _ref_samples(p0, process, t, count, seed, tag=REF_STREAM):
    s = np.random.SeedSequence([int(seed), tag]).generate_state(1)[0]
    return mixture_mod.diffuse(p0, process, t).sample(count, int(s), forward_time=t)


def final_quality_kl(pop, p0, process, seed, n_bins=entropy_mod.DEFAULT_N_BINS):
    """Histogram KL of a final population against fresh data samples."""
    ref = _ref_samples(p0, process, pop.forward_time, max(pop.count, 100_000), seed)
    return entropy_mod.kl_histogram(pop, ref, n_bins=n_bins).value


def _git_sha():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def write_manifest(out_dir: Path, cfg: ExperimentConfig, extra=None) -> Path:
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "git_sha": _git_sha(),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _checkpoint_times(t_end: float, n: int) -> np.ndarray:
    return np.linspace(t_end, 0.0, n)


def _h_init_pair(prior, target, p0_dim):
    """(H(prior|target), H(target|prior)) by quadrature; 1-D only."""
    if p0_dim != 1:
        return None, None
    lo, hi = mixture_mod.evaluation_interval(target, n_std=10.0)
    lo2, hi2 = mixture_mod.evaluation_interval(prior, n_std=10.0)
    interval = (min(lo, lo2), max(hi, hi2))
    h_pq = entropy_mod.kl_quadrature(prior.log_density, target.log_density, interval,
                                     tolerance=1e-11)
    h_qp = entropy_mod.kl_quadrature(target.log_density, prior.log_density, interval,
                                     tolerance=1e-11)
    return h_pq, h_qp


def _interp_on_grid(grid_times, sample_times, sample_values):
    """Linear interpolation of per-time scalars onto descending grid nodes."""
    order = np.argsort(sample_times)
    return np.interp(grid_times, np.asarray(sample_times)[order],
                     np.asarray(sample_values)[order])


def run_sampling(cfg: ExperimentConfig, out_dir=None):
    """One sampling run: integrate, track both KL directions, attach bounds.

    Bound traces are anchored at the measured first-checkpoint estimate of
    the matching divergence, so bounds and measurements live on the same
    estimator scale (the histogram estimator carries a small positive
    sampling bias relative to the quadrature values, which are reported
    separately as h_init / h_init_rev).

    Writes final_samples.csv, entropy (quality/coverage) CSVs, bound CSVs,
    manifest and plots into out_dir; returns the in-memory results dict.
    """
    process = build_process(cfg)
    p0 = build_dataset(cfg)
    grid = build_grid(cfg, process)
    schedule = build_schedule(cfg)
    score = build_score_field(cfg, p0, process)
    t_end = grid.head

    prior = build_prior(cfg, p0, process, t_end)
    start = prior.sample(cfg.sample_count, cfg.seed, forward_time=t_end)

    record = _checkpoint_times(t_end, cfg.checkpoints)
    pops = integrate(start, process, score, schedule, grid, record_at=record)

    quality = entropy_mod.entropy_evolution(pops, p0, process,
                                            direction=entropy_mod.DIRECTION_QUALITY,
                                            seed=cfg.seed)
    coverage = entropy_mod.entropy_evolution(pops, p0, process,
                                             direction=entropy_mod.DIRECTION_COVERAGE,
                                             seed=cfg.seed)

    target_T = mixture_mod.diffuse(p0, process, t_end)
    h_init, h_init_rev = _h_init_pair(prior, target_T, p0.dim)
    h0_measured = quality[0][1].value
    h0_rev_measured = coverage[0][1].value

    traces = {}
    score_kind = dict(cfg.score).get("kind", "exact")
    if p0.n_components == 2:
        lsi = bounds_mod.two_component_profile(p0, process)
        traces["thm2"] = bounds_mod.thm2_bound(h0_measured, lsi, schedule, process, grid)
    if score_kind != "exact" and schedule.is_positive_everywhere():
        probe_times = np.linspace(t_end, max(1e-3, t_end / 200.0), 33)
        eps2_true = score_net_mod.score_error_profile(score, p0, process, probe_times,
                                                      count=4_096, seed=cfg.seed)
        eps2_true_grid = _interp_on_grid(grid.nodes, probe_times, eps2_true)
        traces["cor2"] = bounds_mod.cor2_bound(h0_rev_measured, schedule, process,
                                               grid, eps2_true_grid)
        eps2_gen = score_net_mod.score_error_on_populations(score, p0, process, pops)
        eps2_gen_grid = _interp_on_grid(grid.nodes, [p.forward_time for p in pops],
                                        eps2_gen)
        if p0.n_components == 2:
            lsi = bounds_mod.two_component_profile(p0, process)
            trace, ratio = bounds_mod.optimize_delta_ratio(
                h0_measured, lsi, schedule, process, grid, eps2_gen_grid
            )
            traces["thm4_delta"] = trace

    final_kl = final_quality_kl(pops[-1], p0, process, cfg.seed)
    results = {
        "populations": pops,
        "quality_curve": quality,
        "coverage_curve": coverage,
        "h_init": h_init,
        "h_init_rev": h_init_rev,
        "final_kl": final_kl,
        "traces": traces,
        "grid": grid,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_population_csv(out / "final_samples.csv", [pops[-1]])
        entropy_mod.write_entropy_csv(out / "entropy_quality.csv", quality)
        entropy_mod.write_entropy_csv(out / "entropy_coverage.csv", coverage)
        for name, trace in traces.items():
            trace.write_csv(out / f"bound_{name}.csv")
        write_manifest(out, cfg, extra={"h_init": h_init, "h_init_rev": h_init_rev})
        from .plots import plot_run

        plot_run(out)
        results["out_dir"] = out
    return results


def sweep_gamma_steps(cfg: ExperimentConfig, gammas, steps_list, out_dir=None):
    """Final KL per (gamma, n_steps); also keyed by the effective ratio gamma/n_steps."""
    process = build_process(cfg)
    p0 = build_dataset(cfg)
    score = build_score_field(cfg, p0, process)
    rows = []
    for n_steps in steps_list:
        sub = ExperimentConfig.from_dict({**cfg.to_dict(),
                                          "grid": {**cfg.grid, "n_steps": int(n_steps)}})
        grid = build_grid(sub, process)
        prior = build_prior(cfg, p0, process, grid.head)
        start = prior.sample(cfg.sample_count, cfg.seed, forward_time=grid.head)
        for gamma in gammas:
            pops = integrate(start, process, score, constant_gamma(float(gamma)), grid)
            kl = final_quality_kl(pops[-1], p0, process, cfg.seed)
            rows.append({"gamma": float(gamma), "n_steps": int(n_steps),
                         "gamma_over_steps": float(gamma) / int(n_steps),
                         "final_kl": kl})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows_csv(out / "sweep_gamma_steps.csv", rows,
                        ["gamma", "n_steps", "gamma_over_steps", "final_kl"])
        write_manifest(out, cfg, extra={"gammas": list(map(float, gammas)),
                                        "steps_list": list(map(int, steps_list))})
        from .plots import plot_gamma_sweep

        plot_gamma_sweep(out / "sweep_gamma_steps.csv", out / "sweep_gamma_steps.svg")
    return rows


def sweep_initial_time(cfg: ExperimentConfig, t_list, out_dir=None):
    """Initial and final KL when sampling starts at interior grid nodes.

    The grid is fixed by the config; each requested start time snaps to the
    nearest node.  Both the configured-gamma (SDE) and gamma=0 (ODE) runs are
    reported.
    """
    process = build_process(cfg)
    p0 = build_dataset(cfg)
    grid = build_grid(cfg, process)
    score = build_score_field(cfg, p0, process)
    gamma = float(dict(cfg.schedule).get("gamma", 1.0))
    rows = []
    for t_req in t_list:
        idx = grid.nearest_index(float(t_req))
        if idx >= len(grid.nodes) - 1:
            idx = len(grid.nodes) - 2
        t_start = float(grid.nodes[idx])
        prior = build_prior(cfg, p0, process, t_start)
        start = prior.sample(cfg.sample_count, cfg.seed, forward_time=t_start)
        h_init, _ = _h_init_pair(prior, mixture_mod.diffuse(p0, process, t_start), p0.dim)
        finals = {}
        for label, gam in (("sde", gamma), ("ode", 0.0)):
            pops = integrate(start, process, score, constant_gamma(gam), grid)
            finals[label] = final_quality_kl(pops[-1], p0, process, cfg.seed)
        rows.append({"requested_t": float(t_req), "start_node": t_start,
                     "h_init": h_init, "final_sde": finals["sde"],
                     "final_ode": finals["ode"]})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows_csv(out / "sweep_initial_time.csv", rows,
                        ["requested_t", "start_node", "h_init", "final_sde", "final_ode"])
        write_manifest(out, cfg, extra={"t_list": list(map(float, t_list))})
        from .plots import plot_time_sweep

        plot_time_sweep(out / "sweep_initial_time.csv", out / "sweep_initial_time.svg")
    return rows


def grid_search_interval(cfg: ExperimentConfig, s_values=None, gamma: float = 2.0,
                         out_dir=None):
    """Final KL over stochasticity windows [s_min, s_max] within the run.

    Returns a dict with the s grid, the upper-triangular KL matrix (NaN below
    the diagonal), the optimal cell, and entropy-evolution curves for the
    ODE, the full-window SDE, and the optimal window.  Diagonal cells have a
    measure-zero window and reproduce the ODE run exactly.
    """
    process = build_process(cfg)
    p0 = build_dataset(cfg)
    grid = build_grid(cfg, process)
    score = build_score_field(cfg, p0, process)
    t_end = grid.head
    if s_values is None:
        s_values = np.linspace(0.0, t_end, 6)
    s_values = np.asarray(s_values, dtype=float)

    prior = build_prior(cfg, p0, process, t_end)
    start = prior.sample(cfg.sample_count, cfg.seed, forward_time=t_end)

    m = len(s_values)
    matrix = np.full((m, m), np.nan)
    for i in range(m):
        for j in range(i, m):
            schedule = interval_gamma(gamma, s_values[i], s_values[j])
            pops = integrate(start, process, score, schedule, grid)
            matrix[i, j] = final_quality_kl(pops[-1], p0, process, cfg.seed)

    best_i, best_j = np.unravel_index(np.nanargmin(matrix), matrix.shape)
    record = _checkpoint_times(t_end, cfg.checkpoints)

    def curve_for(schedule):
        pops = integrate(start, process, score, schedule, grid, record_at=record)
        return entropy_mod.entropy_evolution(pops, p0, process, seed=cfg.seed)

    curves = {
        "ode": curve_for(constant_gamma(0.0)),
        "sde": curve_for(constant_gamma(gamma)),
        "optimal": curve_for(interval_gamma(gamma, s_values[best_i], s_values[best_j])),
    }
    result = {"s_values": s_values, "matrix": matrix,
              "optimal": (float(s_values[best_i]), float(s_values[best_j])),
              "optimal_kl": float(matrix[best_i, best_j]), "curves": curves}

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = "s_min\\s_max," + ",".join(f"{s:.6g}" for s in s_values)
        lines = [header]
        for i in range(m):
            cells = ",".join("" if np.isnan(matrix[i, j]) else repr(matrix[i, j])
                             for j in range(m))
            lines.append(f"{s_values[i]:.6g},{cells}")
        (out / "interval_grid.csv").write_text("\n".join(lines) + "\n")
        for name, curve in curves.items():
            entropy_mod.write_entropy_csv(out / f"entropy_{name}.csv", curve)
        write_manifest(out, cfg, extra={"gamma": gamma,
                                        "optimal": result["optimal"],
                                        "optimal_kl": result["optimal_kl"]})
        from .plots import plot_interval_grid

        plot_interval_grid(out / "interval_grid.csv", out / "interval_grid.svg")
    return result


def _write_rows_csv(path, rows, cols):
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if row[c] is not None else ""
                              for c in cols) + "\n")
