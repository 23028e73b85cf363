"""Command-line harness.

    gammaflow sample         --config cfg.yaml [--seed N] [--out-dir DIR]
    gammaflow sweep-gamma    --config cfg.yaml --gammas 0.5,1,2 --steps 125,250,500
    gammaflow sweep-time     --config cfg.yaml --times 0.1,0.2,0.4,0.75
    gammaflow grid-interval  --config cfg.yaml [--gamma 2.0] [--s-grid 0,0.15,...]
    gammaflow analytic-sweep [--gammas 0,1,5,20] --out-dir DIR
    gammaflow train-score    --config cfg.yaml --out model.npz [--steps N] ...
    gammaflow plot           --dir DIR

All numeric outputs are CSV with a header row; every command writes a
manifest (config echo, seed, git sha) next to its artifacts and exits
nonzero on any error.
"""

from __future__ import annotations

import argparse
import os
import sys


def _add_common(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", help="override the config output directory")
    p.add_argument("--threads", type=int,
                   help="BLAS/OpenMP thread hint (applied before numpy is loaded)")


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="gammaflow", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="single sampling run with KL tracking and bounds")
    _add_common(p)

    p = sub.add_parser("sweep-gamma", help="final KL over (gamma, n_steps)")
    _add_common(p)
    p.add_argument("--gammas", default="0.5,1,2,5,10,20")
    p.add_argument("--steps", default="125,250,500,1000")

    p = sub.add_parser("sweep-time", help="effect of the start time on final KL")
    _add_common(p)
    p.add_argument("--times", required=True)

    p = sub.add_parser("grid-interval", help="grid search over stochasticity windows")
    _add_common(p)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--s-grid", help="comma-separated window endpoints (default 6 over [0, T])")

    p = sub.add_parser("analytic-sweep", help="closed-form example parameter sweep")
    _add_common(p)
    p.add_argument("--gammas", default="0,1,5,20")

    p = sub.add_parser("train-score", help="train the dense score model on the config dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--hidden", default="100,100,100")
    p.add_argument("--activation", default="silu", choices=["silu", "relu", "softplus"])
    p.add_argument("--steps", type=int, default=8000)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--train-samples", type=int, default=100_000)

    p = sub.add_parser("plot", help="re-render plots from a results directory")
    _add_common(p)
    p.add_argument("--dir", required=True)

    return parser


def _load_config(args):
    from .config import ExperimentConfig, load_config

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    return cfg


def _run(args) -> int:
    from .config import build_dataset, build_process

    command = args.command
    if command == "plot":
        return _replot(args.dir)

    cfg = _load_config(args)
    out = cfg.out_dir

    if command == "sample":
        from .runner import run_sampling

        res = run_sampling(cfg, out_dir=out)
        q = res["quality_curve"]
        print(f"wrote {res['out_dir']}; initial KL={q[0][1].value:.4g}, "
              f"final KL={q[-1][1].value:.4g}")
    elif command == "sweep-gamma":
        from .runner import sweep_gamma_steps

        rows = sweep_gamma_steps(cfg, _parse_floats(args.gammas),
                                 [int(s) for s in _parse_floats(args.steps)],
                                 out_dir=out)
        print(f"wrote {out}/sweep_gamma_steps.csv ({len(rows)} rows)")
    elif command == "sweep-time":
        from .runner import sweep_initial_time

        rows = sweep_initial_time(cfg, _parse_floats(args.times), out_dir=out)
        print(f"wrote {out}/sweep_initial_time.csv ({len(rows)} rows)")
    elif command == "grid-interval":
        from .runner import grid_search_interval

        s_values = _parse_floats(args.s_grid) if args.s_grid else None
        res = grid_search_interval(cfg, s_values=s_values, gamma=args.gamma,
                                   out_dir=out)
        print(f"wrote {out}/interval_grid.csv; optimal window "
              f"{res['optimal']} with final KL {res['optimal_kl']:.4g}")
    elif command == "analytic-sweep":
        from pathlib import Path

        from ..analytic import sweep, write_sweep_csv
        from .plots import plot_analytic_sweep

        out_path = Path(out)
        out_path.mkdir(parents=True, exist_ok=True)
        rows = sweep(gammas=tuple(_parse_floats(args.gammas)))
        write_sweep_csv(out_path / "analytic_sweep.csv", rows)
        plot_analytic_sweep(out_path / "analytic_sweep.csv",
                            out_path / "analytic_sweep.svg")
        print(f"wrote {out_path / 'analytic_sweep.csv'} ({len(rows)} rows)")
    elif command == "train-score":
        from pathlib import Path

        from ..score_net import TrainConfig, init_mlp, save_checkpoint, train

        process = build_process(cfg)
        p0 = build_dataset(cfg)
        data = p0.sample(args.train_samples, cfg.seed).positions
        hidden = tuple(int(h) for h in _parse_floats(args.hidden))
        model = init_mlp(p0.dim, hidden=hidden, activation=args.activation,
                         seed=cfg.seed)
        t_end = float(dict(cfg.grid).get("t_end", 0.75))
        tc = TrainConfig(t_max=t_end, steps=args.steps, batch_size=args.batch,
                         learning_rate=args.lr, seed=cfg.seed)
        model, history = train(model, data, process, tc)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(model, args.out)
        tail = history[-100:].mean() if len(history) else float("nan")
        print(f"wrote {args.out}; mean loss over last 100 steps: {tail:.4g}")
    else:
        raise ValueError(f"unhandled command {command!r}")
    return 0


def _replot(directory) -> int:
    from pathlib import Path

    from . import plots

    d = Path(directory)
    made = []
    if (d / "entropy_quality.csv").exists():
        made.append(plots.plot_run(d))
    if (d / "sweep_gamma_steps.csv").exists():
        made.append(plots.plot_gamma_sweep(d / "sweep_gamma_steps.csv",
                                           d / "sweep_gamma_steps.svg"))
    if (d / "sweep_initial_time.csv").exists():
        made.append(plots.plot_time_sweep(d / "sweep_initial_time.csv",
                                          d / "sweep_initial_time.svg"))
    if (d / "interval_grid.csv").exists():
        made.append(plots.plot_interval_grid(d / "interval_grid.csv",
                                             d / "interval_grid.svg"))
    if (d / "analytic_sweep.csv").exists():
        made.append(plots.plot_analytic_sweep(d / "analytic_sweep.csv",
                                              d / "analytic_sweep.svg"))
    if not made:
        raise plots.MissingInputError(f"no plottable CSV artifacts in {d}")
    print("rendered: " + ", ".join(str(p) for p in made))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    try:
        return _run(args)
    except Exception as exc:  # CLI contract: nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
