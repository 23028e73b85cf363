"""Experiment configuration: a small YAML schema plus builders.

Schema (all keys optional unless noted):

    process:      {kind: edm|ve|vp, beta1: float, beta2: float}
    dataset:      default | default_2d | {components: [[weight, [mean...], stddev], ...]}
    prior:        exact | gaussian
    score:        {kind: exact}                                   (default)
                  {kind: learned, checkpoint: path}
                  {kind: parametric, mu_theta: f, alpha_theta: f, sigma0: f}
    schedule:     {gamma: float}                                  constant
                  {gamma: float, s_min: float, s_max: float}      interval
    grid:         {t_end: float, n_steps: int, sigma_min: float, rho: float}
    sample_count: int     (default 100000)
    checkpoints:  int     (default 6; entropy-evolution recording times)
    seed:         int
    out_dir:      path
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import mixture as mixture_mod
from ..processes import make_process
from ..sampler import GammaSchedule, constant_gamma, interval_gamma, time_grid_for_process


@dataclass
class ExperimentConfig:
    process: dict = field(default_factory=lambda: {"kind": "edm"})
    dataset: object = "default"
    prior: str = "gaussian"
    score: dict = field(default_factory=lambda: {"kind": "exact"})
    schedule: dict = field(default_factory=lambda: {"gamma": 1.0})
    grid: dict = field(default_factory=lambda: {"t_end": 0.75, "n_steps": 500,
                                                "sigma_min": 0.002, "rho": 7.0})
    sample_count: int = 100_000
    checkpoints: int = 6
    seed: int = 0
    out_dir: str = "out"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return ExperimentConfig.from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def build_process(cfg: ExperimentConfig):
    spec = dict(cfg.process)
    kind = spec.pop("kind", "edm")
    return make_process(kind, **spec)


def build_dataset(cfg: ExperimentConfig) -> mixture_mod.GaussianMixture:
    spec = cfg.dataset
    if spec == "default" or spec is None:
        return mixture_mod.default_dataset()
    if spec == "default_2d":
        return mixture_mod.default_dataset_2d()
    comps = spec["components"]
    weights = np.array([c[0] for c in comps], dtype=float)
    means = np.array([np.atleast_1d(c[1]) for c in comps], dtype=float)
    stddevs = np.array([c[2] for c in comps], dtype=float)
    return mixture_mod.GaussianMixture(weights, means, stddevs)


def build_schedule(cfg: ExperimentConfig) -> GammaSchedule:
    spec = dict(cfg.schedule)
    gamma = float(spec.get("gamma", 0.0))
    if "s_min" in spec or "s_max" in spec:
        return interval_gamma(gamma, float(spec["s_min"]), float(spec["s_max"]))
    return constant_gamma(gamma)


def build_grid(cfg: ExperimentConfig, process):
    spec = dict(cfg.grid)
    return time_grid_for_process(
        process,
        t_end=float(spec.get("t_end", 0.75)),
        n_steps=int(spec.get("n_steps", 500)),
        sigma_min=float(spec.get("sigma_min", 0.002)),
        rho=float(spec.get("rho", 7.0)),
    )


def build_score_field(cfg: ExperimentConfig, p0, process):
    from ..sampler import MixtureScore, ParametricGaussianScore
    from ..score_net import NetScore, load_checkpoint

    spec = dict(cfg.score)
    kind = spec.get("kind", "exact")
    if kind == "exact":
        return MixtureScore(p0, process)
    if kind == "learned":
        path = spec.get("checkpoint")
        if not path:
            raise ValueError("learned score requires a checkpoint path")
        return NetScore(load_checkpoint(path))
    if kind == "parametric":
        return ParametricGaussianScore(
            process,
            mu_theta=float(spec["mu_theta"]),
            alpha_theta=float(spec["alpha_theta"]),
            sigma0=float(spec["sigma0"]),
        )
    raise ValueError(f"unknown score kind {kind!r}")


def build_prior(cfg: ExperimentConfig, p0, process, t_end):
    if cfg.prior == "exact":
        return mixture_mod.diffuse(p0, process, t_end)
    if cfg.prior == "gaussian":
        return mixture_mod.gaussian_prior(process, t_end, dim=p0.dim)
    raise ValueError(f"unknown prior {cfg.prior!r}")
