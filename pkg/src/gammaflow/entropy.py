"""KL-divergence estimation: closed form, quadrature, and histograms.

Three routes, in decreasing order of precision:

  * kl_gaussian    -- exact 1-D Gaussian-vs-Gaussian divergence;
  * kl_quadrature  -- adaptive quadrature of p log(p/q) for analytic densities;
  * kl_histogram   -- bin-averaged estimator for sample populations, the only
                      route available for empirically generated distributions.

The histogram estimator bins both sample sets on a common range and averages
the plug-in divergence over bin counts {n_bins-20, ..., n_bins}, which damps
the dependence on any single binning.  Its precision for 1e5-sample 1-D
populations is on the order of 5e-4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import mixture as mixture_mod

BIN_WINDOW = 20
DEFAULT_N_BINS = 100
RANGE_N_STD = 6.0

DIRECTION_QUALITY = "quality"    # H(generated | target): penalizes spurious mass
DIRECTION_COVERAGE = "coverage"  # H(target | generated): penalizes missed mass


class InsufficientSamplesError(ValueError):
    pass


class EmptyOverlapError(ValueError):
    pass


class ToleranceNotMetError(RuntimeError):
    pass


@dataclass(frozen=True)
class EntropyEstimate:
    """A KL estimate in nats, tagged with how it was obtained."""

    value: float
    method: str
    n_bins_range: tuple | None = None
    stderr_hint: float = 0.0


def kl_gaussian(mu0: float, var0: float, mu1: float, var1: float) -> float:
    """H(N(mu0, var0) | N(mu1, var1)) = (log(var1/var0) + (var0 + (mu0-mu1)^2)/var1 - 1)/2."""
    if var0 <= 0.0 or var1 <= 0.0:
        raise ValueError("variances must be positive")
    return 0.5 * (math.log(var1 / var0) + (var0 + (mu0 - mu1) ** 2) / var1 - 1.0)


def kl_quadrature(p_logdensity, q_logdensity, interval, tolerance: float = 1e-10,
                  points=None) -> float:
    """Adaptive quadrature of int p log(p/q) over a finite interval.

    The interval must cover essentially all of p's mass (>= 8 stddevs).
    Raises ToleranceNotMetError if the quadrature cannot certify the
    requested tolerance.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError("empty integration interval")

    def integrand(x):
        lp = p_logdensity(x)
        lq = q_logdensity(x)
        return math.exp(lp) * (lp - lq)

    result = integrate.quad(integrand, lo, hi, epsabs=tolerance, epsrel=tolerance,
                            limit=500, points=points, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 and abserr > max(tolerance, 1e-10 * abs(value)):
        raise ToleranceNotMetError(
            f"quadrature stalled: {result[3]} (abserr={abserr:.2e})"
        )
    return value


def _as_samples(obj) -> np.ndarray:
    pos = getattr(obj, "positions", obj)
    arr = np.asarray(pos, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def _axis_range(sp, sq):
    pooled = np.concatenate([sp, sq])
    center, spread = pooled.mean(), pooled.std()
    lo = max(pooled.min(), center - RANGE_N_STD * spread)
    hi = min(pooled.max(), center + RANGE_N_STD * spread)
    if not hi > lo:
        raise EmptyOverlapError("degenerate histogram range")
    return lo, hi


def _binned_kl_1d(sp, sq, bins, rng_):
    cp, _ = np.histogram(sp, bins=bins, range=rng_)
    cq, _ = np.histogram(sq, bins=bins, range=rng_)
    return _plugin_kl(cp, cq)


def _binned_kl_2d(sp, sq, bins, rng_):
    cp, _, _ = np.histogram2d(sp[:, 0], sp[:, 1], bins=bins, range=rng_)
    cq, _, _ = np.histogram2d(sq[:, 0], sq[:, 1], bins=bins, range=rng_)
    return _plugin_kl(cp.ravel(), cq.ravel())


def _plugin_kl(counts_p, counts_q):
    p = counts_p / counts_p.sum()
    q = counts_q / counts_q.sum()
    # empty q bins get a small additive floor, far below estimator precision
    eps = 1.0 / (10.0 * counts_q.sum())
    q = np.where(q > 0.0, q, eps)
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_histogram(samples_p, samples_q, n_bins: int = DEFAULT_N_BINS,
                 range_=None) -> EntropyEstimate:
    """Bin-averaged histogram KL of samples_p against samples_q.

    Supports 1-D and 2-D sample sets (2-D uses b x b product binning).  The
    binning range defaults to the union of both sample ranges clipped to the
    pooled mean +- 6 pooled stddevs, per axis.
    """
    sp = _as_samples(samples_p)
    sq = _as_samples(samples_q)
    if sp.shape[1] != sq.shape[1]:
        raise ValueError("sample sets have different dimensions")
    dim = sp.shape[1]
    if dim not in (1, 2):
        raise ValueError("histogram estimator supports 1-D and 2-D samples only")
    if min(len(sp), len(sq)) < 10_000:
        raise InsufficientSamplesError(
            f"need >= 10^4 samples per side, got {len(sp)} and {len(sq)}"
        )
    if n_bins <= BIN_WINDOW:
        raise ValueError(f"n_bins must exceed {BIN_WINDOW}")

    if range_ is None:
        range_ = [_axis_range(sp[:, k], sq[:, k]) for k in range(dim)]
    else:
        range_ = list(range_) if dim == 2 else [tuple(range_)]
        if len(range_) != dim:
            raise ValueError("range must give (lo, hi) per axis")

    # disjointness check at the base bin count
    binner = _binned_kl_1d if dim == 1 else _binned_kl_2d
    rng_arg = range_[0] if dim == 1 else range_
    if dim == 1:
        cp, _ = np.histogram(sp[:, 0], bins=n_bins, range=rng_arg)
        cq, _ = np.histogram(sq[:, 0], bins=n_bins, range=rng_arg)
    else:
        cp, _, _ = np.histogram2d(sp[:, 0], sp[:, 1], bins=n_bins, range=rng_arg)
        cq, _, _ = np.histogram2d(sq[:, 0], sq[:, 1], bins=n_bins, range=rng_arg)
    if not np.any((cp.ravel() > 0) & (cq.ravel() > 0)):
        raise EmptyOverlapError("sample supports are disjoint at the histogram scale")

    if dim == 1:
        sp1, sq1 = sp[:, 0], sq[:, 0]
        vals = [_binned_kl_1d(sp1, sq1, b, rng_arg)
                for b in range(n_bins - BIN_WINDOW, n_bins + 1)]
    else:
        vals = [_binned_kl_2d(sp, sq, b, rng_arg)
                for b in range(n_bins - BIN_WINDOW, n_bins + 1)]
    vals = np.asarray(vals)
    return EntropyEstimate(
        value=float(vals.mean()),
        method="histogram",
        n_bins_range=(n_bins - BIN_WINDOW, n_bins),
        stderr_hint=float(vals.std()),
    )


def entropy_evolution(populations, p0, process, direction: str = DIRECTION_QUALITY,
                      ref_count: int = 100_000, seed: int = 0,
                      n_bins: int = DEFAULT_N_BINS):
    """Histogram KL at each recorded population against fresh exact samples.

    For every population at forward time t, ref_count samples of the analytic
    marginal p_t are drawn (one independent stream per checkpoint) and the
    divergence is estimated in the requested direction: "quality" gives
    H(generated | p_t), "coverage" gives H(p_t | generated).

    Returns a list of (forward_time, EntropyEstimate), ordered like the input.
    """
    if direction not in (DIRECTION_QUALITY, DIRECTION_COVERAGE):
        raise ValueError(f"unknown direction {direction!r}")
    out = []
    for k, pop in enumerate(populations):
        ref_seed = np.random.SeedSequence([int(seed), 7_777, k]).generate_state(1)[0]
        ref = mixture_mod.diffuse(p0, process, pop.forward_time).sample(
            ref_count, int(ref_seed), forward_time=pop.forward_time
        )
        if direction == DIRECTION_QUALITY:
            est = kl_histogram(pop, ref, n_bins=n_bins)
        else:
            est = kl_histogram(ref, pop, n_bins=n_bins)
        out.append((pop.forward_time, est))
    return out


def write_entropy_csv(path, curve) -> None:
    """CSV columns: forward_time, estimate, method, n_bins_low, n_bins_high."""
    with open(path, "w") as fh:
        fh.write("forward_time,estimate,method,n_bins_low,n_bins_high\n")
        for t, est in curve:
            lo, hi = est.n_bins_range if est.n_bins_range else ("", "")
            fh.write(f"{t!r},{est.value!r},{est.method},{lo},{hi}\n")
