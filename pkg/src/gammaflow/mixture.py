"""Gaussian-mixture data distributions, their diffused marginals, and scores.

A mixture of spherical Gaussians  p(x) = sum_l w_l N(x; mu_l, sd_l^2 I)
stays in the same family under any of the linear forward processes:

    p_t = sum_l w_l N(s(t) mu_l, s(t)^2 (sd_l^2 + sigma(t)^2) I),

so densities and scores of every diffused marginal are exact.  All density
and score evaluations work in log space (responsibilities via max-subtracted
softmax) so that tail points far from every mean stay finite; score values
feed long SDE runs where tail errors would otherwise accumulate.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .population import ParticlePopulation
from .processes import ForwardProcess

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted mixture of spherical Gaussian components.

    weights: (K,) strictly positive, summing to 1 within 1e-12.
    means:   (K, n).
    stddevs: (K,) strictly positive (one spherical stddev per component).
    """

    weights: np.ndarray
    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sd = np.asarray(self.stddevs, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if w.ndim != 1 or sd.ndim != 1 or mu.ndim != 2:
            raise ValueError("weights/stddevs must be 1-D, means (K, n)")
        if not (len(w) == len(sd) == mu.shape[0]):
            raise ValueError("component count mismatch")
        if np.any(w <= 0.0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {w.sum()!r}")
        if np.any(sd <= 0.0):
            raise ValueError("component stddevs must be positive")
        if not np.all(np.isfinite(mu)):
            raise ValueError("component means must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stddevs", sd)
        object.__setattr__(self, "_log_norm",
                           np.log(w) - 0.5 * mu.shape[1] * (_LOG_2PI + 2.0 * np.log(sd)))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance_trace(self) -> float:
        """tr Cov = sum_l w_l (n sd_l^2 + |mu_l - mean|^2)."""
        m = self.mean()
        spread = np.sum((self.means - m) ** 2, axis=1)
        return float(np.sum(self.weights * (self.dim * self.stddevs**2 + spread)))

    def marginal_std(self) -> float:
        """Per-axis stddev scale used for plotting/binning windows (1-D exact)."""
        return np.sqrt(self.covariance_trace() / self.dim)

    def _weighted_logpdf_columns(self, x: np.ndarray) -> list:
        # x: (m, n) -> K flat arrays of log(w_l N_l(x)); flat per-component
        # columns sidestep slow short-axis reductions on large batches
        cols = []
        for l in range(self.n_components):
            d = x - self.means[l]
            sq = d[:, 0] ** 2 if self.dim == 1 else np.einsum("ij,ij->i", d, d)
            cols.append(self._log_norm[l] - sq / (2.0 * self.stddevs[l] ** 2))
        return cols

    def log_density(self, x) -> np.ndarray:
        """log p(x) by log-sum-exp over components; finite for any finite x."""
        x, single = _as_batch(x, self.dim)
        cols = self._weighted_logpdf_columns(x)
        top = cols[0] if len(cols) == 1 else functools.reduce(np.maximum, cols)
        total = sum(np.exp(c - top) for c in cols)
        out = top + np.log(total)
        return out[0] if single else out

    def density(self, x) -> np.ndarray:
        return np.exp(self.log_density(x))

    def score(self, x) -> np.ndarray:
        """grad log p(x) = sum_l r_l(x) (mu_l - x)/sd_l^2 with responsibilities r."""
        x, single = _as_batch(x, self.dim)
        cols = self._weighted_logpdf_columns(x)
        top = cols[0] if len(cols) == 1 else functools.reduce(np.maximum, cols)
        resp = [np.exp(c - top) for c in cols]
        denom = sum(resp)
        out = np.zeros_like(x)
        for l in range(self.n_components):
            out += (resp[l] / denom)[:, None] * ((self.means[l] - x) / self.stddevs[l] ** 2)
        return out[0] if single else out

    def sample(self, count: int, seed, forward_time: float = 0.0) -> ParticlePopulation:
        """i.i.d. draws: categorical over weights, then the component Gaussian."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = _as_rng(seed)
        idx = rng.choice(self.n_components, size=count, p=self.weights)
        noise = rng.standard_normal((count, self.dim))
        positions = self.means[idx] + self.stddevs[idx, None] * noise
        return ParticlePopulation(positions, forward_time, _seed_int(seed))


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if dim != 1:
            raise ValueError("scalar input only valid for 1-D mixtures")
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if dim == 1:
            # a vector of 1-D evaluation points
            return x[:, None], False
        if x.shape[0] != dim:
            raise ValueError(f"point has dim {x.shape[0]}, mixture has dim {dim}")
        return x[None, :], True
    if x.shape[1] != dim:
        raise ValueError(f"points have dim {x.shape[1]}, mixture has dim {dim}")
    return x, False


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_int(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else 0


def default_dataset() -> GaussianMixture:
    """The 1-D two-component benchmark mixture.

    0.1 N(-1, 0.2^2) + 0.9 N(0.1, 0.1^2): a small far mode next to a dominant
    sharp one, so both sample quality and coverage matter.
    """
    return GaussianMixture(
        weights=np.array([0.1, 0.9]),
        means=np.array([[-1.0], [0.1]]),
        stddevs=np.array([0.2, 0.1]),
    )


def default_dataset_2d() -> GaussianMixture:
    """A 2-D two-component spherical mixture preset (parameters configurable)."""
    return GaussianMixture(
        weights=np.array([0.3, 0.7]),
        means=np.array([[-1.0, -1.0], [0.5, 0.5]]),
        stddevs=np.array([0.3, 0.2]),
    )


def diffuse(p0: GaussianMixture, process: ForwardProcess, t: float) -> GaussianMixture:
    """The forward marginal p_t of mixture data under a linear process.

    Component-wise: mu_l -> s(t) mu_l and sd_l^2 -> s(t)^2 (sd_l^2 + sigma(t)^2);
    weights are unchanged.
    """
    if t < 0.0:
        raise ValueError("forward time must be >= 0")
    s = float(process.scale(t))
    sig = float(process.noise_level(t))
    return GaussianMixture(
        weights=p0.weights,
        means=s * p0.means,
        stddevs=s * np.sqrt(p0.stddevs**2 + sig**2),
    )


def gaussian_prior(process: ForwardProcess, t: float, dim: int = 1) -> GaussianMixture:
    """The easy-to-sample prior N(0, s(t)^2 sigma(t)^2 I) as a one-component mixture."""
    std = float(process.marginal_std(t))
    if std <= 0.0:
        raise ValueError("prior undefined at t=0 (zero noise level)")
    return GaussianMixture(
        weights=np.array([1.0]),
        means=np.zeros((1, dim)),
        stddevs=np.array([std]),
    )


def evaluation_interval(p: GaussianMixture, n_std: float = 10.0):
    """An interval (per axis: the widest) covering every component by n_std stddevs."""
    lo = np.min(p.means - n_std * p.stddevs[:, None])
    hi = np.max(p.means + n_std * p.stddevs[:, None])
    return float(lo), float(hi)
