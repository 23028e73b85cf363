"""Log-Sobolev constants and KL decay/growth bounds along sampling.

Writing tau for reverse time, C(s) = 1/C_LSI(s) for the log-Sobolev constant
of the true marginal at reverse time s (and C(s) = 0 where no LSI constant is
known), gamma(s) for the stochasticity weight and gbar(s) for the diffusion
coefficient, the implemented bound traces are

  decay (exact score):
      H(tau) <= exp(-int_0^tau C g^2 gamma) * H(0)

  perturbed, cross-term form (score error eps, h = generated/true density):
      H(tau) <= exp(-int alpha) H(0)
                + (1/2) int_0^tau g^2 (1+gamma) E[eps . grad log h]
                          exp(-int_s^tau alpha) ds,     alpha = C gamma g^2

  perturbed, second-moment form (any 0 < delta(s) <= gamma(s)):
      H(tau) <= exp(-int alpha_d) H(0)
                + (1/8) int_0^tau (1/delta) g^2 (1+gamma)^2 E[|eps|^2]
                          exp(-int_s^tau alpha_d) ds,
      alpha_d = C g^2 (gamma - delta)

  reverse direction (no decay factor, gamma > 0):
      H_rev(tau) <= H_rev(0) + (1/8) int_0^tau g^2 (1+gamma)^2 / gamma
                                      E_true[|eps|^2] ds

All integrals are accumulated by trapezoid on the sampler's own time grid so
bounds and measurements line up on checkpoints; the trapezoid error is second
order and dominated by estimator noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mixture import GaussianMixture, diffuse
from .processes import ForwardProcess
from .sampler import GammaSchedule, TimeGrid


class DivergenceUndefinedError(ValueError):
    """The chi-square divergence integral does not converge."""


class InvalidScheduleError(ValueError):
    """The schedule violates a bound's positivity requirement."""


# --- chi-square and log-Sobolev constants -----------------------------------

def chi2_spherical(mu0, var0, mu1, var1, n: int | None = None) -> float:
    """chi^2(N(mu0, var0 I) || N(mu1, var1 I)) for spherical Gaussians.

    Closed form, valid iff 2 var1 > var0:

        chi^2 + 1 = (var1^2 / (var0 (2 var1 - var0)))^(n/2)
                    * exp(|mu0 - mu1|^2 / (2 var1 - var0)).

    This expression is the one validated against the quadrature oracle
    int p0^2/p1 - 1 (it is exact; in particular chi^2(p||p) = 0).
    """
    if var0 <= 0.0 or var1 <= 0.0:
        raise ValueError("variances must be positive")
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    if mu0.shape != mu1.shape:
        raise ValueError("means must have the same shape")
    if n is None:
        n = mu0.size
    den = 2.0 * var1 - var0
    if den <= 0.0:
        raise DivergenceUndefinedError(
            f"chi^2 undefined: need 2*var1 > var0, got var0={var0}, var1={var1}"
        )
    d2 = float(np.sum((mu0 - mu1) ** 2))
    log_val = 0.5 * n * (2.0 * math.log(var1) - math.log(var0) - math.log(den)) + d2 / den
    try:
        return math.expm1(log_val)
    except OverflowError:
        # the divergence exists but is astronomically large; callers treat
        # an infinite chi^2 as "no usable constant from this branch"
        return math.inf


def lambda_weight(p: float) -> float:
    """(log p - log(1-p)) / (2p - 1), continuously extended to 2 at p = 1/2."""
    if not 0.0 < p < 1.0:
        raise ValueError("weight must be strictly inside (0, 1)")
    u = 2.0 * p - 1.0
    if abs(u) < 1e-6:
        return 2.0 * (1.0 + u * u / 3.0)
    return (math.log(p) - math.log1p(-p)) / u


def lsi_two_component(p: float, comp0, comp1) -> float:
    """Log-Sobolev constant bound for the mixture p N0 + (1-p) N1.

    With lam = lambda_weight(p), chi_i = chi^2 between the components plus 1,
    and sd_i the component stddevs:

        C0 = max(sd0^2 (1 + 2 (1-p) lam), sd1^2 (1 + 2 p lam chi1)),
        C1 = max(sd1^2 (1 + 2 p lam),     sd0^2 (1 + 2 (1-p) lam chi0)),
        C  = min(C0, C1).

    In the symmetric case (p = 1/2, identical components N(m, sd^2)) this is
    3 sd^2.  A chi^2 that fails its integrability condition removes the
    branch that needs it; if both branches are unavailable the constant is
    undefined and the error propagates.
    """
    m0, sd0 = comp0
    m1, sd1 = comp1
    if sd0 <= 0.0 or sd1 <= 0.0:
        raise ValueError("component stddevs must be positive")
    lam = lambda_weight(p)
    v0, v1 = float(sd0) ** 2, float(sd1) ** 2

    candidates = []
    try:
        chi1 = chi2_spherical(m1, v1, m0, v0) + 1.0
        candidates.append(max(v0 * (1.0 + 2.0 * (1.0 - p) * lam),
                              v1 * (1.0 + 2.0 * p * lam * chi1)))
    except DivergenceUndefinedError:
        pass
    try:
        chi0 = chi2_spherical(m0, v0, m1, v1) + 1.0
        candidates.append(max(v1 * (1.0 + 2.0 * p * lam),
                              v0 * (1.0 + 2.0 * (1.0 - p) * lam * chi0)))
    except DivergenceUndefinedError:
        pass
    if not candidates:
        raise DivergenceUndefinedError(
            "no mixture LSI constant available: both chi^2 divergences diverge"
        )
    return min(candidates)


def lsi_compact_support(radius: float, process: ForwardProcess, t: float) -> float:
    """Dimension-free LSI constant for data supported in a ball of the given radius:

        C_LSI(t) = 6 s(t)^2 (4 R^2 + sigma(t)^2) exp(4 R^2 / sigma(t)^2).

    Blows up as t -> 0+ (the exponent is singular at sigma(0) = 0), so t must
    be strictly positive.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if t <= 0.0:
        raise ValueError("compact-support constant undefined at t = 0")
    s = float(process.scale(t))
    sig2 = float(process.noise_level(t)) ** 2
    r2 = 4.0 * radius**2
    try:
        return 6.0 * s**2 * (r2 + sig2) * math.exp(r2 / sig2)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class LsiProfile:
    """Time-indexed log-Sobolev constant C_LSI(t), or None where unknown.

    decay_rate_coefficient(t) returns C(t) = 1/C_LSI(t), with the convention
    C(t) = 0 wherever no (finite, positive) constant is available, which
    simply switches the decay off there.
    """

    c_lsi: object  # callable t -> float | None
    source: str = "user-supplied"

    def constant(self, t: float):
        return self.c_lsi(t)

    def decay_rate_coefficient(self, t: float) -> float:
        c = self.c_lsi(t)
        if c is None or not math.isfinite(c) or c <= 0.0:
            return 0.0
        return 1.0 / c


def two_component_profile(p0: GaussianMixture, process: ForwardProcess) -> LsiProfile:
    """Mixture LSI profile for a two-component dataset diffused to time t."""
    if p0.n_components != 2:
        raise ValueError(
            "mixture LSI profile needs exactly two components; "
            "supply a constant or custom profile otherwise"
        )

    def c_lsi(t):
        pt = diffuse(p0, process, t)
        try:
            return lsi_two_component(
                float(pt.weights[0]),
                (pt.means[0], float(pt.stddevs[0])),
                (pt.means[1], float(pt.stddevs[1])),
            )
        except DivergenceUndefinedError:
            return None

    return LsiProfile(c_lsi, source="mixture-two-component")


def compact_support_profile(radius: float, process: ForwardProcess) -> LsiProfile:
    def c_lsi(t):
        if t <= 0.0:
            return None
        return lsi_compact_support(radius, process, t)

    return LsiProfile(c_lsi, source="compact-support")


def constant_profile(c_lsi_value: float) -> LsiProfile:
    if c_lsi_value <= 0.0:
        raise ValueError("LSI constant must be positive")
    return LsiProfile(lambda t: c_lsi_value, source="user-supplied")


def callable_profile(fn, source: str = "user-supplied") -> LsiProfile:
    return LsiProfile(fn, source=source)


def no_lsi_profile() -> LsiProfile:
    return LsiProfile(lambda t: None, source="user-supplied")


# --- bound traces ------------------------------------------------------------

@dataclass(frozen=True)
class BoundTrace:
    """A KL bound evaluated on descending forward times."""

    times: np.ndarray
    values: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)

    def value_at(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[i])

    def write_csv(self, path) -> None:
        delta = self.params.get("delta_ratio", "")
        with open(path, "w") as fh:
            fh.write("forward_time,bound_value,kind,delta_ratio\n")
            for t, v in zip(self.times, self.values):
                fh.write(f"{t!r},{v!r},{self.kind},{delta}\n")


def _grid_times(grid) -> np.ndarray:
    if isinstance(grid, TimeGrid):
        return grid.nodes
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) >= 0.0):
        raise ValueError("bound grid must be strictly decreasing forward times")
    return times


def _node_coefficients(lsi, schedule, process, times):
    c = np.array([lsi.decay_rate_coefficient(t) for t in times])
    gam = np.asarray(schedule.evaluate(times), dtype=float)
    g2 = np.asarray(process.diffusion(times), dtype=float) ** 2
    return c, gam, g2


def _cumtrapz_reverse_time(times, values):
    """Cumulative trapezoid of values over tau = times[0] - times."""
    tau = times[0] - times
    out = np.zeros_like(tau)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(tau))
    return out


def _exp_weighted_trace(times, h_init, alpha, source):
    """exp(-int_0^tau alpha) * (h_init + int_0^tau source(s) exp(int_0^s alpha) ds)."""
    a_cum = _cumtrapz_reverse_time(times, alpha)
    inner = _cumtrapz_reverse_time(times, source * np.exp(a_cum))
    return np.exp(-a_cum) * (h_init + inner)


def thm2_bound(h_init: float, lsi: LsiProfile, schedule: GammaSchedule,
               process: ForwardProcess, grid) -> BoundTrace:
    """Pure-decay bound for exact scores: H(tau) <= exp(-int C gamma g^2) H(0)."""
    if h_init < 0.0:
        raise ValueError("initial KL must be >= 0")
    times = _grid_times(grid)
    c, gam, g2 = _node_coefficients(lsi, schedule, process, times)
    values = _exp_weighted_trace(times, h_init, c * gam * g2, np.zeros_like(times))
    return BoundTrace(times, values, kind="thm2", params={"lsi_source": lsi.source})


def thm4_bound_general(h_init: float, lsi: LsiProfile, schedule: GammaSchedule,
                       process: ForwardProcess, grid, cross_term) -> BoundTrace:
    """Perturbed bound driven by the cross term E[eps . grad log h] per node.

    The cross term is computable only when the generated density is known in
    closed form; with cross_term identically zero this reduces exactly to
    thm2_bound (shared accumulation code).
    """
    times = _grid_times(grid)
    cross = np.asarray(cross_term, dtype=float)
    if cross.shape != times.shape:
        raise ValueError("cross_term must supply one value per grid node")
    c, gam, g2 = _node_coefficients(lsi, schedule, process, times)
    source = 0.5 * g2 * (1.0 + gam) * cross
    values = _exp_weighted_trace(times, h_init, c * gam * g2, source)
    return BoundTrace(times, values, kind="thm4-eq1", params={"lsi_source": lsi.source})


def thm4_bound_delta(h_init: float, lsi: LsiProfile, schedule: GammaSchedule,
                     process: ForwardProcess, grid, eps_second_moment,
                     delta_ratio: float = 1.0) -> BoundTrace:
    """Perturbed bound using only the second moment E[|eps|^2] under the
    generated distribution, with delta(s) = delta_ratio * gamma(s).

    Requires gamma > 0 wherever the integrand is accumulated and
    0 < delta_ratio <= 1.
    """
    if not 0.0 < delta_ratio <= 1.0:
        raise ValueError(f"delta_ratio must lie in (0, 1], got {delta_ratio}")
    times = _grid_times(grid)
    eps2 = np.asarray(eps_second_moment, dtype=float)
    if eps2.shape != times.shape:
        raise ValueError("eps_second_moment must supply one value per grid node")
    c, gam, g2 = _node_coefficients(lsi, schedule, process, times)
    if np.any(gam <= 0.0):
        raise InvalidScheduleError("second-moment bound needs gamma > 0 on the window")
    delta = delta_ratio * gam
    alpha = c * g2 * (gam - delta)
    source = 0.125 * g2 * (1.0 + gam) ** 2 * eps2 / delta
    values = _exp_weighted_trace(times, h_init, alpha, source)
    return BoundTrace(times, values, kind="thm4-eq2",
                      params={"delta_ratio": delta_ratio, "lsi_source": lsi.source})


def optimize_delta_ratio(h_init, lsi, schedule, process, grid, eps_second_moment,
                         ratios=None):
    """Grid search over constant ratios d = delta/gamma minimizing the final bound."""
    if ratios is None:
        ratios = np.linspace(0.05, 1.0, 20)
    best = None
    best_d = None
    for d in ratios:
        trace = thm4_bound_delta(h_init, lsi, schedule, process, grid,
                                 eps_second_moment, delta_ratio=float(d))
        if best is None or trace.values[-1] < best.values[-1]:
            best, best_d = trace, float(d)
    return best, best_d


def cor2_bound(h_init_rev: float, schedule: GammaSchedule, process: ForwardProcess,
               grid, eps_second_moment_pbar) -> BoundTrace:
    """Growth bound on the reverse divergence H(true | generated):

        H_rev(tau) <= H_rev(0)
                      + (1/8) int_0^tau g^2 (1+gamma)^2 / gamma E_true[|eps|^2].

    Strictly non-decreasing in tau; needs gamma > 0 on the window.
    """
    if h_init_rev < 0.0:
        raise ValueError("initial KL must be >= 0")
    times = _grid_times(grid)
    eps2 = np.asarray(eps_second_moment_pbar, dtype=float)
    if eps2.shape != times.shape:
        raise ValueError("eps_second_moment_pbar must supply one value per grid node")
    gam = np.asarray(schedule.evaluate(times), dtype=float)
    if np.any(gam <= 0.0):
        raise InvalidScheduleError("reverse bound needs gamma > 0 on the window")
    g2 = np.asarray(process.diffusion(times), dtype=float) ** 2
    integrand = 0.125 * g2 * (1.0 + gam) ** 2 * eps2 / gam
    values = h_init_rev + _cumtrapz_reverse_time(times, integrand)
    return BoundTrace(times, values, kind="cor2", params={})
