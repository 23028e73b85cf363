"""Linear forward noising processes and their derived scale/noise functions.

Three standard forward SDEs of the form  dX_t = a(t) X_t dt + g(t) dW_t:

    EDM:  a = 0,                    g(t) = sqrt(2 t)
    VE:   a = 0,                    g(t) = 1
    VP:   a(t) = -(b1 t + b2) / 2,  g(t) = sqrt(b1 t + b2)

Each process carries closed forms for the scale s(t) = exp(int_0^t a) and
the noise level sigma(t), with sigma(t)^2 = int_0^t g(r)^2 / s(r)^2 dr:

    EDM:  s = 1,  sigma(t) = t
    VE:   s = 1,  sigma(t) = sqrt(t)
    VP:   s(t) = exp(-b1 t^2/4 - b2 t/2),
          sigma(t)^2 = exp(b1 t^2/2 + b2 t) - 1

The forward marginal of data x0 at time t is N(s(t) x0, s(t)^2 sigma(t)^2 I).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EDM = "edm"
VE = "ve"
VP = "vp"

KINDS = (EDM, VE, VP)

# Standard VP parameterization; the choice is configurable since different
# codebases fix different (beta1, beta2).
DEFAULT_VP_BETA1 = 19.9
DEFAULT_VP_BETA2 = 0.1

DEFAULT_T_MAX = 80.0


@dataclass(frozen=True)
class ForwardProcess:
    """A linear forward SDE  dX = a(t) X dt + g(t) dW  on [0, t_max]."""

    kind: str
    beta1: float = 0.0
    beta2: float = 0.0
    t_max: float = DEFAULT_T_MAX

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise ValueError(f"forward time must be >= 0, got {t}")
        if np.any(t > self.t_max):
            raise ValueError(f"forward time exceeds t_max={self.t_max}: {t}")
        return t

    def drift_coeff(self, t):
        """a(t), so the drift is a(t) * x."""
        t = self._check_time(t)
        if self.kind == VP:
            return -0.5 * (self.beta1 * t + self.beta2)
        return np.zeros_like(t)

    def diffusion(self, t):
        """g(t)."""
        t = self._check_time(t)
        if self.kind == EDM:
            return np.sqrt(2.0 * t)
        if self.kind == VE:
            return np.ones_like(t)
        return np.sqrt(self.beta1 * t + self.beta2)

    def scale(self, t):
        """s(t) = exp(int_0^t a(r) dr); identically 1 for EDM and VE."""
        t = self._check_time(t)
        if self.kind == VP:
            return np.exp(-0.25 * self.beta1 * t**2 - 0.5 * self.beta2 * t)
        return np.ones_like(t)

    def noise_level(self, t):
        """sigma(t) with sigma^2 = int_0^t g^2/s^2."""
        t = self._check_time(t)
        if self.kind == EDM:
            return t
        if self.kind == VE:
            return np.sqrt(t)
        # expm1 keeps precision for small t
        return np.sqrt(np.expm1(0.5 * self.beta1 * t**2 + self.beta2 * t))

    def time_of_noise(self, sigma):
        """Inverse of noise_level: the forward time at which sigma(t) = sigma."""
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma < 0.0):
            raise ValueError("noise level must be >= 0")
        if self.kind == EDM:
            return sigma
        if self.kind == VE:
            return sigma**2
        # solve b1 t^2/2 + b2 t = log(1 + sigma^2)
        c = np.log1p(sigma**2)
        if self.beta1 == 0.0:
            return c / self.beta2
        return (-self.beta2 + np.sqrt(self.beta2**2 + 2.0 * self.beta1 * c)) / self.beta1

    def marginal_std(self, t):
        """s(t) * sigma(t): stddev of the perturbation kernel around s(t) x0."""
        return self.scale(t) * self.noise_level(t)


def make_process(kind: str, beta1: float | None = None, beta2: float | None = None,
                 t_max: float = DEFAULT_T_MAX) -> ForwardProcess:
    """Build one of the three forward processes.

    EDM and VE take no parameters; VP takes (beta1 >= 0, beta2 > 0) and
    defaults to the standard (19.9, 0.1).
    """
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"unknown process kind {kind!r}, expected one of {KINDS}")
    if kind == VP:
        b1 = DEFAULT_VP_BETA1 if beta1 is None else float(beta1)
        b2 = DEFAULT_VP_BETA2 if beta2 is None else float(beta2)
        if b1 < 0.0:
            raise ValueError(f"VP requires beta1 >= 0, got {b1}")
        if b2 <= 0.0:
            raise ValueError(f"VP requires beta2 > 0, got {b2}")
        return ForwardProcess(VP, beta1=b1, beta2=b2, t_max=t_max)
    if beta1 is not None or beta2 is not None:
        raise ValueError(f"{kind} takes no beta parameters")
    return ForwardProcess(kind, t_max=t_max)


def eval_coeffs(process: ForwardProcess, t):
    """All four coefficient values (a, g, s, sigma) at forward time t."""
    return (
        process.drift_coeff(t),
        process.diffusion(t),
        process.scale(t),
        process.noise_level(t),
    )
