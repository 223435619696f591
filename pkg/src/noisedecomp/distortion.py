"""Risk distortions: monotone reweightings of quantile levels.

A distortion maps cumulative probability tau in [0,1] to a distorted level.
Risk-sensitive expectations integrate the quantile function against the
distorted measure instead of the uniform one.

Supported kinds:
  cpw <eta>     inverse-S probability weighting,
                tau^eta / (tau^eta + (1-tau)^eta)^(1/eta)
  wang <eta>    Phi(Phi^{-1}(tau) + eta); eta > 0 overweights low outcomes
                (risk averse), eta < 0 overweights high outcomes
  pow <eta>     tau^(1/(1+|eta|)) for eta >= 0, else 1-(1-tau)^(1/(1+|eta|))
  cvar <eta>    eta * tau, attention restricted to the lower eta tail
  expectation   identity (no distortion)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DomainError

KINDS = ("cpw", "wang", "pow", "cvar", "expectation")

# Risk configurations exercised by the experiment sweeps.
TABLE_CONFIGS = (
    ("cpw", 0.71),
    ("wang", 0.75),
    ("wang", -0.75),
    ("pow", -2.0),
    ("cvar", 0.1),
    ("cvar", 0.25),
)


def _cpw(eta: float, tau):
    # tau^eta / (tau^eta + (1-tau)^eta)^(1/eta), computed in log space so
    # small eta and extreme tau do not overflow.
    out = np.empty_like(tau)
    interior = (tau > 0.0) & (tau < 1.0)
    t = tau[interior]
    log_t = np.log(t)
    log_1mt = np.log1p(-t)
    log_num = eta * log_t
    log_den = np.logaddexp(eta * log_t, eta * log_1mt) / eta
    out[interior] = np.exp(log_num - log_den)
    out[tau <= 0.0] = 0.0
    out[tau >= 1.0] = 1.0
    return out


def _wang(eta: float, tau):
    out = np.empty_like(tau)
    interior = (tau > 0.0) & (tau < 1.0)
    out[interior] = ndtr(ndtri(tau[interior]) + eta)
    out[tau <= 0.0] = 0.0
    out[tau >= 1.0] = 1.0
    return out


def _pow(eta: float, tau):
    exponent = 1.0 / (1.0 + abs(eta))
    if eta >= 0:
        return np.power(tau, exponent)
    return 1.0 - np.power(1.0 - tau, exponent)


@dataclass(frozen=True)
class DistortionFn:
    """A named distortion with its risk parameter."""

    kind: str
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown distortion kind {self.kind!r}")
        if not np.isfinite(self.eta):
            raise DomainError("distortion parameter must be finite")
        if self.kind == "cpw" and self.eta <= 0:
            raise DomainError("cpw parameter must be positive")
        if self.kind == "cvar" and not 0 < self.eta <= 1:
            raise DomainError("cvar parameter must lie in (0, 1]")

    def __call__(self, tau):
        return distort(self, tau)

    def label(self) -> str:
        if self.kind == "expectation":
            return "expectation"
        return f"{self.kind}:{self.eta:g}"


def distort(fn: DistortionFn, tau):
    """Apply the distortion elementwise; tau must lie in [0,1]."""
    arr = np.asarray(tau, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("cumulative probabilities must lie in [0,1]")
    flat = np.atleast_1d(arr).copy()
    if fn.kind == "cpw":
        out = _cpw(fn.eta, flat)
    elif fn.kind == "wang":
        out = _wang(fn.eta, flat)
    elif fn.kind == "pow":
        out = _pow(fn.eta, flat)
    elif fn.kind == "cvar":
        out = fn.eta * flat
    else:
        out = flat
    return float(out[0]) if np.ndim(tau) == 0 else out.reshape(arr.shape)


def check_strictly_increasing(fn, n_points: int = 257) -> bool:
    """Probe the distortion on a uniform grid of levels."""
    taus = np.linspace(0.0, 1.0, n_points)
    vals = np.asarray(fn(taus), dtype=np.float64)
    return bool(np.all(np.diff(vals) > 0.0))


def distorted_expectation(fn: DistortionFn, levels, values) -> float:
    """Integrate a tabulated quantile function against the distorted measure.

    levels must be strictly increasing inside (0,1); values are the matching
    quantiles. The quantile function is treated as a left-continuous step:
    the value at the lowest tabulated level extends down to tau = 0 and each
    value owns the probability mass up to the next tabulated level.
    """
    taus = np.asarray(levels, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    if taus.ndim != 1 or taus.shape != vals.shape or taus.size == 0:
        raise DomainError("levels and values must be equal-length 1-d arrays")
    if np.any(taus <= 0.0) or np.any(taus >= 1.0):
        raise DomainError("levels must lie strictly inside (0,1)")
    if np.any(np.diff(taus) <= 0.0):
        raise DomainError("levels must be strictly increasing")
    bounds = np.concatenate(([0.0], taus, [1.0]))
    increments = np.diff(distort(fn, bounds))
    step_values = np.concatenate(([vals[0]], vals))
    return float(increments @ step_values)


def parse_spec(text: str) -> DistortionFn:
    """Parse strings like "cpw:0.71", "wang:-0.75", "cvar:0.25", "expectation"."""
    cleaned = text.strip()
    if not cleaned:
        raise ConfigError("empty distortion spec")
    if ":" not in cleaned:
        if cleaned == "expectation":
            return DistortionFn("expectation")
        raise ConfigError(f"distortion spec {text!r} needs a parameter, like 'cvar:0.25'")
    kind, _, param = cleaned.partition(":")
    kind = kind.strip()
    if kind == "expectation":
        raise ConfigError("expectation takes no parameter")
    try:
        eta = float(param)
    except ValueError:
        raise ConfigError(f"bad distortion parameter in {text!r}") from None
    return DistortionFn(kind, eta)
