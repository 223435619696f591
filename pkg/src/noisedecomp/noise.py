"""Reward-noise generators: weighted mixtures of standard scalar families,
injected additively into globally shared rewards.

Mixture semantics: each draw first picks one component by weight, then samples
that family (not a pointwise weighted sum of draws).

Parameter conventions (also documented in every preset file):
  gaussian <mean> <variance>          second parameter is the variance
  uniform <low> <high>
  beta <a> <b>                        supported on [0,1]
  gamma <shape> <scale>               mean = shape * scale
  chi_square <dof>                    implemented as gamma(dof/2, scale 2),
                                      so non-integer dof is well defined
"""

from __future__ import annotations

from importlib import resources

import numpy as np
from scipy import stats

from .dists import _bisect_quantile
from .errors import ConfigError, DataError, DomainError

_FAMILY_ARITY = {
    "gaussian": 2,
    "uniform": 2,
    "beta": 2,
    "gamma": 2,
    "chi_square": 1,
}

PRESET_NAMES = tuple(
    f"{env}_noise{i}" for env in ("mpe", "smac") for i in range(5)
)


def _validate_component(family: str, params: tuple):
    if family not in _FAMILY_ARITY:
        raise ConfigError(f"unknown noise family {family!r}")
    if len(params) != _FAMILY_ARITY[family]:
        raise ConfigError(
            f"{family} takes {_FAMILY_ARITY[family]} parameters, got {len(params)}"
        )
    if not all(np.isfinite(p) for p in params):
        raise DomainError(f"{family} parameters must be finite, got {params}")
    if family == "gaussian" and params[1] < 0:
        raise DomainError("gaussian variance must be >= 0")
    if family == "uniform" and not params[0] < params[1]:
        raise DomainError("uniform requires low < high")
    if family == "beta" and (params[0] <= 0 or params[1] <= 0):
        raise DomainError("beta shapes must be positive")
    if family == "gamma" and (params[0] <= 0 or params[1] <= 0):
        raise DomainError("gamma shape and scale must be positive")
    if family == "chi_square" and params[0] <= 0:
        raise DomainError("chi-square dof must be positive")


def _family_mean(family, p):
    if family == "gaussian":
        return p[0]
    if family == "uniform":
        return 0.5 * (p[0] + p[1])
    if family == "beta":
        return p[0] / (p[0] + p[1])
    if family == "gamma":
        return p[0] * p[1]
    return p[0]  # chi_square


def _family_variance(family, p):
    if family == "gaussian":
        return p[1]
    if family == "uniform":
        return (p[1] - p[0]) ** 2 / 12.0
    if family == "beta":
        a, b = p
        return a * b / ((a + b) ** 2 * (a + b + 1.0))
    if family == "gamma":
        return p[0] * p[1] ** 2
    return 2.0 * p[0]  # chi_square


def _family_frozen(family, p):
    """scipy frozen distribution for cdf/pdf evaluation."""
    if family == "gaussian":
        if p[1] == 0:
            raise DomainError("degenerate gaussian admits no density")
        return stats.norm(loc=p[0], scale=np.sqrt(p[1]))
    if family == "uniform":
        return stats.uniform(loc=p[0], scale=p[1] - p[0])
    if family == "beta":
        return stats.beta(p[0], p[1])
    if family == "gamma":
        return stats.gamma(p[0], scale=p[1])
    return stats.gamma(p[0] / 2.0, scale=2.0)  # chi_square as gamma(dof/2, 2)


def _family_draw(family, p, rng, n):
    if family == "gaussian":
        return rng.normal(p[0], np.sqrt(p[1]), size=n)
    if family == "uniform":
        return rng.uniform(p[0], p[1], size=n)
    if family == "beta":
        return rng.beta(p[0], p[1], size=n)
    if family == "gamma":
        return rng.gamma(p[0], p[1], size=n)
    return rng.gamma(p[0] / 2.0, 2.0, size=n)


class NoiseModel:
    """Mixture of standard scalar noise families, with an optional output scale."""

    def __init__(self, components, scale: float = 1.0, name: str | None = None):
        comps = []
        for weight, family, params in components:
            params = tuple(float(v) for v in np.atleast_1d(params))
            weight = float(weight)
            if weight < 0:
                raise DomainError("component weights must be nonnegative")
            _validate_component(family, params)
            comps.append((weight, family, params))
        if not comps:
            raise DataError("noise model needs at least one component")
        total = sum(w for w, _, _ in comps)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1 within 1e-9, got {total!r}")
        if not (np.isfinite(scale) and scale > 0):
            raise DomainError("scale must be a positive real")
        self.components = tuple(comps)
        self.scale = float(scale)
        self.name = name

    @property
    def weights(self):
        return np.array([w for w, _, _ in self.components])

    def scaled(self, factor: float) -> "NoiseModel":
        return NoiseModel(self.components, scale=self.scale * factor, name=self.name)

    def mean(self) -> float:
        return self.scale * sum(w * _family_mean(f, p) for w, f, p in self.components)

    def variance(self) -> float:
        second = sum(
            w * (_family_variance(f, p) + _family_mean(f, p) ** 2)
            for w, f, p in self.components
        )
        raw_mean = sum(w * _family_mean(f, p) for w, f, p in self.components)
        return self.scale**2 * (second - raw_mean**2)

    def sample_n(self, rng, n: int):
        """Draw n values: component choice by weight, then the family draw."""
        idx = rng.choice(len(self.components), size=int(n), p=self.weights)
        out = np.empty(int(n), dtype=np.float64)
        for i, (_, family, params) in enumerate(self.components):
            mask = idx == i
            count = int(mask.sum())
            if count:
                out[mask] = _family_draw(family, params, rng, count)
        return self.scale * out

    def sample(self, rng) -> float:
        return float(self.sample_n(rng, 1)[0])

    def pdf(self, x):
        xs = np.asarray(x, dtype=np.float64) / self.scale
        acc = sum(w * _family_frozen(f, p).pdf(xs) for w, f, p in self.components)
        return acc / self.scale

    def cdf(self, x):
        xs = np.asarray(x, dtype=np.float64) / self.scale
        return sum(w * _family_frozen(f, p).cdf(xs) for w, f, p in self.components)

    def quantile(self, tau):
        arr = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        if np.any(arr <= 0) or np.any(arr >= 1):
            raise DomainError("quantile level must lie strictly inside (0,1)")
        mu = self.mean()
        sd = max(np.sqrt(self.variance()), 1e-12)
        out = _bisect_quantile(self.cdf, arr, mu - 12 * sd, mu + 12 * sd)
        return float(out[0]) if np.ndim(tau) == 0 else out


def sample_noise(model: NoiseModel, rng) -> float:
    return model.sample(rng)


def inject(reward: float, model: NoiseModel, rng) -> float:
    """Additive noise on a scalar global reward."""
    return float(reward) + model.sample(rng)


def parse_noise_config(text: str) -> NoiseModel:
    """Parse the plain-text mixture format (see module docstring and presets)."""
    name = None
    scale = 1.0
    components = []
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key = fields[0]
        if key == "name":
            if len(fields) != 2:
                raise ConfigError(f"bad name line: {raw_line!r}")
            name = fields[1]
        elif key == "scale":
            if len(fields) != 2:
                raise ConfigError(f"bad scale line: {raw_line!r}")
            scale = float(fields[1])
        elif key == "component":
            if len(fields) < 4:
                raise ConfigError(f"bad component line: {raw_line!r}")
            weight = float(fields[1])
            family = fields[2]
            params = tuple(float(v) for v in fields[3:])
            components.append((weight, family, params))
        else:
            raise ConfigError(f"unknown config key {key!r} in line {raw_line!r}")
    if not components:
        raise ConfigError("config declares no components")
    return NoiseModel(components, scale=scale, name=name)


def format_noise_config(model: NoiseModel, name: str | None = None) -> str:
    lines = []
    label = name or model.name
    if label:
        lines.append(f"name {label}")
    if model.scale != 1.0:
        lines.append(f"scale {model.scale!r}")
    for weight, family, params in model.components:
        param_text = " ".join(repr(p) for p in params)
        lines.append(f"component {weight!r} {family} {param_text}")
    return "\n".join(lines) + "\n"


def load_preset(name: str) -> NoiseModel:
    """Load one of the shipped named noise configurations."""
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown noise preset {name!r}; choose from {PRESET_NAMES}")
    text = resources.files("noisedecomp.noise_presets").joinpath(f"{name}.txt").read_text()
    return parse_noise_config(text)
