"""Brute-force check that local greedy actions solve the joint game.

For a decomposed reward (a weighted Gaussian mixture whose component means
depend only on each agent's own action and whose component scales are
action-independent), the joint action maximizing the distorted expectation of
the global mixture should be exactly the tuple of per-agent greedy actions.
Every joint action is enumerated, so the check is exact up to quadrature.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import ndtr, ndtri

from ..distortion import DistortionFn, distort, distorted_expectation
from ..errors import DomainError

_GRID_POINTS = 16384
_LOCAL_GRID = 64


def mixture_distorted_expectation(
    fn: DistortionFn, means, scales, weights, grid_points: int = _GRID_POINTS
) -> float:
    """Distorted expectation of a Gaussian mixture by value-axis quadrature.

    Integrates z against the distorted CDF increments on a wide uniform grid;
    accuracy is set by the grid, which is fine enough to rank actions whose
    values differ by more than ~1e-6 of the value range.
    """
    mu = np.asarray(means, dtype=np.float64)
    sd = np.asarray(scales, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    lo = float((mu - 10.0 * sd).min())
    hi = float((mu + 10.0 * sd).max())
    edges = np.linspace(lo, hi, grid_points + 1)
    cdf = ndtr((edges[:, None] - mu[None, :]) / sd[None, :]) @ w
    cdf = np.clip(cdf, 0.0, 1.0)
    cdf[0] = 0.0
    cdf[-1] = 1.0
    mids = 0.5 * (edges[:-1] + edges[1:])
    return float(mids @ np.diff(distort(fn, cdf)))


def _local_greedy(fn: DistortionFn, mean_table, scale: float) -> int:
    """Greedy action from the agent's local distorted expectations."""
    levels = (np.arange(_LOCAL_GRID) + 0.5) / _LOCAL_GRID
    z = ndtri(levels)
    values = [
        distorted_expectation(fn, levels, mu + scale * z) for mu in mean_table
    ]
    return int(np.argmax(values))


def matrix_game_consistency(
    mean_tables, weights, scales=None, distortion: DistortionFn | None = None
) -> bool:
    """True when the per-agent greedy tuple is also the joint-action optimum.

    mean_tables holds one array of per-action local means per agent; scales
    are per-agent (action-independent) Gaussian scales, default 1.
    """
    tables = [np.asarray(t, dtype=np.float64) for t in mean_tables]
    n_agents = len(tables)
    if n_agents < 1:
        raise DomainError("need at least one agent")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_agents,) or np.any(w < 0):
        raise DomainError("weights must be nonnegative, one per agent")
    total = w.sum()
    if total <= 0:
        raise DomainError("weights must not all be zero")
    w = w / total
    if scales is None:
        sd = np.ones(n_agents)
    else:
        sd = np.asarray(scales, dtype=np.float64)
        if sd.shape != (n_agents,) or np.any(sd <= 0):
            raise DomainError("scales must be positive, one per agent")
    fn = distortion or DistortionFn("expectation")

    local = tuple(_local_greedy(fn, tables[i], float(sd[i])) for i in range(n_agents))

    best_joint = None
    best_value = -np.inf
    for joint in itertools.product(*(range(len(t)) for t in tables)):
        mu = np.array([tables[i][joint[i]] for i in range(n_agents)])
        value = mixture_distorted_expectation(fn, mu, sd, w)
        if value > best_value:
            best_value = value
            best_joint = joint
    return best_joint == local
