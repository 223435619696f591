"""Per-agent quantile-distribution value learners.

Each learner holds a dense net mapping an observation to M quantile values
per discrete action, a lagged target copy of that net, and a distortion that
shapes both action selection and the greedy action inside the TD target.
Updates are quantile-regression Huber steps toward the distributional Bellman
target built from decomposed local rewards.
"""

from __future__ import annotations

import numpy as np

from ..distortion import DistortionFn, distort
from ..errors import DomainError, ShapeError, StateError
from ..nets import AdamState, DenseNet, RandomSource
from ..nets import step as adam_step

_HUBER_KAPPA = 1.0


class QuantileLearner:
    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        rng: RandomSource,
        m: int = 32,
        gamma: float = 0.99,
        hidden=(64, 64),
        learning_rate: float = 3e-3,
        distortion: DistortionFn | None = None,
        target_refresh: int = 100,
    ):
        if m < 1:
            raise DomainError("need at least one quantile")
        if not 0.0 <= gamma < 1.0:
            raise DomainError("discount must lie in [0, 1)")
        if target_refresh < 1:
            raise DomainError("target refresh period must be positive")
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.m = int(m)
        self.gamma = float(gamma)
        self.distortion = distortion or DistortionFn("expectation")
        self.target_refresh = int(target_refresh)
        self.levels = (np.arange(m) + 0.5) / m
        self.net = DenseNet([obs_dim, *hidden, n_actions * m], rng=rng)
        self.target_net = self.net.copy()
        self.optimizer = AdamState(self.net, learning_rate)
        self.update_count = 0

    def quantile_values(self, obs, use_target: bool = False) -> np.ndarray:
        """Per-action quantile grids, sorted nondecreasing; shape (B, A, M)."""
        arr = np.asarray(obs, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        net = self.target_net if use_target else self.net
        out = net.forward(arr).reshape(arr.shape[0], self.n_actions, self.m)
        out = np.sort(out, axis=2)
        return out[0] if single else out


def make_learner(obs_dim, n_actions, rng, **kwargs) -> QuantileLearner:
    return QuantileLearner(obs_dim, n_actions, rng, **kwargs)


def distorted_action_values(fn: DistortionFn, levels, quantile_grids) -> np.ndarray:
    """Distorted expectation of each action's quantile grid; input (..., M) sorted."""
    grids = np.asarray(quantile_grids, dtype=np.float64)
    bounds = np.concatenate(([0.0], levels, [1.0]))
    increments = np.diff(distort(fn, bounds))
    step_values = np.concatenate([grids[..., :1], grids], axis=-1)
    return step_values @ increments


def select_action(
    learner: QuantileLearner, observation, fn: DistortionFn, epsilon: float, rng
) -> int:
    """Distorted-greedy action choice with epsilon exploration.

    Ties go to the lowest action index.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError("exploration rate must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, learner.n_actions))
    grids = learner.quantile_values(observation)
    values = distorted_action_values(fn, learner.levels, grids)
    return int(np.argmax(values))


def local_reward_sample(model, encoding, agent: int, rng, mode: str = "sample"):
    """Draw (or read) agent-local reward credit from a fitted decomposition.

    Scalar encodings give a float; batched encodings give an array.
    """
    if not getattr(model, "fitted", False):
        raise StateError("decomposition model has not been fitted")
    if mode not in ("sample", "mean"):
        raise DomainError(f"unknown local reward mode {mode!r}")
    arr = np.asarray(encoding, dtype=np.float64)
    single = arr.ndim == 1
    mu, sigma = model.agent_params(agent, arr)
    if mode == "sample":
        out = mu + sigma * rng.standard_normal(mu.shape)
    else:
        out = mu
    return float(out[0]) if single else out


def td_update(learner: QuantileLearner, minibatch) -> float:
    """One quantile-regression Huber step toward the distributional TD target.

    minibatch is (obs, actions, local_rewards, next_obs, dones) as arrays.
    The greedy next action is chosen under the learner's own distortion from
    the lagged target net, whose quantiles are sorted before use; the
    predicted quantiles being regressed stay raw.
    """
    obs, actions, rewards, next_obs, dones = minibatch
    obs = np.asarray(obs, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    next_obs = np.asarray(next_obs, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    batch = obs.shape[0]
    if actions.shape != (batch,) or rewards.shape != (batch,) or dones.shape != (batch,):
        raise ShapeError("minibatch arrays disagree on batch size")

    m = learner.m
    out = learner.net.forward(obs).reshape(batch, learner.n_actions, m)
    rows = np.arange(batch)
    predicted = out[rows, actions]  # (B, M), raw order

    next_grids = learner.quantile_values(next_obs, use_target=True)
    next_values = distorted_action_values(
        learner.distortion, learner.levels, next_grids
    )
    greedy = np.argmax(next_values, axis=1)
    next_quantiles = next_grids[rows, greedy]
    targets = rewards[:, None] + learner.gamma * (1.0 - dones[:, None]) * next_quantiles

    # Pairwise residuals u[b, j, j'] = target_{j'} - predicted_j.
    u = targets[:, None, :] - predicted[:, :, None]
    abs_u = np.abs(u)
    huber = np.where(abs_u <= _HUBER_KAPPA, 0.5 * u * u, _HUBER_KAPPA * (abs_u - 0.5))
    tau_weight = np.abs(learner.levels[None, :, None] - (u < 0.0))
    loss = float((tau_weight * huber).sum(axis=1).mean())

    d_pred = -(tau_weight * np.clip(u, -_HUBER_KAPPA, _HUBER_KAPPA)).sum(axis=2) / (
        batch * m
    )
    d_out = np.zeros((batch, learner.n_actions, m))
    d_out[rows, actions] = d_pred
    grads = learner.net.backward(d_out.reshape(batch, -1))
    adam_step(learner.optimizer, learner.net, grads)

    learner.update_count += 1
    if learner.update_count % learner.target_refresh == 0:
        learner.target_net.load_state_from(learner.net)
    return loss
