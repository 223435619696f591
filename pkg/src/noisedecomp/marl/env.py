"""Small cooperative environments with shared scalar rewards.

Both environments follow the same episodic protocol: ``reset(rng)`` returns a
list of per-agent observations, ``step(actions)`` advances every agent at once
and returns (observations, global_reward, done). Transitions are deterministic
given the actions; all randomness enters at reset (and, for the matrix game,
through the reward draw).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, StateError

N_MOVE_ACTIONS = 5
_MOVES = np.array([[0, 0], [0, 1], [0, -1], [-1, 0], [1, 0]])  # stay/up/down/left/right


class CoopSpreadEnv:
    """Agents spread out to cover an equal number of landmarks on a grid.

    The global reward after each joint move is the negative sum over landmarks
    of the Manhattan distance to the nearest agent, so 0 (every landmark
    covered) is the per-step maximum. Each agent observes its own position and
    the offsets to every landmark, scaled by the grid size.
    """

    def __init__(self, n_agents: int, grid_size: int, horizon: int = 25, toroidal: bool = False):
        if grid_size < 1:
            raise ConfigError("grid size must be at least 1")
        if n_agents < 1:
            raise ConfigError("need at least one agent")
        if n_agents > grid_size * grid_size:
            raise ConfigError("more agents than grid cells")
        if horizon < 1:
            raise ConfigError("horizon must be positive")
        self.n_agents = n_agents
        self.grid_size = grid_size
        self.horizon = horizon
        self.toroidal = toroidal
        self.n_actions = N_MOVE_ACTIONS
        self.obs_dims = tuple([2 + 2 * n_agents] * n_agents)
        self._agents = None
        self._landmarks = None
        self._t = 0

    def reset(self, rng):
        cells = self.grid_size * self.grid_size
        landmark_cells = rng.choice(cells, size=self.n_agents, replace=False)
        self._landmarks = np.column_stack(
            [landmark_cells % self.grid_size, landmark_cells // self.grid_size]
        ).astype(np.int64)
        self._agents = np.column_stack(
            [
                rng.integers(0, self.grid_size, size=self.n_agents),
                rng.integers(0, self.grid_size, size=self.n_agents),
            ]
        ).astype(np.int64)
        self._t = 0
        return self.observations()

    def set_state(self, agent_positions, landmark_positions):
        agents = np.asarray(agent_positions, dtype=np.int64)
        landmarks = np.asarray(landmark_positions, dtype=np.int64)
        if agents.shape != (self.n_agents, 2) or landmarks.shape != (self.n_agents, 2):
            raise ConfigError("positions must be (n_agents, 2) integer arrays")
        if np.any(agents < 0) or np.any(agents >= self.grid_size):
            raise ConfigError("agent positions off the grid")
        if np.any(landmarks < 0) or np.any(landmarks >= self.grid_size):
            raise ConfigError("landmark positions off the grid")
        self._agents = agents.copy()
        self._landmarks = landmarks.copy()
        self._t = 0
        return self.observations()

    def _distance(self, a, b):
        diff = np.abs(a[:, None, :] - b[None, :, :])
        if self.toroidal:
            diff = np.minimum(diff, self.grid_size - diff)
        return diff.sum(axis=2)

    def reward(self) -> float:
        dists = self._distance(self._agents, self._landmarks)
        return float(-dists.min(axis=0).sum())

    def observations(self):
        if self._agents is None:
            raise StateError("reset the environment first")
        scale = float(self.grid_size)
        obs = []
        for i in range(self.n_agents):
            own = self._agents[i]
            offsets = (self._landmarks - own).astype(np.float64)
            if self.toroidal:
                half = self.grid_size / 2.0
                offsets = (offsets + half) % self.grid_size - half
            obs.append(np.concatenate([own / scale, offsets.ravel() / scale]))
        return obs

    def step(self, actions):
        if self._agents is None:
            raise StateError("reset the environment first")
        acts = np.asarray(actions, dtype=np.int64)
        if acts.shape != (self.n_agents,):
            raise ConfigError(f"need one action per agent, got shape {acts.shape}")
        if np.any(acts < 0) or np.any(acts >= self.n_actions):
            raise ConfigError("action index out of range")
        moved = self._agents + _MOVES[acts]
        if self.toroidal:
            moved %= self.grid_size
        else:
            moved = np.clip(moved, 0, self.grid_size - 1)
        self._agents = moved
        self._t += 1
        return self.observations(), self.reward(), self._t >= self.horizon


def coop_spread_env(
    n_agents: int, grid_size: int, horizon: int = 25, toroidal: bool = False
) -> CoopSpreadEnv:
    return CoopSpreadEnv(n_agents, grid_size, horizon=horizon, toroidal=toroidal)


class MatrixGameEnv:
    """One-shot game: the global reward is a weighted per-agent Gaussian mixture.

    Each agent i has a table of local means indexed by its own action and an
    action-independent variance. A reward draw picks an agent by weight and
    samples that agent's Gaussian, so the expected global reward of a joint
    action is the weighted sum of the chosen local means.
    """

    def __init__(self, mean_tables, variances, weights=None):
        means = np.asarray(mean_tables, dtype=np.float64)
        if means.ndim != 2:
            raise ConfigError("mean_tables must be (n_agents, n_actions)")
        self.n_agents, self.n_actions = means.shape
        self.means = means
        self.variances = np.asarray(variances, dtype=np.float64)
        if self.variances.shape != (self.n_agents,):
            raise ConfigError("one variance per agent required")
        if np.any(self.variances < 0):
            raise ConfigError("variances must be nonnegative")
        if weights is None:
            weights = np.full(self.n_agents, 1.0 / self.n_agents)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.shape != (self.n_agents,) or np.any(self.weights < 0):
            raise ConfigError("weights must be nonnegative, one per agent")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ConfigError("weights must sum to 1")
        self.horizon = 1
        self.obs_dims = tuple([1] * self.n_agents)
        self._reward_rng = None
        self._done = True

    def expected_reward(self, joint_action) -> float:
        acts = np.asarray(joint_action, dtype=np.int64)
        return float(self.weights @ self.means[np.arange(self.n_agents), acts])

    def reset(self, rng):
        self._reward_rng = rng
        self._done = False
        return self.observations()

    def observations(self):
        return [np.zeros(1) for _ in range(self.n_agents)]

    def step(self, actions):
        if self._done:
            raise StateError("reset the environment first")
        acts = np.asarray(actions, dtype=np.int64)
        if acts.shape != (self.n_agents,):
            raise ConfigError(f"need one action per agent, got shape {acts.shape}")
        rng = self._reward_rng
        agent = int(rng.choice(self.n_agents, p=self.weights))
        mean = self.means[agent, acts[agent]]
        reward = float(rng.normal(mean, np.sqrt(self.variances[agent])))
        self._done = True
        return self.observations(), reward, True
