"""Fixed-capacity transition storage and rollout collection."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, StateError
from ..noise import inject

DEFAULT_CAPACITY = 1024


class TrajectoryBuffer:
    """Per-agent observations and actions with the shared (noisy) reward.

    Preallocated to capacity; refuses writes past the end. Cleared at the
    start of every outer training iteration.
    """

    def __init__(self, n_agents: int, obs_dims, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ConfigError("capacity must be positive")
        if len(obs_dims) != n_agents:
            raise ConfigError("one observation size per agent required")
        self.n_agents = n_agents
        self.capacity = int(capacity)
        self.obs_dims = tuple(int(d) for d in obs_dims)
        self.obs = [np.empty((capacity, d)) for d in self.obs_dims]
        self.next_obs = [np.empty((capacity, d)) for d in self.obs_dims]
        self.actions = np.empty((capacity, n_agents), dtype=np.int64)
        self.rewards = np.empty(capacity)
        self.dones = np.empty(capacity, dtype=bool)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def is_full(self) -> bool:
        return self._size >= self.capacity

    def clear(self) -> None:
        self._size = 0

    def add(self, obs_list, actions, reward, next_obs_list, done: bool) -> None:
        if self.is_full:
            raise StateError("buffer is full")
        i = self._size
        for agent in range(self.n_agents):
            self.obs[agent][i] = obs_list[agent]
            self.next_obs[agent][i] = next_obs_list[agent]
        self.actions[i] = actions
        self.rewards[i] = reward
        self.dones[i] = done
        self._size += 1

    def view(self):
        """Filled slices: (obs list, actions, rewards, next_obs list, dones)."""
        n = self._size
        return (
            [o[:n] for o in self.obs],
            self.actions[:n],
            self.rewards[:n],
            [o[:n] for o in self.next_obs],
            self.dones[:n],
        )


def rollout(env, policies, noise, buffer: TrajectoryBuffer, rng) -> TrajectoryBuffer:
    """Fill the buffer to capacity with whole-step transitions.

    policies are per-agent callables (observation, rng) -> action index.
    The global reward passes through noise injection when a noise model is
    given; episodes run to termination and restart until the buffer is full.
    """
    if len(policies) != env.n_agents:
        raise ConfigError("one policy per agent required")
    while not buffer.is_full:
        obs = env.reset(rng)
        done = False
        step_idx = 0
        while not done and not buffer.is_full:
            actions = [policy(o, rng) for policy, o in zip(policies, obs)]
            try:
                next_obs, reward, done = env.step(np.asarray(actions))
            except Exception as exc:
                raise StateError(f"environment step {step_idx} failed: {exc}") from exc
            stored = reward if noise is None else inject(reward, noise, rng)
            buffer.add(obs, actions, stored, next_obs, done)
            obs = next_obs
            step_idx += 1
    return buffer
