"""Centralized training loop: collect, augment, decompose, update locally.

Each outer iteration clears the buffer, refills it under the current
exploration rate with noisy shared rewards, optionally stretches the reward
set with diffusion-generated samples, refits the reward decomposition, then
runs per-agent quantile TD updates on local rewards drawn from the fitted
decomposition. Evaluation episodes are always noise-free; noise only
corrupts training signals.

Modes:
  ndd      noisy rewards, learners train on decomposed local credit
  naive    noisy rewards, learners train on the raw noisy global reward
  control  noise-free rewards straight to the learners (upper reference)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import decomposition, diffusion
from ..dists import wasserstein
from ..distortion import DistortionFn
from ..errors import ConfigError
from ..nets import RandomSource
from ..noise import NoiseModel
from .buffer import TrajectoryBuffer, rollout
from .learner import QuantileLearner, local_reward_sample, select_action, td_update

MODES = ("ndd", "naive", "control")


@dataclass
class MarlConfig:
    n_agents: int = 3
    mode: str = "ndd"
    noise: NoiseModel | None = None
    iterations: int = 150
    buffer_capacity: int = 1024
    batch_size: int = 32
    updates_per_iteration: int = 8
    gamma: float = 0.99
    m_quantiles: int = 32
    hidden: tuple = (64, 64)
    learning_rate: float = 3e-3
    target_refresh: int = 100
    distortion: DistortionFn = field(default_factory=lambda: DistortionFn("expectation"))
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    local_reward_mode: str = "sample"
    # decomposition fitting
    e_min: float = 1e-3
    lam: float = 1.0
    alpha: float = 1.0
    fit_rounds: int = 200
    fit_subsample: int | None = 128
    fit_learning_rate: float = 3e-3
    decomposition_hidden: tuple = (64, 64)
    # hidden-data protocol and diffusion augmentation
    data_fraction: float = 1.0
    dm_enabled: bool = False
    dm_iterations: int = 1000
    dm_batch: int = 64
    eval_episodes: int = 20
    seed: int = 0


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    eval_return: float
    wasserstein: float
    pdf_loss: float
    epsilon: float
    mean_buffer_reward: float


@dataclass
class TrainResult:
    learners: list
    model: decomposition.DecompositionModel | None
    metrics: list
    denoiser: diffusion.DenoiserStack | None
    config: MarlConfig

    def final_eval_return(self) -> float:
        return self.metrics[-1].eval_return


def _validate(env, config: MarlConfig) -> None:
    if config.mode not in MODES:
        raise ConfigError(f"unknown mode {config.mode!r}; choose from {MODES}")
    if env.n_agents != config.n_agents:
        raise ConfigError(
            f"config names {config.n_agents} agents but env has {env.n_agents}"
        )
    if config.mode in ("ndd", "naive") and config.noise is None:
        raise ConfigError(f"{config.mode} mode needs a noise model")
    if not 0.0 < config.data_fraction <= 1.0:
        raise ConfigError("data fraction must lie in (0, 1]")
    if config.dm_enabled and config.data_fraction >= 1.0:
        raise ConfigError("diffusion augmentation needs a data fraction below 1")
    if config.iterations < 1:
        raise ConfigError("need at least one iteration")
    if config.local_reward_mode not in ("sample", "mean"):
        raise ConfigError(f"unknown local reward mode {config.local_reward_mode!r}")


def _epsilon_at(config: MarlConfig, iteration: int) -> float:
    half = max(1, config.iterations // 2)
    if iteration >= half:
        return config.epsilon_final
    frac = iteration / half
    return config.epsilon_start + frac * (config.epsilon_final - config.epsilon_start)


def _encode(obs, actions, n_actions: int) -> np.ndarray:
    one_hot = np.eye(n_actions)[actions]
    return np.concatenate([obs, one_hot], axis=1)


def evaluate(env, learners, fn: DistortionFn, episodes: int, rng) -> float:
    """Mean noise-free greedy return over full episodes."""
    total = 0.0
    for _ in range(episodes):
        obs = env.reset(rng)
        done = False
        while not done:
            actions = [
                select_action(learner, o, fn, 0.0, rng)
                for learner, o in zip(learners, obs)
            ]
            obs, reward, done = env.step(np.asarray(actions))
            total += reward
    return total / episodes


def train(env, config: MarlConfig) -> TrainResult:
    """Run the full outer loop; returns learners, decomposition, and metrics."""
    _validate(env, config)
    root = RandomSource(config.seed)
    rng = root.spawn(0)

    learners = [
        QuantileLearner(
            env.obs_dims[i],
            env.n_actions,
            root.spawn(100 + i),
            m=config.m_quantiles,
            gamma=config.gamma,
            hidden=config.hidden,
            learning_rate=config.learning_rate,
            distortion=config.distortion,
            target_refresh=config.target_refresh,
        )
        for i in range(config.n_agents)
    ]

    model = None
    denoiser = None
    schedule = None
    if config.mode == "ndd":
        encoding_dims = [d + env.n_actions for d in env.obs_dims]
        model = decomposition.make_decomposition_model(
            encoding_dims, root.spawn(200), hidden=config.decomposition_hidden
        )
        if config.dm_enabled:
            schedule = diffusion.build_schedule()
            denoiser = diffusion.make_denoiser_stack(schedule, root.spawn(300))

    buffer = TrajectoryBuffer(
        config.n_agents, env.obs_dims, capacity=config.buffer_capacity
    )
    train_noise = None if config.mode == "control" else config.noise

    metrics = []
    for iteration in range(config.iterations):
        buffer.clear()
        epsilon = _epsilon_at(config, iteration)
        policies = [
            (
                lambda o, r, lrn=learner, eps=epsilon: select_action(
                    lrn, o, config.distortion, eps, r
                )
            )
            for learner in learners
        ]
        rollout(env, policies, train_noise, buffer, rng)
        all_obs, actions, rewards, all_next_obs, dones = buffer.view()
        n = len(buffer)
        encodings = [
            _encode(all_obs[i], actions[:, i], env.n_actions)
            for i in range(config.n_agents)
        ]

        pdf_loss = float("nan")
        fit_distance = float("nan")
        if config.mode == "ndd":
            if config.data_fraction < 1.0:
                n_keep = max(2, int(round(n * config.data_fraction)))
                keep = rng.permutation(n)[:n_keep]
                kept_rewards = rewards[keep]
                kept_encodings = [enc[keep] for enc in encodings]
            else:
                kept_rewards = rewards
                kept_encodings = encodings
            fit_rewards = kept_rewards
            if config.dm_enabled:
                center = float(kept_rewards.mean())
                spread = max(float(kept_rewards.std()), 1e-8)
                standardized = (kept_rewards - center) / spread
                diffusion.train(
                    denoiser,
                    schedule,
                    standardized,
                    rng,
                    n_iterations=config.dm_iterations,
                    batch_size=config.dm_batch,
                )
                want = int(
                    round(len(kept_rewards) * (1.0 - config.data_fraction) / config.data_fraction)
                )
                if want > 0:
                    generated = center + spread * diffusion.generate(
                        denoiser, schedule, want, rng
                    )
                    fit_rewards = diffusion.augment(
                        kept_rewards, generated, config.data_fraction
                    )
            batch = decomposition.make_batch(fit_rewards, kept_encodings)
            fit_result = decomposition.fit(
                model,
                batch,
                e_min=config.e_min,
                max_rounds=config.fit_rounds,
                learning_rate=config.fit_learning_rate,
                lam=config.lam,
                alpha=config.alpha,
                subsample=config.fit_subsample,
                rng=rng,
            )
            pdf_loss = fit_result.error
            sample_encoding = [enc[0] for enc in kept_encodings]
            # raw rewards as the comparison law: order statistics are much
            # cheaper than the smoothed target and measure the same fit
            fit_distance = wasserstein(
                decomposition.decompose(model, sample_encoding), fit_rewards, p=2
            )

        for _ in range(config.updates_per_iteration):
            idx = rng.integers(0, n, size=config.batch_size)
            for i, learner in enumerate(learners):
                if config.mode == "ndd":
                    local = local_reward_sample(
                        model, encodings[i][idx], i, rng, mode=config.local_reward_mode
                    )
                else:
                    local = rewards[idx]
                minibatch = (
                    all_obs[i][idx],
                    actions[idx, i],
                    local,
                    all_next_obs[i][idx],
                    dones[idx],
                )
                td_update(learner, minibatch)

        eval_rng = root.spawn(10_000 + iteration)
        eval_return = evaluate(
            env, learners, config.distortion, config.eval_episodes, eval_rng
        )
        metrics.append(
            IterationMetrics(
                iteration=iteration,
                eval_return=eval_return,
                wasserstein=fit_distance,
                pdf_loss=pdf_loss,
                epsilon=epsilon,
                mean_buffer_reward=float(rewards.mean()),
            )
        )
    buffer.clear()
    return TrainResult(
        learners=learners,
        model=model,
        metrics=metrics,
        denoiser=denoiser,
        config=config,
    )
