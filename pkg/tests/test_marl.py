"""Environments, buffers, quantile learners, and the outer training loop."""

import numpy as np
import pytest

from noisedecomp.decomposition import DecompositionModel
from noisedecomp.distortion import TABLE_CONFIGS, DistortionFn
from noisedecomp.errors import ConfigError, DomainError, StateError
from noisedecomp.marl import (
    MarlConfig,
    MatrixGameEnv,
    QuantileLearner,
    TrajectoryBuffer,
    coop_spread_env,
    distorted_action_values,
    local_reward_sample,
    matrix_game_consistency,
    rollout,
    select_action,
    td_update,
    train,
)
from noisedecomp.marl.training import _epsilon_at
from noisedecomp.nets import DenseNet, RandomSource
from noisedecomp.noise import NoiseModel


def test_spread_reward_geometry():
    env = coop_spread_env(2, 4)
    env.set_state([[0, 1], [2, 3]], [[0, 1], [2, 3]])
    assert env.reward() == 0.0
    env.set_state([[0, 0], [3, 3]], [[0, 1], [2, 3]])
    assert env.reward() == -2.0


def test_spread_movement_and_termination():
    env = coop_spread_env(1, 3, horizon=2)
    env.set_state([[0, 0]], [[2, 2]])
    obs, reward, done = env.step([4])
    assert np.allclose(obs[0][:2], [1 / 3, 0.0])
    assert reward == -3.0
    assert not done
    _, _, done = env.step([1])
    assert done
    # walking off the edge clips to the border
    env.set_state([[0, 0]], [[2, 2]])
    obs, _, _ = env.step([3])
    assert np.allclose(obs[0][:2], [0.0, 0.0])


def test_spread_observation_layout():
    env = coop_spread_env(1, 3)
    obs = env.set_state([[1, 2]], [[0, 0]])
    assert obs[0].shape == (4,)
    assert np.allclose(obs[0], [1 / 3, 2 / 3, -1 / 3, -2 / 3])


def test_spread_validation():
    with pytest.raises(ConfigError):
        coop_spread_env(0, 5)
    with pytest.raises(ConfigError):
        coop_spread_env(1, 0)
    with pytest.raises(ConfigError):
        coop_spread_env(5, 2)
    with pytest.raises(ConfigError):
        coop_spread_env(1, 3, horizon=0)
    env = coop_spread_env(2, 4)
    with pytest.raises(StateError):
        env.step([0, 0])
    with pytest.raises(StateError):
        env.observations()
    env.reset(RandomSource(0).spawn(0))
    with pytest.raises(ConfigError):
        env.step([0])
    with pytest.raises(ConfigError):
        env.step([0, 9])
    with pytest.raises(ConfigError):
        env.set_state([[0, 0]], [[1, 1]])
    with pytest.raises(ConfigError):
        env.set_state([[0, 9], [0, 0]], [[1, 1], [2, 2]])


def test_spread_toroidal_translation_invariance():
    env = coop_spread_env(2, 5, toroidal=True)
    agents = np.array([[0, 1], [4, 4]])
    landmarks = np.array([[2, 0], [1, 3]])
    obs_a = env.set_state(agents, landmarks)
    base = env.reward()
    for shift in ([1, 0], [3, 2], [4, 4]):
        obs_b = env.set_state((agents + shift) % 5, (landmarks + shift) % 5)
        assert env.reward() == base
        for a, b in zip(obs_a, obs_b):
            assert np.allclose(a[2:], b[2:])


def test_spread_single_agent_matches_value_iteration():
    # backward-induction oracle over the 9 positions of a 3x3 grid
    env = coop_spread_env(1, 3, horizon=6)
    landmark = np.array([2, 1])
    moves = np.array([[0, 0], [0, 1], [0, -1], [-1, 0], [1, 0]])

    def move(pos, a):
        return np.clip(pos + moves[a], 0, 2)

    positions = [np.array([x, y]) for x in range(3) for y in range(3)]
    values = {tuple(p): 0.0 for p in positions}
    # policies[k - 1] is the greedy move with k steps remaining
    policies = []
    for _ in range(6):
        nxt = {}
        step_policy = {}
        for p in positions:
            best, best_a = -np.inf, 0
            for a in range(5):
                q = move(p, a)
                v = -np.abs(q - landmark).sum() + values[tuple(q)]
                if v > best:
                    best, best_a = v, a
            nxt[tuple(p)] = best
            step_policy[tuple(p)] = best_a
        values = nxt
        policies.append(step_policy)

    start = np.array([0, 0])
    env.set_state([start], [landmark])
    total = 0.0
    pos = start
    for t in range(6):
        action = policies[5 - t][tuple(pos)]
        _, reward, done = env.step([action])
        total += reward
        pos = move(pos, action)
        assert done == (t == 5)
    assert total == values[tuple(start)]
    # closed form: distance 3 start shrinks by 1 per step, then stays covered
    d0 = np.abs(start - landmark).sum()
    assert total == -float(sum(max(0, d0 - t) for t in range(1, 7)))


def test_buffer_lifecycle():
    buf = TrajectoryBuffer(2, (3, 2), capacity=3)
    assert len(buf) == 0
    obs = [np.zeros(3), np.zeros(2)]
    for i in range(3):
        buf.add(obs, [0, 1], float(i), obs, i == 2)
    assert buf.is_full
    with pytest.raises(StateError):
        buf.add(obs, [0, 1], 9.0, obs, False)
    all_obs, actions, rewards, next_obs, dones = buf.view()
    assert all_obs[0].shape == (3, 3) and all_obs[1].shape == (3, 2)
    assert actions.shape == (3, 2)
    assert np.array_equal(rewards, [0.0, 1.0, 2.0])
    assert np.array_equal(dones, [False, False, True])
    buf.clear()
    assert len(buf) == 0
    with pytest.raises(ConfigError):
        TrajectoryBuffer(2, (3, 2), capacity=0)
    with pytest.raises(ConfigError):
        TrajectoryBuffer(2, (3,), capacity=4)


def test_rollout_fills_and_marks_episodes():
    env = coop_spread_env(1, 3, horizon=4)
    buf = TrajectoryBuffer(1, env.obs_dims, capacity=6)
    rollout(env, [lambda o, r: 0], None, buf, RandomSource(2).spawn(0))
    assert buf.is_full
    _, _, _, _, dones = buf.view()
    assert np.array_equal(dones, [False, False, False, True, False, False])
    with pytest.raises(ConfigError):
        rollout(env, [lambda o, r: 0] * 2, None, buf, RandomSource(2).spawn(0))


def test_rollout_noise_injection():
    # constant-offset noise shifts every stored reward by exactly its mean;
    # one episode and a fixed policy keep both runs on the same trajectory
    env = coop_spread_env(1, 3, horizon=4)
    offset = NoiseModel([(1.0, "gaussian", (100.0, 0.0))])

    def collect(noise):
        buf = TrajectoryBuffer(1, env.obs_dims, capacity=4)
        rollout(env, [lambda o, r: 1], noise, buf, RandomSource(5).spawn(0))
        return buf.view()[2].copy()

    clean = collect(None)
    shifted = collect(offset)
    assert np.allclose(shifted - clean, 100.0)


def _pinned_learner(action_quantiles, m=8, obs_dim=2):
    """Learner whose net ignores the observation and emits fixed quantiles."""
    grids = np.asarray(action_quantiles, dtype=np.float64)
    n_actions = grids.shape[0]
    learner = QuantileLearner(
        obs_dim, n_actions, RandomSource(0).spawn(0), m=m, hidden=(4,)
    )
    for w in learner.net.weights:
        w[:] = 0.0
    for b in learner.net.biases:
        b[:] = 0.0
    learner.net.biases[-1][:] = grids.ravel()
    learner.target_net.load_state_from(learner.net)
    return learner


def test_select_action_dominance_and_ties():
    learner = _pinned_learner([[0.0] * 8, [2.0] * 8, [-1.0] * 8])
    rng = RandomSource(1).spawn(0)
    fn = DistortionFn("expectation")
    assert select_action(learner, np.zeros(2), fn, 0.0, rng) == 1
    for kind, eta in TABLE_CONFIGS:
        assert select_action(learner, np.zeros(2), DistortionFn(kind, eta), 0.0, rng) == 1
    tied = _pinned_learner([[3.0] * 8, [3.0] * 8, [1.0] * 8])
    assert select_action(tied, np.zeros(2), fn, 0.0, rng) == 0


def test_select_action_exploration_uniform():
    learner = _pinned_learner([[0.0] * 8, [5.0] * 8, [1.0] * 8])
    rng = RandomSource(4).spawn(0)
    fn = DistortionFn("expectation")
    counts = np.zeros(3)
    for _ in range(3000):
        counts[select_action(learner, np.zeros(2), fn, 1.0, rng)] += 1
    chi2 = float(((counts - 1000.0) ** 2 / 1000.0).sum())
    assert chi2 < 13.8
    with pytest.raises(DomainError):
        select_action(learner, np.zeros(2), fn, -0.1, rng)
    with pytest.raises(DomainError):
        select_action(learner, np.zeros(2), fn, 1.5, rng)


def test_select_action_common_shift_invariance():
    base = [[-1.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.5, 2.0],
            [0.4] * 8,
            [-3.0, 1.0, 1.0, 1.0, 1.2, 1.2, 1.4, 1.4]]
    learner = _pinned_learner(base)
    shifted = _pinned_learner([np.asarray(row) + 4.25 for row in base])
    rng = RandomSource(6).spawn(0)
    for config in TABLE_CONFIGS:
        a = select_action(learner, np.zeros(2), config, 0.0, rng)
        b = select_action(shifted, np.zeros(2), config, 0.0, rng)
        assert a == b


def test_select_action_low_tail_aversion():
    """A conditional-tail selector should refuse a deep-low-tail gamble.

    The implemented low-tail distortion remaps levels linearly, which scales
    every action's distorted value by the same factor and so can never
    reorder actions relative to the plain expectation. This check records
    that gap: the risky action keeps winning under cvar here.
    """
    safe = [1.0] * 8
    risky = [-10.0] + [4.0] * 7
    learner = _pinned_learner([safe, risky])
    rng = RandomSource(8).spawn(0)
    identity_pick = select_action(learner, np.zeros(2), DistortionFn("expectation"), 0.0, rng)
    assert identity_pick == 1
    tail_pick = select_action(learner, np.zeros(2), DistortionFn("cvar", 0.25), 0.0, rng)
    assert tail_pick == 0, "low-tail distortion did not flip the selection"


def test_distorted_action_values_shapes():
    learner = _pinned_learner([[0.0] * 8, [2.0] * 8])
    grids = learner.quantile_values(np.zeros((3, 2)))
    assert grids.shape == (3, 2, 8)
    values = distorted_action_values(DistortionFn("expectation"), learner.levels, grids)
    assert values.shape == (3, 2)
    assert np.allclose(values[:, 1], 2.0)


def test_learner_validation_and_sorting():
    rng = RandomSource(3).spawn(0)
    with pytest.raises(DomainError):
        QuantileLearner(2, 2, rng, m=0)
    with pytest.raises(DomainError):
        QuantileLearner(2, 2, rng, gamma=1.0)
    with pytest.raises(DomainError):
        QuantileLearner(2, 2, rng, target_refresh=0)
    learner = QuantileLearner(3, 2, RandomSource(5).spawn(0), m=8)
    grids = learner.quantile_values(RandomSource(5).spawn(1).standard_normal(3))
    assert grids.shape == (2, 8)
    assert np.all(np.diff(grids, axis=1) >= 0)


def test_td_terminal_target_collapses_to_reward():
    learner = QuantileLearner(
        1, 1, RandomSource(10).spawn(0), m=4, hidden=(8,), learning_rate=1e-2
    )
    obs = np.zeros((32, 1))
    batch = (obs, np.zeros(32, dtype=np.int64), np.full(32, 2.5), obs,
             np.ones(32, dtype=bool))
    for _ in range(500):
        td_update(learner, batch)
    assert np.all(np.abs(learner.quantile_values(np.zeros(1)) - 2.5) < 0.01)


def test_td_two_state_chain_value():
    # deterministic chain: s0 pays 1 into s1, s1 pays 0 and terminates
    learner = QuantileLearner(
        1, 1, RandomSource(11).spawn(0), m=1, gamma=0.99, hidden=(8,),
        learning_rate=5e-3, target_refresh=10,
    )
    obs = np.array([[0.0], [1.0]] * 16)
    actions = np.zeros(32, dtype=np.int64)
    rewards = np.array([1.0, 0.0] * 16)
    next_obs = np.array([[1.0], [1.0]] * 16)
    dones = np.array([False, True] * 16)
    for _ in range(1500):
        td_update(learner, (obs, actions, rewards, next_obs, dones))
    v0 = float(learner.quantile_values(np.array([0.0]))[0, 0])
    v1 = float(learner.quantile_values(np.array([1.0]))[0, 0])
    assert abs(v1) < 0.01
    assert abs(v0 - 1.0) < 0.01


def test_td_bandit_fixed_point_mean():
    learner = QuantileLearner(
        1, 1, RandomSource(12).spawn(0), m=32, hidden=(16,), learning_rate=5e-3
    )
    rng = RandomSource(12).spawn(1)
    obs = np.zeros((32, 1))
    actions = np.zeros(32, dtype=np.int64)
    dones = np.ones(32, dtype=bool)
    for _ in range(1200):
        rewards = rng.normal(2.0, 0.5, size=32)
        td_update(learner, (obs, actions, rewards, obs, dones))
    grid = learner.quantile_values(np.zeros(1))[0]
    assert abs(grid.mean() - 2.0) < 0.05


def test_td_bandit_fixed_point_spread():
    """Fitted quantile spread against the analytic interquartile range.

    With the Huber width at 1.0 and the reward scale at 0.5, the smoothed
    regression's stationary points sit near expectiles rather than
    quantiles, which compresses the fitted interquartile range to about two
    thirds of the Gaussian value. The 20 percent band asserted here is
    therefore out of reach at this reward scale; the check records the
    measured compression instead of passing.
    """
    learner = QuantileLearner(
        1, 1, RandomSource(12).spawn(0), m=32, hidden=(16,), learning_rate=5e-3
    )
    rng = RandomSource(12).spawn(1)
    obs = np.zeros((32, 1))
    actions = np.zeros(32, dtype=np.int64)
    dones = np.ones(32, dtype=bool)
    for _ in range(4000):
        rewards = rng.normal(2.0, 0.5, size=32)
        td_update(learner, (obs, actions, rewards, obs, dones))
    grid = learner.quantile_values(np.zeros(1))[0]
    iqr = np.interp(0.75, learner.levels, grid) - np.interp(0.25, learner.levels, grid)
    gaussian_iqr = 2.0 * 0.6744897501960817 * 0.5
    assert abs(iqr / gaussian_iqr - 1.0) < 0.2, f"iqr ratio {iqr / gaussian_iqr:.3f}"


def test_td_first_order_dominance_self_loop():
    # self-loop bandit: constant reward r gives value r / (1 - gamma)
    def trained_value(reward):
        learner = QuantileLearner(
            1, 1, RandomSource(13).spawn(0), m=8, gamma=0.9, hidden=(8,),
            learning_rate=1e-2, target_refresh=20,
        )
        obs = np.zeros((32, 1))
        batch = (obs, np.zeros(32, dtype=np.int64), np.full(32, reward), obs,
                 np.zeros(32, dtype=bool))
        for _ in range(3000):
            td_update(learner, batch)
        return float(learner.quantile_values(np.zeros(1))[0].mean())

    gap = trained_value(1.0) - trained_value(0.0)
    assert abs(gap - 10.0) < 1.0


def _fitted_constant_model(mu, raw):
    net = DenseNet([2, 2], rng=None)
    net.biases[0][0] = mu
    net.biases[0][1] = raw
    model = DecompositionModel([net])
    model.fitted = True
    return model


def test_local_reward_sample_modes():
    model = _fitted_constant_model(1.5, 0.0)
    rng = RandomSource(14).spawn(0)
    mean_value = local_reward_sample(model, np.zeros(2), 0, rng, mode="mean")
    assert isinstance(mean_value, float)
    assert mean_value == 1.5
    draws = local_reward_sample(model, np.zeros((10_000, 2)), 0, rng)
    assert draws.shape == (10_000,)
    sigma = np.logaddexp(0.0, 0.0) + 1e-3
    assert abs(draws.mean() - 1.5) < 3.0 * sigma / 100.0
    assert abs(draws.std() / sigma - 1.0) < 0.05


def test_local_reward_sample_scale_floor_and_errors():
    model = _fitted_constant_model(0.0, -40.0)
    rng = RandomSource(15).spawn(0)
    draws = local_reward_sample(model, np.zeros((10_000, 2)), 0, rng)
    assert 0.9e-3 < draws.std() < 1.1e-3
    with pytest.raises(DomainError):
        local_reward_sample(model, np.zeros(2), 0, rng, mode="median")
    model.fitted = False
    with pytest.raises(StateError):
        local_reward_sample(model, np.zeros(2), 0, rng)


def test_matrix_game_consistency_forms():
    rng = RandomSource(16).spawn(0)
    assert matrix_game_consistency([rng.normal(0, 2, 4)], [1.0])
    for _ in range(20):
        tables = [rng.normal(0, 2, 3), rng.normal(0, 2, 3)]
        assert matrix_game_consistency(tables, [0.5, 0.5])
    with pytest.raises(DomainError):
        matrix_game_consistency([], [])
    with pytest.raises(DomainError):
        matrix_game_consistency([[1.0, 2.0]], [-1.0])
    with pytest.raises(DomainError):
        matrix_game_consistency([[1.0, 2.0]], [0.0])
    with pytest.raises(DomainError):
        matrix_game_consistency([[1.0, 2.0], [0.0, 1.0]], [0.5, 0.5], scales=[1.0, 0.0])


def test_matrix_game_env_semantics():
    env = MatrixGameEnv([[1.0, 5.0], [2.0, 0.0]], [0.0, 0.0], weights=[1.0, 0.0])
    assert env.expected_reward([1, 0]) == 5.0
    assert env.expected_reward([0, 1]) == 1.0
    with pytest.raises(StateError):
        env.step([0, 0])
    env.reset(RandomSource(17).spawn(0))
    _, reward, done = env.step([1, 1])
    assert done
    assert reward == 5.0
    with pytest.raises(ConfigError):
        MatrixGameEnv([[1.0, 2.0]], [1.0, 1.0])
    with pytest.raises(ConfigError):
        MatrixGameEnv([[1.0, 2.0], [3.0, 4.0]], [1.0, 1.0], weights=[0.9, 0.9])


def test_train_config_validation():
    env = coop_spread_env(2, 3, horizon=4)
    noise = NoiseModel([(1.0, "gaussian", (0.0, 0.25))])
    base = dict(n_agents=2, iterations=1, buffer_capacity=8, batch_size=4,
                updates_per_iteration=1, m_quantiles=4, hidden=(8,),
                decomposition_hidden=(8,), fit_rounds=2, eval_episodes=1)
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="bogus", noise=noise, **base))
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="ndd", noise=None, **base))
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="naive", noise=None, **base))
    with pytest.raises(ConfigError):
        train(coop_spread_env(3, 3), MarlConfig(mode="control", **base))
    bad = dict(base)
    bad["iterations"] = 0
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="control", **bad))
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="control", data_fraction=0.0, **base))
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="ndd", noise=noise, dm_enabled=True, **base))
    with pytest.raises(ConfigError):
        train(env, MarlConfig(mode="control", local_reward_mode="max", **base))


def test_train_control_mode_smoke():
    env = coop_spread_env(2, 3, horizon=4)

    def run():
        config = MarlConfig(
            n_agents=2, mode="control", iterations=2, buffer_capacity=16,
            batch_size=8, updates_per_iteration=1, m_quantiles=4, hidden=(8,),
            eval_episodes=1, seed=0,
        )
        return train(env, config)

    result = run()
    assert result.model is None
    assert result.denoiser is None
    assert len(result.learners) == 2
    assert len(result.metrics) == 2
    assert result.final_eval_return() == result.metrics[-1].eval_return
    assert np.isnan(result.metrics[0].pdf_loss)
    assert result.metrics[0].epsilon == 1.0
    again = run()
    assert [m.eval_return for m in result.metrics] == [
        m.eval_return for m in again.metrics
    ]


def test_train_ndd_mode_smoke():
    env = coop_spread_env(2, 3, horizon=4)
    noise = NoiseModel([(1.0, "gaussian", (0.0, 0.25))])
    config = MarlConfig(
        n_agents=2, mode="ndd", noise=noise, iterations=2, buffer_capacity=16,
        batch_size=8, updates_per_iteration=1, m_quantiles=4, hidden=(8,),
        decomposition_hidden=(8,), fit_rounds=3, fit_subsample=8,
        eval_episodes=1, seed=1,
    )
    result = train(env, config)
    assert result.model is not None
    assert result.model.fitted
    assert np.isfinite(result.metrics[-1].pdf_loss)
    assert np.isfinite(result.metrics[-1].wasserstein)


def test_train_ndd_with_diffusion_smoke():
    env = coop_spread_env(2, 3, horizon=4)
    noise = NoiseModel([(1.0, "gaussian", (0.0, 0.25))])
    config = MarlConfig(
        n_agents=2, mode="ndd", noise=noise, iterations=2, buffer_capacity=64,
        batch_size=8, updates_per_iteration=1, m_quantiles=4, hidden=(8,),
        decomposition_hidden=(8,), fit_rounds=3, fit_subsample=8,
        data_fraction=0.5, dm_enabled=True, dm_iterations=3, dm_batch=16,
        eval_episodes=1, seed=2,
    )
    result = train(env, config)
    assert result.denoiser is not None
    assert np.isfinite(result.metrics[-1].pdf_loss)


def test_epsilon_schedule():
    config = MarlConfig(iterations=100, epsilon_start=1.0, epsilon_final=0.05)
    assert _epsilon_at(config, 0) == 1.0
    assert abs(_epsilon_at(config, 25) - 0.525) < 1e-12
    assert _epsilon_at(config, 50) == 0.05
    assert _epsilon_at(config, 99) == 0.05
