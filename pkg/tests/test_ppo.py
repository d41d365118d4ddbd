import asyncio
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from goaljump import exceptions
from goaljump.arch import Part, build_policy, build_value, to_arma
from goaljump.files import MetricsColumns, read_json, read_metrics
from goaljump.layout import RunLayout
from goaljump.nn import Adam
from goaljump.ppo import (RolloutBatch, clipped_surrogate, gae, metrics_row, normalized_return, ppo_update,
                          train_stage)


def brute_force_advantages(rewards, values, dones, gamma, lam, last_value, bootstrap):
    n = len(rewards)
    deltas = np.zeros(n)
    for t in range(n):
        if dones[t]:
            deltas[t] = rewards[t] + gamma * bootstrap[t] - values[t]
        else:
            following = values[t + 1] if t + 1 < n else last_value
            deltas[t] = rewards[t] + gamma * following - values[t]
    advantages = np.zeros(n)
    for t in range(n):
        for k in range(t, n):
            advantages[t] += (gamma * lam) ** (k - t) * deltas[k]
            if dones[k]:
                break
    return advantages


def test_gae_matches_the_brute_force_sum():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        n = int(rng.integers(1, 6))
        rewards = rng.normal(size=n)
        values = rng.normal(size=n)
        dones = rng.random(n) < 0.3
        bootstrap = np.where(dones & (rng.random(n) < 0.5), rng.normal(size=n), 0.0)
        last_value = float(rng.normal())
        gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        advantages, returns = gae(rewards, values, dones, gamma, lam, last_value, bootstrap)
        expected = brute_force_advantages(rewards, values, dones, gamma, lam, last_value, bootstrap)
        np.testing.assert_allclose(advantages, expected, atol=1e-10)
        np.testing.assert_allclose(returns, expected + values, atol=1e-10)


def test_gae_with_unit_lambda_gives_discounted_returns():
    rewards = np.array([1.0, 2.0, 3.0])
    values = np.array([0.5, -0.5, 0.25])
    _, returns = gae(rewards, values, np.zeros(3, dtype=bool), 0.9, 1.0, last_value=10.0)
    np.testing.assert_allclose(returns, [1 + 0.9 * 2 + 0.81 * 3 + 0.729 * 10, 2 + 0.9 * 3 + 0.81 * 10, 3 + 9.0])


def test_gae_stops_at_episode_ends():
    rewards = np.array([1.0, 1.0])
    values = np.zeros(2)
    advantages, _ = gae(rewards, values, np.array([True, False]), 0.99, 0.95, last_value=100.0)
    assert advantages[0] == 1.0


def test_normalized_return():
    np.testing.assert_allclose(normalized_return([300.0, 750.0], 750), [0.4, 1.0])
    with pytest.raises(ValueError):
        normalized_return([1.0], 0)


def test_clipped_surrogate():
    ratio = np.array([1.5, 0.5, 0.5, 1.5, 1.0])
    advantages = np.array([1.0, 1.0, -1.0, -1.0, 2.0])
    np.testing.assert_allclose(clipped_surrogate(ratio, advantages, 0.2), [1.2, 0.5, -0.8, -1.5, 2.0])


def rollout_batch(policy, observations, seed=0) -> RolloutBatch:
    rng = np.random.default_rng(seed)
    n = len(observations)
    mean = policy.forward(observations)
    policy.clear_cache()
    actions = policy.head.sample(mean, rng)
    advantages = rng.normal(size=n)
    return RolloutBatch(observations=observations, actions=actions, log_probs=policy.head.log_prob(mean, actions),
                        rewards=rng.normal(size=n), values=np.zeros(n), dones=np.zeros(n, dtype=bool),
                        truncated=np.zeros(n, dtype=bool), advantages=advantages, returns=advantages.copy())


def optimizer_for(policy, value, cfg):
    return Adam(policy.trainable() + list(value.named_tensors(policy.kind)), cfg.learning_rate)


def test_update_moves_the_policy_and_critic(small_config, dims, make_batch):
    cfg = small_config.ppo
    policy = build_policy("ours", dims, small_config.network, seed=1)
    value = build_value(dims, small_config.network, seed=1)
    batch = rollout_batch(policy, make_batch(dims, 16))
    before, value_before = policy.state_dict(), value.state_dict("ours")
    stats = ppo_update(policy, value, batch, cfg, optimizer_for(policy, value, cfg), np.random.default_rng(0))
    assert stats["skipped"] == 0
    assert all(np.isfinite(stats[k]) for k in ("policy_loss", "value_loss", "approx_kl", "clip_fraction",
                                                "grad_norm"))
    after, value_after = policy.state_dict(), value.state_dict("ours")
    assert not np.array_equal(before["ours/base/0/weight"], after["ours/base/0/weight"])
    assert not np.array_equal(before["ours/encoder/0/weight"], after["ours/encoder/0/weight"])
    assert any(not np.array_equal(value_before[n], value_after[n]) for n in value_before)


def test_positive_advantage_makes_the_action_more_likely(small_config, dims, make_batch):
    cfg = small_config.with_overrides({"ppo": {"normalize_advantages": False}}).ppo
    policy = build_policy("ours", dims, small_config.network, seed=4)
    value = build_value(dims, small_config.network, seed=4)
    observations = make_batch(dims, 1)[np.zeros(16, dtype=int)]
    mean = policy.forward(observations)
    policy.clear_cache()
    target = np.repeat(mean[:1] + policy.head.std, 16, axis=0)
    log_prob = policy.head.log_prob(mean, target)
    batch = RolloutBatch(observations=observations, actions=target, log_probs=log_prob, rewards=np.ones(16),
                         values=np.zeros(16), dones=np.zeros(16, dtype=bool), truncated=np.zeros(16, dtype=bool),
                         advantages=np.ones(16), returns=np.ones(16))
    stats = ppo_update(policy, value, batch, cfg, optimizer_for(policy, value, cfg), np.random.default_rng(0))
    assert stats["skipped"] == 0
    after = policy.head.log_prob(policy.forward(observations), target)
    policy.clear_cache()
    assert np.all(after > log_prob)


def test_update_leaves_the_arma_encoder_untouched(small_config, dims, make_batch):
    cfg = small_config.ppo
    arma = to_arma(build_policy("rma_student", dims, small_config.network, seed=2))
    value = build_value(dims, small_config.network, seed=2)
    batch = rollout_batch(arma, make_batch(dims, 16))
    before = arma.state_dict()
    ppo_update(arma, value, batch, cfg, optimizer_for(arma, value, cfg), np.random.default_rng(0))
    after = arma.state_dict()
    for name in before:
        if name.startswith(f"arma/{Part.encoder}/"):
            np.testing.assert_array_equal(after[name], before[name])
    assert not np.array_equal(before["arma/base/0/weight"], after["arma/base/0/weight"])


def test_non_finite_minibatches_are_skipped(small_config, dims, make_batch):
    cfg = small_config.ppo
    policy = build_policy("short_only", dims, small_config.network)
    value = build_value(dims, small_config.network)
    batch = rollout_batch(policy, make_batch(dims, 16))
    batch.returns[:] = np.nan
    before = policy.state_dict()
    stats = ppo_update(policy, value, batch, cfg, optimizer_for(policy, value, cfg), np.random.default_rng(0))
    assert stats["skipped"] == cfg.epochs * 16 // cfg.minibatch_size
    assert np.isnan(stats["policy_loss"])
    for name, tensor in policy.state_dict().items():
        np.testing.assert_array_equal(tensor, before[name])


def test_metrics_row(dims, small_config, make_batch):
    policy = build_policy("short_only", dims, small_config.network)
    batch = rollout_batch(policy, make_batch(dims, 4))
    empty = metrics_row(batch, 0, 1, "short_only", 3, 8)
    assert MetricsColumns.mean_return not in empty
    assert empty[MetricsColumns.wall_clock] is None

    batch.episode_returns = [2.0, 4.0, 6.0, 0.0]
    batch.episode_lengths = [4, 8, 8, 2]
    batch.terminations = ["fall", "timeout", "timeout", "diverged"]
    row = metrics_row(batch, 5, 2, "short_only", 3, 8)
    assert row[MetricsColumns.mean_return] == 3.0
    assert row[MetricsColumns.normalized_return] == 3.0 / 8
    assert row[MetricsColumns.mean_episode_len] == 5.5
    fractions = [row[c] for c in MetricsColumns.fraction_terminated_by]
    assert fractions == [0.25, 0.0, 0.0, 0.5]


def train(config, out, **kwargs):
    return asyncio.run(train_stage(config, 1, "ours", out, seed=7, iterations=2, **kwargs))


def test_training_writes_the_stage_directory(tmp_path, small_config):
    final, rows = train(small_config, tmp_path)
    stage_dir = RunLayout(tmp_path).stage_dir("ours", "flat", 7, 1)
    assert final == stage_dir / RunLayout.FINAL_CHECKPOINT
    assert final.exists()
    assert (stage_dir / RunLayout.checkpoint_name(1)).exists()
    assert (stage_dir / RunLayout.checkpoint_name(2)).exists()
    assert [r[MetricsColumns.iteration] for r in read_metrics(stage_dir / RunLayout.METRICS)] == ["0", "1"]
    assert len(rows) == 2
    info = read_json(stage_dir / RunLayout.RUN_INFO)
    assert (info["kind"], info["stage"], info["seed"], info["iterations"]) == ("ours", 1, 7, 2)
    assert info["config"]["ppo"]["batch_size"] == 16


def test_training_is_deterministic(tmp_path, small_config):
    a, _ = train(small_config, tmp_path / "a")
    b, _ = train(small_config, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    assert (a.parent / RunLayout.METRICS).read_bytes() == (b.parent / RunLayout.METRICS).read_bytes()


def test_parallel_collection_matches_in_process(tmp_path, small_config):
    serial, _ = train(small_config, tmp_path / "serial")
    with ProcessPoolExecutor(2) as executor:
        parallel, _ = train(small_config, tmp_path / "parallel", executor=executor)
    assert serial.read_bytes() == parallel.read_bytes()


def test_later_stages_need_the_previous_one(tmp_path, small_config):
    with pytest.raises(exceptions.PrerequisiteError, match="train stage 1 first"):
        asyncio.run(train_stage(small_config, 2, "ours", tmp_path))
    train(small_config, tmp_path)
    final, _ = asyncio.run(train_stage(small_config, 2, "ours", tmp_path, seed=7, iterations=1))
    assert final.exists()
