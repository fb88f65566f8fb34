"""Masked distributions, the recurrent policy, advantage estimation, the
clipped-surrogate update, and checkpoint round-trips."""

from __future__ import annotations

import numpy as np
import pytest
import torch

import oracles
from uedlab.degen import kl_prior
from uedlab.errors import CheckpointError, ConfigError, EmptyMask, NonFiniteLoss
from uedlab.learner import (
    MaskedCategorical,
    PPOConfig,
    RecurrentPolicy,
    RolloutBatch,
    gae,
    load_checkpoint,
    ppo_loss_for_gradcheck,
    ppo_update,
    restore_policy,
    save_checkpoint,
)


# ---------------------------------------------------------------------------
# MaskedCategorical


def test_masked_probs_exact():
    logits = torch.tensor([[1.0, 2.0, 3.0, 4.0]], dtype=torch.float64)
    mask = torch.tensor([[True, False, True, False]])
    dist = MaskedCategorical(logits, mask)
    probs = dist.probs[0]
    assert probs[1] == 0.0 and probs[3] == 0.0
    z = np.exp(1.0) + np.exp(3.0)
    assert probs[0].item() == pytest.approx(np.exp(1.0) / z, abs=1e-12)
    assert probs[2].item() == pytest.approx(np.exp(3.0) / z, abs=1e-12)
    assert probs.sum().item() == pytest.approx(1.0, abs=1e-12)


def test_masked_sample_mode_logprob():
    logits = torch.tensor([[0.0, 10.0, 0.0], [5.0, 0.0, 0.0]])
    mask = torch.tensor([[True, False, True], [True, True, False]])
    dist = MaskedCategorical(logits, mask)
    gen = torch.Generator().manual_seed(0)
    for _ in range(200):
        picks = dist.sample(gen)
        assert picks[0].item() in (0, 2)
        assert picks[1].item() in (0, 1)
    assert dist.mode().tolist() == [0, 0] or dist.mode().tolist() == [2, 0]
    # row 0 legal logits are equal; mode must still be a legal index
    assert dist.mode()[1].item() == 0
    lp = dist.log_prob(torch.tensor([0, 0]))
    assert lp[0].item() == pytest.approx(np.log(0.5), abs=1e-6)


def test_empty_mask_raises():
    with pytest.raises(EmptyMask):
        MaskedCategorical(torch.zeros(2, 3),
                          torch.tensor([[True, True, True], [False, False, False]]))


def test_entropy_and_kl_manual():
    logits = torch.tensor([[0.3, -1.2, 2.0, 0.0, 0.7]], dtype=torch.float64)
    mask = torch.tensor([[True, True, False, True, False]])
    dist = MaskedCategorical(logits, mask)
    legal = [0, 1, 3]
    z = sum(np.exp(logits[0, i].item()) for i in legal)
    p = {i: np.exp(logits[0, i].item()) / z for i in legal}
    want_h = -sum(p[i] * np.log(p[i]) for i in legal)
    assert dist.entropy()[0].item() == pytest.approx(want_h, abs=1e-12)

    prior = torch.tensor(kl_prior(0.05), dtype=torch.float64)
    q_raw = {i: prior[i].item() for i in legal}
    qz = sum(q_raw.values())
    q = {i: q_raw[i] / qz for i in legal}
    want_kl = sum(p[i] * (np.log(p[i]) - np.log(q[i])) for i in legal)
    assert dist.kl_to_prior(prior)[0].item() == pytest.approx(want_kl, abs=1e-12)


def test_unmasked_kl_zero_against_self():
    prior = torch.tensor(kl_prior(0.1), dtype=torch.float64)
    dist = MaskedCategorical(prior.log().unsqueeze(0))
    assert dist.kl_to_prior(prior)[0].item() == pytest.approx(0.0, abs=1e-12)


def test_masked_gradients_stay_finite():
    # entropy/KL through a hard mask must not produce NaN gradients
    logits = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
    mask = torch.tensor([
        [True, False, True, False, True],
        [True, True, True, True, True],
        [False, False, True, False, False],
    ])
    dist = MaskedCategorical(logits, mask)
    prior = torch.tensor(kl_prior(0.05), dtype=torch.float64)
    loss = (dist.entropy() + dist.kl_to_prior(prior)
            + dist.log_prob(torch.tensor([0, 4, 2]))).sum()
    loss.backward()
    assert torch.isfinite(logits.grad).all()


# ---------------------------------------------------------------------------
# RecurrentPolicy


def test_parameter_count_and_determinism():
    policy = RecurrentPolicy(4, (4, 5), 3, seed=0)
    assert sum(p.numel() for p in policy.parameters()) == 151
    twin = RecurrentPolicy(4, (4, 5), 3, seed=0)
    for a, b in zip(policy.parameters(), twin.parameters()):
        assert torch.equal(a, b)
    other = RecurrentPolicy(4, (4, 5), 3, seed=1)
    assert any(not torch.equal(a, b)
               for a, b in zip(policy.parameters(), other.parameters()))


def test_orthogonal_init_geometry():
    policy = RecurrentPolicy(4, (4,), 3, seed=7)
    w = policy.encoder.weight.detach()          # (3, 4): rows orthogonal
    np.testing.assert_allclose((w @ w.T).numpy(), 2.0 * np.eye(3), atol=1e-5)
    wih = policy.cell.weight_ih.detach()        # (12, 3): columns orthonormal
    np.testing.assert_allclose((wih.T @ wih).numpy(), np.eye(3), atol=1e-5)
    assert policy.encoder.bias.abs().sum() == 0.0


def test_act_masks_and_greedy():
    policy = RecurrentPolicy(6, (4,), 8, seed=3)
    obs = np.random.default_rng(0).normal(size=(5, 6)).astype(np.float32)
    mask = np.zeros((5, 4), dtype=bool)
    mask[:, 2] = True            # only action 2 is legal anywhere
    state = policy.initial_state(5)
    gen = torch.Generator().manual_seed(0)
    actions, logp, value, _ = policy.act(obs, state, [mask], gen)
    assert (actions[0] == 2).all()
    np.testing.assert_allclose(logp, 0.0, atol=1e-6)  # certain choice
    greedy_actions, _, _, _ = policy.act(obs, state, [mask], gen, greedy=True)
    assert (greedy_actions[0] == 2).all()
    assert np.isfinite(value).all()
    with pytest.raises(EmptyMask):
        policy.act(obs, state, [np.zeros((5, 4), dtype=bool)], gen)


def test_act_deterministic_under_seed():
    policy = RecurrentPolicy(5, (3,), 8, seed=1)
    obs = np.random.default_rng(4).normal(size=(4, 5)).astype(np.float32)
    out1 = policy.act(obs, policy.initial_state(4), None,
                      torch.Generator().manual_seed(11))
    out2 = policy.act(obs, policy.initial_state(4), None,
                      torch.Generator().manual_seed(11))
    np.testing.assert_array_equal(out1[0][0], out2[0][0])
    np.testing.assert_array_equal(out1[1], out2[1])


def _rollout_for_eval(policy, big_t, batch, seed):
    """Drive act() step by step; return everything evaluate_sequence needs."""
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    n_heads = len(policy.action_dims)
    obs = rng.normal(size=(big_t, batch, policy.obs_dim)).astype(np.float32)
    masks = []
    for d in policy.action_dims:
        m = rng.random((big_t, batch, d)) < 0.7
        m[..., 0] = True         # keep every row legal
        masks.append(m)
    state = policy.initial_state(batch)
    actions = np.zeros((big_t, batch, n_heads), dtype=np.int64)
    logps = np.zeros((big_t, batch))
    values = np.zeros((big_t, batch))
    for t in range(big_t):
        step_masks = [m[t] for m in masks]
        acts, lp, v, state = policy.act(obs[t], state, step_masks, gen)
        for i in range(n_heads):
            actions[t, :, i] = acts[i]
        logps[t], values[t] = lp, v
    return obs, masks, actions, logps, values


def test_evaluate_sequence_matches_act():
    policy = RecurrentPolicy(5, (4, 5), 6, seed=2)
    big_t, batch = 6, 3
    obs, masks, actions, logps, values = _rollout_for_eval(policy, big_t, batch, 8)
    starts = torch.zeros(big_t, batch)
    starts[0] = 1.0
    with torch.no_grad():
        new_logp, new_values, reg = policy.evaluate_sequence(
            torch.as_tensor(obs), starts, policy.initial_state(batch),
            torch.as_tensor(actions), [torch.as_tensor(m) for m in masks])
    np.testing.assert_allclose(new_logp.numpy(), logps, atol=1e-5)
    np.testing.assert_allclose(new_values.numpy(), values, atol=1e-5)
    assert torch.isfinite(reg).all()


def test_evaluate_sequence_starts_reset_memory():
    policy = RecurrentPolicy(5, (3,), 6, seed=9)
    big_t, batch = 8, 2
    cut = 5
    obs, masks, actions, _, _ = _rollout_for_eval(policy, big_t, batch, 13)
    starts = torch.zeros(big_t, batch)
    starts[0] = 1.0
    starts[cut] = 1.0            # a fresh episode begins mid-sequence
    with torch.no_grad():
        joint = policy.evaluate_sequence(
            torch.as_tensor(obs), starts, policy.initial_state(batch),
            torch.as_tensor(actions), [torch.as_tensor(m) for m in masks])
        tail = policy.evaluate_sequence(
            torch.as_tensor(obs[cut:]), torch.zeros(big_t - cut, batch).index_put_(
                (torch.tensor(0),), torch.ones(batch)),
            policy.initial_state(batch),
            torch.as_tensor(actions[cut:]),
            [torch.as_tensor(m[cut:]) for m in masks])
    np.testing.assert_allclose(joint[0][cut:].numpy(), tail[0].numpy(), atol=1e-6)
    np.testing.assert_allclose(joint[1][cut:].numpy(), tail[1].numpy(), atol=1e-6)


def test_evaluate_sequence_kl_prior_on_second_head():
    policy = RecurrentPolicy(5, (4, 5), 6, seed=2)
    obs, masks, actions, _, _ = _rollout_for_eval(policy, 3, 2, 1)
    starts = torch.zeros(3, 2)
    starts[0] = 1.0
    prior = torch.tensor(kl_prior(0.05))
    with torch.no_grad():
        _, _, reg_ent = policy.evaluate_sequence(
            torch.as_tensor(obs), starts, policy.initial_state(2),
            torch.as_tensor(actions), [torch.as_tensor(m) for m in masks])
        _, _, reg_kl = policy.evaluate_sequence(
            torch.as_tensor(obs), starts, policy.initial_state(2),
            torch.as_tensor(actions), [torch.as_tensor(m) for m in masks],
            kl_prior=prior)
    # swapping entropy for -KL on the object head strictly changes the
    # regulariser unless the policy happens to match the prior
    assert not torch.allclose(reg_ent, reg_kl)
    assert torch.isfinite(reg_kl).all()


# ---------------------------------------------------------------------------
# GAE


def test_gae_matches_oracle_without_dones():
    rng = np.random.default_rng(0)
    for _ in range(20):
        tr = oracles.random_trajectory(rng, 10)
        adv, ret = gae(tr.rewards, tr.values, np.zeros(tr.T), 0.97, 0.9)
        want = oracles.oracle_gae(list(tr.rewards), list(tr.values), 0.97, 0.9)
        np.testing.assert_allclose(adv, want, atol=1e-9)
        np.testing.assert_allclose(ret, np.asarray(want) + tr.values[:-1], atol=1e-9)


def test_gae_done_cuts_equal_separate_episodes():
    rng = np.random.default_rng(5)
    r1, v1 = rng.normal(size=3), rng.normal(size=4)
    r2, v2 = rng.normal(size=4), rng.normal(size=5)
    rewards = np.concatenate([r1, r2])
    values = np.concatenate([v1[:3], v2])    # episode 1's bootstrap is cut anyway
    dones = np.zeros(7)
    dones[2] = 1.0
    adv, _ = gae(rewards, values, dones, 0.99, 0.95)
    v1_term = v1.copy()
    v1_term[3] = 0.0                          # done zeroes the bootstrap
    np.testing.assert_allclose(
        adv[:3], oracles.oracle_gae(list(r1), list(v1_term), 0.99, 0.95), atol=1e-12)
    np.testing.assert_allclose(
        adv[3:], oracles.oracle_gae(list(r2), list(v2), 0.99, 0.95), atol=1e-12)


def test_gae_batched_columns_independent():
    rng = np.random.default_rng(6)
    rewards = rng.normal(size=(5, 3))
    values = rng.normal(size=(6, 3))
    dones = (rng.random((5, 3)) < 0.3).astype(float)
    adv, ret = gae(rewards, values, dones, 0.99, 0.9)
    for b in range(3):
        a_col, r_col = gae(rewards[:, b], values[:, b], dones[:, b], 0.99, 0.9)
        np.testing.assert_allclose(adv[:, b], a_col, atol=1e-12)
        np.testing.assert_allclose(ret[:, b], r_col, atol=1e-12)


def test_gae_shape_errors():
    with pytest.raises(ConfigError):
        gae(np.zeros(3), np.zeros(3), np.zeros(3), 0.99, 0.9)
    with pytest.raises(ConfigError):
        gae(np.zeros(3), np.zeros(4), np.zeros(2), 0.99, 0.9)


# ---------------------------------------------------------------------------
# PPO update


def make_batch(policy, big_t=5, batch=4, seed=0, with_prior=False):
    obs, masks, actions, logps, values = _rollout_for_eval(policy, big_t, batch, seed)
    rng = np.random.default_rng(seed + 1)
    rewards = rng.normal(size=(big_t, batch))
    dones = np.zeros((big_t, batch))
    dones[-1] = 1.0
    values_ext = np.concatenate([values, np.zeros((1, batch))])
    adv, ret = gae(rewards, values_ext, dones, 0.995, 0.95)
    starts = np.zeros((big_t, batch))
    starts[0] = 1.0
    return RolloutBatch(
        obs=obs, actions=actions, masks=list(masks), log_probs=logps,
        values=values, advantages=adv, returns=ret, starts=starts,
        valid=np.ones((big_t, batch), dtype=bool),
        kl_prior=kl_prior(0.05) if with_prior else None,
    )


def small_cfg(**kw):
    defaults = dict(num_envs=4, minibatches=2, epochs=2, num_steps=5,
                    hidden_dim=6, learning_rate=1e-3)
    defaults.update(kw)
    return PPOConfig(**defaults)


def test_ppo_update_changes_params_and_reports_stats():
    policy = RecurrentPolicy(5, (4, 5), 6, seed=0)
    before = {k: v.clone() for k, v in policy.state_dict().items()}
    cfg = small_cfg()
    opt = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)
    stats = ppo_update(policy, opt, make_batch(policy, with_prior=True), cfg,
                       update_idx=0, total_updates=10,
                       gen=torch.Generator().manual_seed(0))
    assert set(stats) == {"policy_loss", "value_loss", "regularizer"}
    assert all(np.isfinite(v) for v in stats.values())
    assert any(not torch.equal(before[k], v) for k, v in policy.state_dict().items())


def test_ppo_update_anneals_lr():
    policy = RecurrentPolicy(5, (4,), 6, seed=0)
    cfg = small_cfg(anneal_lr=True)
    opt = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)
    ppo_update(policy, opt, make_batch(policy), cfg, update_idx=5, total_updates=10,
               gen=torch.Generator().manual_seed(0))
    assert opt.param_groups[0]["lr"] == pytest.approx(cfg.learning_rate * 0.5)


def test_ppo_update_deterministic():
    outs = []
    for _ in range(2):
        policy = RecurrentPolicy(5, (4,), 6, seed=4)
        cfg = small_cfg()
        opt = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate,
                               eps=cfg.adam_eps)
        ppo_update(policy, opt, make_batch(policy, seed=2), cfg, 0, 10,
                   torch.Generator().manual_seed(7))
        outs.append({k: v.clone() for k, v in policy.state_dict().items()})
    for k in outs[0]:
        assert torch.equal(outs[0][k], outs[1][k])


def test_ppo_update_restores_on_nonfinite():
    policy = RecurrentPolicy(5, (4,), 6, seed=0)
    before = {k: v.clone() for k, v in policy.state_dict().items()}
    cfg = small_cfg()
    opt = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)
    batch = make_batch(policy)
    batch.advantages[0, 0] = np.inf
    with pytest.raises(NonFiniteLoss):
        ppo_update(policy, opt, batch, cfg, 0, 10, torch.Generator().manual_seed(0))
    for k, v in policy.state_dict().items():
        assert torch.equal(before[k], v)


def test_ppo_update_minibatch_divisibility():
    policy = RecurrentPolicy(5, (4,), 6, seed=0)
    cfg = small_cfg(num_envs=6, minibatches=3)
    opt = torch.optim.Adam(policy.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)
    with pytest.raises(ConfigError):
        ppo_update(policy, opt, make_batch(policy, batch=4), cfg, 0, 10,
                   torch.Generator().manual_seed(0))
    with pytest.raises(ConfigError):
        PPOConfig(num_envs=4, minibatches=3)


def test_gradcheck_loss_is_finite_scalar():
    policy = RecurrentPolicy(5, (4, 5), 6, seed=0)
    batch = make_batch(policy, with_prior=True)
    policy.double()
    loss = ppo_loss_for_gradcheck(policy, batch, small_cfg())
    assert loss.ndim == 0 and torch.isfinite(loss)


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    policy = RecurrentPolicy(7, (4, 5), 9, seed=5)
    path = tmp_path / "policy.ckpt.npz"
    save_checkpoint(path, policy, config_hash="abc123", update_count=17)
    params, meta = load_checkpoint(path)
    assert meta == {"config_hash": "abc123", "update_count": 17,
                    "obs_dim": 7, "action_dims": (4, 5), "hidden_dim": 9}
    restored = restore_policy(params, meta)
    for k, v in policy.state_dict().items():
        assert torch.equal(v, restored.state_dict()[k])
    obs = np.random.default_rng(0).normal(size=(3, 7)).astype(np.float32)
    with torch.no_grad():
        a = policy.forward_step(torch.as_tensor(obs), policy.initial_state(3))
        b = restored.forward_step(torch.as_tensor(obs), restored.initial_state(3))
    assert torch.equal(a[1], b[1])


def test_checkpoint_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, format_version=np.int64(2))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path2 = tmp_path / "worse.npz"
    np.savez(path2, stuff=np.zeros(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(path2)
