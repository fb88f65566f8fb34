"""Compact recurrent actor-critic learner.

One architecture serves both agents: flattened observation -> one affine +
nonlinearity -> LSTM cell -> one categorical head per action component plus a
value head. Action legality arrives as boolean masks; a masked action has
probability exactly zero, contributes nothing to the entropy, and raising on
an all-masked row is the caller's signal that the state machine broke.

The update is clipped-surrogate policy gradient with value clipping,
per-minibatch advantage normalization over valid steps, epoch/minibatch
shuffling along the environment axis (sequences stay whole for the
recurrence), optional linear learning-rate decay, and gradient-norm clipping.
The generator's second head (object choice) is regularised toward a fixed
prior by a KL term in place of its entropy bonus; the first head keeps
entropy. A non-finite loss or gradient aborts the whole update and restores
the parameters it started from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, EmptyMask, NonFiniteLoss


@dataclass
class PPOConfig:
    gamma: float = 0.995
    gae_lambda: float = 0.95
    num_steps: int = 512
    epochs: int = 4
    minibatches: int = 4
    clip_range: float = 0.04
    num_envs: int = 256
    learning_rate: float = 5e-4
    anneal_lr: bool = True
    adam_eps: float = 1e-5
    max_grad_norm: float = 0.5
    value_clip: bool = True
    value_loss_coef: float = 0.5
    entropy_coef: float = 1e-3
    hidden_dim: int = 256

    def __post_init__(self):
        if self.epochs < 1 or self.minibatches < 1:
            raise ConfigError("epochs and minibatches must be >= 1")
        if self.num_envs % self.minibatches != 0:
            raise ConfigError(
                f"num_envs {self.num_envs} must divide into {self.minibatches} minibatches"
            )
        if not 0 < self.clip_range:
            raise ConfigError("clip_range must be positive")


def _orthogonal(tensor: torch.Tensor, gain: float, gen: torch.Generator) -> None:
    rows, cols = tensor.shape
    flat = torch.randn(max(rows, cols), min(rows, cols), generator=gen, dtype=tensor.dtype)
    q, r = torch.linalg.qr(flat)
    q = q * torch.sign(torch.diagonal(r))
    if rows < cols:
        q = q.T
    with torch.no_grad():
        tensor.copy_(gain * q[:rows, :cols])


class MaskedCategorical:
    """Categorical over logits with hard legality masking.

    Masked entries get probability exactly 0 (log-space -inf), never appear in
    samples, and are excluded from entropy and KL sums. Raises EmptyMask if
    any row has no legal entry.
    """

    def __init__(self, logits: torch.Tensor, mask: torch.Tensor | None = None):
        if mask is not None:
            mask = mask.to(torch.bool)
            if not mask.any(dim=-1).all():
                raise EmptyMask("a state offers no legal action")
            logits = logits.masked_fill(~mask, -torch.inf)
        self.mask = mask
        self.log_probs = logits - torch.logsumexp(logits, dim=-1, keepdim=True)

    @property
    def probs(self) -> torch.Tensor:
        return self.log_probs.exp()

    def sample(self, gen: torch.Generator) -> torch.Tensor:
        probs = self.probs
        flat = probs.reshape(-1, probs.shape[-1])
        picks = torch.multinomial(flat, 1, generator=gen).squeeze(-1)
        return picks.reshape(probs.shape[:-1])

    def mode(self) -> torch.Tensor:
        return self.log_probs.argmax(dim=-1)

    def log_prob(self, actions: torch.Tensor) -> torch.Tensor:
        return self.log_probs.gather(-1, actions.unsqueeze(-1).long()).squeeze(-1)

    def _finite_log_probs(self) -> torch.Tensor:
        """log-probs with -inf (masked) entries replaced by 0. Those entries
        carry probability exactly 0, so products with them vanish — and the
        replacement keeps the backward pass free of 0 * inf = NaN."""
        if self.mask is None:
            return self.log_probs
        return torch.where(self.mask, self.log_probs, torch.zeros_like(self.log_probs))

    def entropy(self) -> torch.Tensor:
        return -(self.probs * self._finite_log_probs()).sum(-1)

    def kl_to_prior(self, prior: torch.Tensor) -> torch.Tensor:
        """KL(self || prior restricted to this row's legal support)."""
        prior = prior.to(self.log_probs.dtype)
        if self.mask is not None:
            prior = prior * self.mask
        prior = prior / prior.sum(-1, keepdim=True)
        log_q = torch.where(prior > 0, prior.log(), torch.zeros_like(prior))
        terms = self.probs * (self._finite_log_probs() - log_q)
        return terms.sum(-1)


class RecurrentPolicy(nn.Module):
    """Encoder -> LSTM cell -> categorical head(s) + value head."""

    def __init__(self, obs_dim: int, action_dims: Sequence[int], hidden_dim: int,
                 seed: int = 0):
        super().__init__()
        self.obs_dim = obs_dim
        self.action_dims = tuple(action_dims)
        self.hidden_dim = hidden_dim
        self.encoder = nn.Linear(obs_dim, hidden_dim)
        self.cell = nn.LSTMCell(hidden_dim, hidden_dim)
        self.heads = nn.ModuleList(nn.Linear(hidden_dim, d) for d in self.action_dims)
        self.value_head = nn.Linear(hidden_dim, 1)
        gen = torch.Generator().manual_seed(seed)
        _orthogonal(self.encoder.weight, math.sqrt(2.0), gen)
        nn.init.zeros_(self.encoder.bias)
        _orthogonal(self.cell.weight_ih, 1.0, gen)
        _orthogonal(self.cell.weight_hh, 1.0, gen)
        nn.init.zeros_(self.cell.bias_ih)
        nn.init.zeros_(self.cell.bias_hh)
        for head in self.heads:
            _orthogonal(head.weight, 0.01, gen)
            nn.init.zeros_(head.bias)
        _orthogonal(self.value_head.weight, 1.0, gen)
        nn.init.zeros_(self.value_head.bias)

    def initial_state(self, batch: int, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
        h = torch.zeros(batch, self.hidden_dim, dtype=dtype)
        return h, h.clone()

    def forward_step(self, obs: torch.Tensor, state: tuple[torch.Tensor, torch.Tensor]):
        x = torch.relu(self.encoder(obs))
        h, c = self.cell(x, state)
        logits = [head(h) for head in self.heads]
        value = self.value_head(h).squeeze(-1)
        return logits, value, (h, c)

    @torch.no_grad()
    def act(self, obs: np.ndarray, state, masks: Sequence[np.ndarray | None] | None,
            gen: torch.Generator, greedy: bool = False):
        """One acting step for a batch of environments.

        Returns (actions [list per head of (B,) numpy], joint log-prob (B,),
        value (B,), new recurrent state).
        """
        obs_t = torch.as_tensor(obs, dtype=torch.float32)
        logits, value, new_state = self.forward_step(obs_t, state)
        actions, logp = [], 0.0
        for i, head_logits in enumerate(logits):
            mask = None
            if masks is not None and masks[i] is not None:
                mask = torch.as_tensor(masks[i])
            dist = MaskedCategorical(head_logits, mask)
            a = dist.mode() if greedy else dist.sample(gen)
            logp = logp + dist.log_prob(a)
            actions.append(a.numpy())
        return actions, logp.numpy(), value.numpy(), new_state

    def evaluate_sequence(self, obs: torch.Tensor, starts: torch.Tensor,
                          init_state: tuple[torch.Tensor, torch.Tensor],
                          actions: torch.Tensor,
                          masks: Sequence[torch.Tensor | None] | None,
                          kl_prior: torch.Tensor | None = None):
        """Re-run the recurrence over (T, B) sequences for the update.

        `starts[t, b] = 1` zeroes the recurrent state before consuming step t
        (episode boundary). `actions` is (T, B, n_heads). Returns per-step
        joint log-probs, values, and the regulariser (entropy for each head,
        with the second head's entropy replaced by -KL to `kl_prior` when
        given — so the caller always *adds* coef * regulariser to the
        objective).
        """
        big_t, batch = obs.shape[0], obs.shape[1]
        h, c = init_state
        logps = []
        values = []
        regs = []
        for t in range(big_t):
            keep = (1.0 - starts[t]).unsqueeze(-1)
            h, c = h * keep, c * keep
            logits, value, (h, c) = self.forward_step(obs[t], (h, c))
            step_logp = 0.0
            step_reg = 0.0
            for i, head_logits in enumerate(logits):
                mask = masks[i][t] if masks is not None and masks[i] is not None else None
                dist = MaskedCategorical(head_logits, mask)
                step_logp = step_logp + dist.log_prob(actions[t, :, i])
                if i == 1 and kl_prior is not None:
                    step_reg = step_reg - dist.kl_to_prior(kl_prior)
                else:
                    step_reg = step_reg + dist.entropy()
            logps.append(step_logp)
            values.append(value)
            regs.append(step_reg)
        return torch.stack(logps), torch.stack(values), torch.stack(regs)


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (T, ...) arrays.

    `values` has one more leading row than `rewards` (bootstrap last);
    `dones[t] = 1` cuts the bootstrap and the recursion after step t.
    Returns (advantages, returns), returns being advantage + value.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    big_t = rewards.shape[0]
    if values.shape[0] != big_t + 1 or dones.shape[0] != big_t:
        raise ConfigError("gae: values needs T+1 rows and dones T rows")
    adv = np.zeros_like(rewards)
    acc = np.zeros_like(rewards[0] if rewards.ndim > 1 else np.float64(0.0))
    for t in range(big_t - 1, -1, -1):
        cont = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * cont - values[t]
        acc = delta + gamma * lam * cont * acc
        adv[t] = acc
    return adv, adv + values[:-1]


@dataclass
class RolloutBatch:
    """One update's worth of (T, B)-shaped experience for a policy."""

    obs: np.ndarray                 # (T, B, obs_dim)
    actions: np.ndarray             # (T, B, n_heads)
    masks: list[np.ndarray | None]  # per head: (T, B, A) bool or None
    log_probs: np.ndarray           # (T, B)
    values: np.ndarray              # (T, B)
    advantages: np.ndarray          # (T, B)
    returns: np.ndarray             # (T, B)
    starts: np.ndarray              # (T, B) 1.0 where an episode begins at t
    valid: np.ndarray               # (T, B) bool; False rows are padding
    kl_prior: np.ndarray | None = None  # prior probs for the second head


def _masked_mean(x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    return (x * valid).sum() / valid.sum()


def ppo_update(policy: RecurrentPolicy, optimizer: torch.optim.Optimizer,
               batch: RolloutBatch, cfg: PPOConfig, update_idx: int,
               total_updates: int, gen: torch.Generator) -> dict:
    """One full clipped-surrogate update (epochs x env-minibatches).

    Raises NonFiniteLoss — with parameters restored to their pre-update
    values — if any loss or gradient goes non-finite.
    """
    if cfg.anneal_lr:
        frac = 1.0 - update_idx / max(1, total_updates)
        for group in optimizer.param_groups:
            group["lr"] = cfg.learning_rate * frac

    dtype = next(policy.parameters()).dtype
    obs = torch.as_tensor(batch.obs, dtype=dtype)
    actions = torch.as_tensor(batch.actions, dtype=torch.long)
    old_logp = torch.as_tensor(batch.log_probs, dtype=dtype)
    old_values = torch.as_tensor(batch.values, dtype=dtype)
    advantages = torch.as_tensor(batch.advantages, dtype=dtype)
    returns = torch.as_tensor(batch.returns, dtype=dtype)
    starts = torch.as_tensor(batch.starts, dtype=dtype)
    valid = torch.as_tensor(batch.valid, dtype=dtype)
    masks = [torch.as_tensor(m) if m is not None else None for m in batch.masks]
    prior = torch.as_tensor(batch.kl_prior, dtype=dtype) if batch.kl_prior is not None else None

    n_envs = obs.shape[1]
    if n_envs % cfg.minibatches != 0:
        raise ConfigError(f"{n_envs} rollout envs will not split into {cfg.minibatches}")
    mb_size = n_envs // cfg.minibatches
    backup = {k: v.detach().clone() for k, v in policy.state_dict().items()}
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "regularizer": 0.0, "n": 0}

    def fail() -> None:
        policy.load_state_dict(backup)
        raise NonFiniteLoss("non-finite loss or gradient; parameters restored")

    for _epoch in range(cfg.epochs):
        perm = torch.randperm(n_envs, generator=gen)
        for mb in range(cfg.minibatches):
            cols = perm[mb * mb_size:(mb + 1) * mb_size]
            mb_masks = [m[:, cols] if m is not None else None for m in masks]
            new_logp, new_values, reg = policy.evaluate_sequence(
                obs[:, cols], starts[:, cols],
                policy.initial_state(len(cols), dtype=dtype),
                actions[:, cols], mb_masks, kl_prior=prior,
            )
            v = valid[:, cols]
            adv = advantages[:, cols]
            mean = _masked_mean(adv, v)
            var = _masked_mean((adv - mean) ** 2, v)
            adv = (adv - mean) / (var.sqrt() + 1e-8)

            ratio = (new_logp - old_logp[:, cols]).exp()
            surr1 = ratio * adv
            surr2 = torch.clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * adv
            policy_loss = -_masked_mean(torch.minimum(surr1, surr2), v)

            ret = returns[:, cols]
            if cfg.value_clip:
                v_old = old_values[:, cols]
                v_clipped = v_old + torch.clamp(new_values - v_old,
                                                -cfg.clip_range, cfg.clip_range)
                value_loss = 0.5 * _masked_mean(
                    torch.maximum((new_values - ret) ** 2, (v_clipped - ret) ** 2), v
                )
            else:
                value_loss = 0.5 * _masked_mean((new_values - ret) ** 2, v)

            reg_mean = _masked_mean(reg, v)
            loss = (policy_loss + cfg.value_loss_coef * value_loss
                    - cfg.entropy_coef * reg_mean)
            if not torch.isfinite(loss):
                fail()
            optimizer.zero_grad()
            loss.backward()
            grad_norm = nn.utils.clip_grad_norm_(policy.parameters(), cfg.max_grad_norm)
            if not torch.isfinite(grad_norm):
                fail()
            optimizer.step()
            stats["policy_loss"] += float(policy_loss.detach())
            stats["value_loss"] += float(value_loss.detach())
            stats["regularizer"] += float(reg_mean.detach())
            stats["n"] += 1

    n = max(1, stats.pop("n"))
    return {k: v / n for k, v in stats.items()}


def ppo_loss_for_gradcheck(policy: RecurrentPolicy, batch: RolloutBatch,
                           cfg: PPOConfig) -> torch.Tensor:
    """The exact single-minibatch objective, exposed for derivative oracles."""
    dtype = next(policy.parameters()).dtype
    obs = torch.as_tensor(batch.obs, dtype=dtype)
    actions = torch.as_tensor(batch.actions, dtype=torch.long)
    old_logp = torch.as_tensor(batch.log_probs, dtype=dtype)
    old_values = torch.as_tensor(batch.values, dtype=dtype)
    advantages = torch.as_tensor(batch.advantages, dtype=dtype)
    returns = torch.as_tensor(batch.returns, dtype=dtype)
    starts = torch.as_tensor(batch.starts, dtype=dtype)
    valid = torch.as_tensor(batch.valid, dtype=dtype)
    masks = [torch.as_tensor(m) if m is not None else None for m in batch.masks]
    prior = torch.as_tensor(batch.kl_prior, dtype=dtype) if batch.kl_prior is not None else None

    new_logp, new_values, reg = policy.evaluate_sequence(
        obs, starts, policy.initial_state(obs.shape[1], dtype=dtype), actions, masks,
        kl_prior=prior,
    )
    mean = _masked_mean(advantages, valid)
    var = _masked_mean((advantages - mean) ** 2, valid)
    adv = (advantages - mean) / (var.sqrt() + 1e-8)
    ratio = (new_logp - old_logp).exp()
    surr1 = ratio * adv
    surr2 = torch.clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * adv
    policy_loss = -_masked_mean(torch.minimum(surr1, surr2), valid)
    if cfg.value_clip:
        v_clipped = old_values + torch.clamp(new_values - old_values,
                                             -cfg.clip_range, cfg.clip_range)
        value_loss = 0.5 * _masked_mean(
            torch.maximum((new_values - returns) ** 2, (v_clipped - returns) ** 2), valid
        )
    else:
        value_loss = 0.5 * _masked_mean((new_values - returns) ** 2, valid)
    return (policy_loss + cfg.value_loss_coef * value_loss
            - cfg.entropy_coef * _masked_mean(reg, valid))


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, policy: RecurrentPolicy, config_hash: str,
                    update_count: int) -> None:
    """Versioned npz container; parameters round-trip bit-exactly."""
    arrays = {f"param::{k}": v.detach().cpu().numpy()
              for k, v in policy.state_dict().items()}
    np.savez(
        path,
        format_version=np.int64(1),
        config_hash=np.bytes_(config_hash.encode()),
        update_count=np.int64(update_count),
        obs_dim=np.int64(policy.obs_dim),
        action_dims=np.asarray(policy.action_dims, dtype=np.int64),
        hidden_dim=np.int64(policy.hidden_dim),
        **arrays,
    )


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    from .errors import CheckpointError

    with np.load(path, allow_pickle=False) as data:
        if "format_version" not in data or int(data["format_version"]) != 1:
            raise CheckpointError(f"unsupported checkpoint format in {path}")
        meta = {
            "config_hash": bytes(data["config_hash"].tolist()).decode(),
            "update_count": int(data["update_count"]),
            "obs_dim": int(data["obs_dim"]),
            "action_dims": tuple(int(x) for x in data["action_dims"]),
            "hidden_dim": int(data["hidden_dim"]),
        }
        params = {k[len("param::"):]: data[k] for k in data.files
                  if k.startswith("param::")}
    return params, meta


def restore_policy(params: dict[str, np.ndarray], meta: dict) -> RecurrentPolicy:
    policy = RecurrentPolicy(meta["obs_dim"], meta["action_dims"], meta["hidden_dim"])
    state = {k: torch.as_tensor(v) for k, v in params.items()}
    policy.load_state_dict(state)
    return policy
