"""Training orchestration: wires environments, level sources, scoring,
buffers, and the learner into one loop per method, with periodic zero-shot
evaluation, a metrics CSV, a run manifest, and checkpoints.

Methods:
  DR          fresh random levels every update
  PLR         score-prioritized replay over randomly discovered levels
  ACCEL       replay plus mutation-based proposals from the buffer
  SFL         periodic learnability filtering of random levels
  InitialGen  a learnt generator authors each level upfront, rewarded once
  DEGen       a learnt generator authors cells interleaved with play,
              rewarded densely from the per-step score chunks

Every method performs exactly `student.num_updates` student policy updates;
branches that only score (robust replay) do not count.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import degen as dg
from .config import RunConfig
from .errors import ConfigError, NonFiniteLoss
from .gridworld import (
    Action,
    Cell,
    EnvState,
    Family,
    Level,
    N_CELL_KINDS,
    action_space,
    observe_grid,
    reset,
    step,
)
from .learner import (
    RecurrentPolicy,
    RolloutBatch,
    gae,
    ppo_update,
    save_checkpoint,
)
from .levelgen import level_hash, random_level
from .replay import LevelBuffer, ReplayDecision, SFLBuffer
from .scoring import (
    LevelScoreContext,
    Metric,
    ScoreParams,
    Trajectory,
    level_score,
    per_step_scores,
)

_EYE_CELLS = np.eye(N_CELL_KINDS, dtype=np.float32)
_EYE_DIRS = np.eye(4, dtype=np.float32)


# ---------------------------------------------------------------------------
# Observation encoding


def student_obs_dim(family: Family) -> int:
    base = 25 * N_CELL_KINDS + 4
    return base + 1 if family == Family.KEY_MINIGRID else base


def encode_student_batch(states: list[EnvState], family: Family) -> np.ndarray:
    views = np.stack([observe_grid(s.grid, s.agent) for s in states])
    flat = _EYE_CELLS[views.reshape(len(states), 25)].reshape(len(states), -1)
    dirs = _EYE_DIRS[[int(s.agent.direction) for s in states]]
    parts = [flat, dirs]
    if family == Family.KEY_MINIGRID:
        keys = np.array([[float(s.agent.has_key)] for s in states], dtype=np.float32)
        parts.append(keys)
    return np.concatenate(parts, axis=1)


def teacher_obs_dim() -> int:
    return 25 * N_CELL_KINDS + 25 + 4


def encode_teacher_batch(observations: list[dg.TeacherObservation]) -> np.ndarray:
    views = np.stack([o.view for o in observations])
    flat = _EYE_CELLS[views.reshape(len(observations), 25)].reshape(len(observations), -1)
    gen = np.stack([o.gen_mask.reshape(-1) for o in observations]).astype(np.float32)
    dirs = _EYE_DIRS[[int(o.direction) for o in observations]]
    return np.concatenate([flat, gen, dirs], axis=1)


def upfront_obs_dim(size: int) -> int:
    interior = (size - 2) * (size - 2)
    return interior * N_CELL_KINDS + interior


def encode_upfront_batch(states: list[dg.UpfrontGenState]) -> np.ndarray:
    size = states[0].size
    interior = (size - 2) * (size - 2)
    grids = np.stack([s.grid[1:-1, 1:-1].reshape(-1) for s in states])
    flat = _EYE_CELLS[grids].reshape(len(states), -1)
    ungen = (grids == Cell.UNGENERATED).astype(np.float32)
    return np.concatenate([flat, ungen], axis=1)


# ---------------------------------------------------------------------------
# Fixed-length batched rollouts (one level per env slot, auto-reset)


@dataclass
class LevelRollout:
    """Per-level scoring material collected during one rollout."""

    trajectories: list[Trajectory] = field(default_factory=list)
    solved_any: bool = False


def rollout_fixed(policy: RecurrentPolicy, levels: list[Level], family: Family,
                  num_steps: int, torch_gen: torch.Generator,
                  reset_rng: np.random.Generator) -> tuple[RolloutBatch, dict[int, LevelRollout]]:
    """Roll `num_steps` on one level per env slot, auto-resetting in place.

    Returns the training batch (advantages left empty for the caller) and the
    per-env-slot scoring material with proper bootstrap values: zero at true
    terminal states, the critic's estimate at timeout or rollout truncation.
    """
    n_envs = len(levels)
    actions_enum = action_space(family)
    obs_dim = student_obs_dim(family)
    states = [reset(lv, rng=reset_rng) for lv in levels]
    lstm = policy.initial_state(n_envs)

    obs_buf = np.zeros((num_steps, n_envs, obs_dim), dtype=np.float32)
    act_buf = np.zeros((num_steps, n_envs, 1), dtype=np.int64)
    logp_buf = np.zeros((num_steps, n_envs), dtype=np.float64)
    val_buf = np.zeros((num_steps, n_envs), dtype=np.float64)
    rew_buf = np.zeros((num_steps, n_envs), dtype=np.float64)
    done_buf = np.zeros((num_steps, n_envs), dtype=np.float64)
    start_buf = np.zeros((num_steps, n_envs), dtype=np.float64)
    start_buf[0, :] = 1.0

    seg_start = [0] * n_envs
    rollouts = {i: LevelRollout() for i in range(n_envs)}
    # Timed-out episodes need the critic's value of their final observation.
    pending: list[tuple[int, int, np.ndarray, torch.Tensor, torch.Tensor]] = []

    for t in range(num_steps):
        obs = encode_student_batch(states, family)
        obs_buf[t] = obs
        acts, logp, value, lstm = policy.act(obs, lstm, None, torch_gen)
        head = acts[0]
        act_buf[t, :, 0] = head
        logp_buf[t] = logp
        val_buf[t] = value
        for i in range(n_envs):
            new_state, reward, done = step(states[i], actions_enum[int(head[i])])
            rew_buf[t, i] = reward
            if done:
                done_buf[t, i] = 1.0
                solved = new_state.solved
                if not solved:
                    pending.append((i, t, encode_student_batch([new_state], family)[0],
                                    lstm[0][i].clone(), lstm[1][i].clone()))
                seg = (seg_start[i], t + 1, solved, len(pending) - 1 if not solved else -1)
                rollouts[i].trajectories.append(seg)  # placeholder, finalized below
                rollouts[i].solved_any |= solved
                states[i] = reset(levels[i], rng=reset_rng)
                seg_start[i] = t + 1
                h, c = lstm
                keep = torch.ones(n_envs, 1)
                keep[i] = 0.0
                lstm = (h * keep, c * keep)
                if t + 1 < num_steps:
                    start_buf[t + 1, i] = 1.0
            else:
                states[i] = new_state

    # Bootstrap values: one forward for the post-rollout observations, one for
    # the stored timeout observations.
    final_obs = encode_student_batch(states, family)
    _, _, final_values, _ = policy.act(final_obs, lstm, None, torch_gen, greedy=True)
    if pending:
        p_obs = np.stack([p[2] for p in pending])
        p_h = torch.stack([p[3] for p in pending])
        p_c = torch.stack([p[4] for p in pending])
        _, _, pending_values, _ = policy.act(p_obs, (p_h, p_c), None, torch_gen, greedy=True)
    else:
        pending_values = np.zeros(0)

    values_ext = np.concatenate([val_buf, final_values[None, :]], axis=0)
    for i in range(n_envs):
        finalized = []
        for (s0, s1, solved, pending_idx) in rollouts[i].trajectories:
            if solved:
                boot = 0.0
            else:
                boot = float(pending_values[pending_idx])
            finalized.append(Trajectory(
                rewards=rew_buf[s0:s1, i].copy(),
                values=np.concatenate([val_buf[s0:s1, i], [boot]]),
                solved=solved,
            ))
        if seg_start[i] < num_steps:  # trailing truncated segment
            finalized.append(Trajectory(
                rewards=rew_buf[seg_start[i]:, i].copy(),
                values=np.concatenate([val_buf[seg_start[i]:, i], [float(final_values[i])]]),
                solved=False,
            ))
        rollouts[i].trajectories = finalized

    batch = RolloutBatch(
        obs=obs_buf, actions=act_buf, masks=[None], log_probs=logp_buf,
        values=val_buf, advantages=np.zeros_like(val_buf),
        returns=np.zeros_like(val_buf), starts=start_buf,
        valid=np.ones((num_steps, n_envs), dtype=bool),
    )
    batch._rewards = rew_buf        # type: ignore[attr-defined]
    batch._values_ext = values_ext  # type: ignore[attr-defined]
    batch._dones = done_buf         # type: ignore[attr-defined]
    return batch, rollouts


# ---------------------------------------------------------------------------
# Queue-based episode runner (evaluation, success-probability estimates)


@dataclass
class EpisodeResult:
    level_idx: int
    episode_return: float
    solved: bool
    steps: int


def run_episodes(policy: RecurrentPolicy, levels: list[Level], family: Family,
                 episodes_per_level: int, torch_gen: torch.Generator,
                 reset_rng: np.random.Generator, greedy: bool = False,
                 batch_size: int = 32) -> list[EpisodeResult]:
    """Play `episodes_per_level` full episodes on every level, batched over a
    fixed number of slots. Deterministic given the generators."""
    jobs = [(li, e) for li in range(len(levels)) for e in range(episodes_per_level)]
    results: list[EpisodeResult] = []
    queue = list(reversed(jobs))
    slots: list[dict | None] = [None] * min(batch_size, max(1, len(jobs)))
    actions_enum = action_space(family)

    def fill(slot_idx: int) -> None:
        if not queue:
            slots[slot_idx] = None
            return
        li, _ = queue.pop()
        slots[slot_idx] = {
            "level": li,
            "state": reset(levels[li], rng=reset_rng),
            "h": torch.zeros(policy.hidden_dim),
            "c": torch.zeros(policy.hidden_dim),
            "ret": 0.0,
            "steps": 0,
        }

    for i in range(len(slots)):
        fill(i)
    while any(s is not None for s in slots):
        live = [i for i, s in enumerate(slots) if s is not None]
        obs = encode_student_batch([slots[i]["state"] for i in live], family)
        h = torch.stack([slots[i]["h"] for i in live])
        c = torch.stack([slots[i]["c"] for i in live])
        acts, _, _, (h2, c2) = policy.act(obs, (h, c), None, torch_gen, greedy=greedy)
        for k, i in enumerate(live):
            slot = slots[i]
            new_state, reward, done = step(slot["state"], actions_enum[int(acts[0][k])])
            slot["ret"] += reward
            slot["steps"] += 1
            if done:
                results.append(EpisodeResult(
                    level_idx=slot["level"], episode_return=slot["ret"],
                    solved=new_state.solved, steps=slot["steps"],
                ))
                fill(i)
            else:
                slot["state"] = new_state
                slot["h"] = h2[k]
                slot["c"] = c2[k]
    return results


def evaluate(policy: RecurrentPolicy, eval_set: list[tuple[str, Level]],
             episodes_per_level: int, seed: int, greedy: bool = False) -> list[dict]:
    """Zero-shot evaluation. Returns one row per level plus a `__mean__` row
    with unweighted means across levels."""
    torch_gen = torch.Generator().manual_seed(seed)
    reset_rng = np.random.default_rng(seed)
    rows = []
    families = {lv.family for _, lv in eval_set}
    for fam in sorted(families):
        fam_levels = [(name, lv) for name, lv in eval_set if lv.family == fam]
        results = run_episodes(
            policy, [lv for _, lv in fam_levels], fam, episodes_per_level,
            torch_gen, reset_rng, greedy=greedy,
        )
        for li, (name, _) in enumerate(fam_levels):
            mine = [r for r in results if r.level_idx == li]
            rows.append({
                "level_name": name,
                "solve_rate": sum(r.solved for r in mine) / len(mine),
                "mean_return": sum(r.episode_return for r in mine) / len(mine),
            })
    rows.append({
        "level_name": "__mean__",
        "solve_rate": float(np.mean([r["solve_rate"] for r in rows])),
        "mean_return": float(np.mean([r["mean_return"] for r in rows])),
    })
    return rows


# ---------------------------------------------------------------------------
# Level sets


def _package_level_dir() -> Path:
    return Path(__file__).parent / "eval_levels"


def resolve_level_set(name_or_path: str) -> list[tuple[str, Level]]:
    """A named shipped set, or a path to a manifest JSON [{name, path}, ...]
    with level paths relative to the manifest's directory."""
    from .levelgen import parse_level

    candidate = _package_level_dir() / name_or_path / "manifest.json"
    manifest_path = candidate if candidate.exists() else Path(name_or_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no level set named or located at {name_or_path!r}")
    with open(manifest_path) as fh:
        entries = json.load(fh)
    out = []
    for entry in entries:
        path = manifest_path.parent / entry["path"]
        with open(path) as lf:
            out.append((entry["name"], parse_level(lf.read())))
    return out


# ---------------------------------------------------------------------------
# Metrics CSV


CSV_HEADER = "update,wall_clock_s,method,metric,seed,level_name,solve_rate,mean_return"


class MetricsWriter:
    def __init__(self, path: Path, method: str, metric: str, seed: int,
                 wall_clock_mode: str):
        self.path = path
        self.method = method
        self.metric = metric
        self.seed = seed
        self.mode = wall_clock_mode
        self.t0 = time.perf_counter()
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")

    def write_rows(self, update: int, rows: list[dict]) -> None:
        clock = 0.0 if self.mode == "zero" else time.perf_counter() - self.t0
        with open(self.path, "a") as fh:
            for row in rows:
                fh.write(
                    f"{update},{clock!r},{self.method},{self.metric},{self.seed},"
                    f"{row['level_name']},{row['solve_rate']!r},{row['mean_return']!r}\n"
                )


# ---------------------------------------------------------------------------
# Trainer


class Trainer:
    def __init__(self, cfg: RunConfig, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        torch.set_num_threads(cfg.threads)
        self.family = cfg.env.family_enum
        self.gen_cfg = cfg.env.gen_config()
        self.metric = Metric(cfg.metric)
        self.score_params = ScoreParams(gamma=cfg.student.gamma,
                                        lam=cfg.student.gae_lambda)
        seq = np.random.SeedSequence(cfg.seed)
        (level_seed, reset_seed, replay_seed, torch_seed, eval_seed,
         degen_seed) = seq.spawn(6)
        self.level_rng = np.random.default_rng(level_seed)
        self.reset_rng = np.random.default_rng(reset_seed)
        self.replay_rng = np.random.default_rng(replay_seed)
        self.degen_rng = np.random.default_rng(degen_seed)
        self.eval_seed = int(eval_seed.generate_state(1)[0] % (2 ** 31))
        torch_root = int(torch_seed.generate_state(1)[0] % (2 ** 31))
        self.torch_gen = torch.Generator().manual_seed(torch_root)

        n_actions = len(action_space(self.family))
        self.student = RecurrentPolicy(student_obs_dim(self.family), (n_actions,),
                                       cfg.student.hidden_dim, seed=torch_root + 1)
        self.student_opt = torch.optim.Adam(self.student.parameters(),
                                            lr=cfg.student.learning_rate,
                                            eps=cfg.student.adam_eps)
        self.teacher: RecurrentPolicy | None = None
        self.teacher_opt = None
        if cfg.method == "DEGen":
            self.teacher = RecurrentPolicy(teacher_obs_dim(), (25, dg.N_OBJECTS),
                                           cfg.teacher.hidden_dim, seed=torch_root + 2)
        elif cfg.method == "InitialGen":
            interior = (cfg.env.size - 2) ** 2
            self.teacher = RecurrentPolicy(upfront_obs_dim(cfg.env.size),
                                           (interior, dg.N_OBJECTS),
                                           cfg.teacher.hidden_dim, seed=torch_root + 2)
        if self.teacher is not None:
            self.teacher_opt = torch.optim.Adam(self.teacher.parameters(),
                                                lr=cfg.teacher.learning_rate,
                                                eps=cfg.teacher.adam_eps)
        self.kl_prior = dg.kl_prior(cfg.teacher.kl_prior_pg)

        self.buffer = LevelBuffer(cfg.plr.plr()) if cfg.method in ("PLR", "ACCEL") else None
        self.sfl_buffer = SFLBuffer(cfg.sfl.sfl()) if cfg.method == "SFL" else None
        self.eval_set = resolve_level_set(cfg.eval.level_set)
        self.updates_done = 0
        self.metrics = MetricsWriter(self.out / "metrics.csv", cfg.method, cfg.metric,
                                     cfg.seed, cfg.wall_clock)
        self.provenance_path = self.out / "levels.jsonl"
        self._write_manifest()

    # -- infrastructure ----------------------------------------------------

    def _write_manifest(self) -> None:
        manifest = {
            "method": self.cfg.method,
            "metric": self.cfg.metric,
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.config_hash(),
            "eval_levels": [name for name, _ in self.eval_set],
            "metrics_csv": "metrics.csv",
        }
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _log_levels(self, levels: list[Level], note: str) -> None:
        with open(self.provenance_path, "a") as fh:
            for lv in levels:
                fh.write(json.dumps({
                    "update": self.updates_done, "source": note,
                    "hash": level_hash(lv),
                }) + "\n")

    def _maybe_eval(self, force: bool = False) -> None:
        if force or self.updates_done % self.cfg.eval.every == 0:
            rows = evaluate(self.student, self.eval_set,
                            self.cfg.eval.episodes_per_level,
                            seed=self.eval_seed + self.updates_done,
                            greedy=self.cfg.eval.greedy)
            self.metrics.write_rows(self.updates_done, rows)

    def _maybe_checkpoint(self) -> None:
        every = self.cfg.checkpoint_every
        if every and self.updates_done % every == 0:
            self.save_checkpoints()

    def save_checkpoints(self) -> None:
        save_checkpoint(self.out / "student.ckpt.npz", self.student,
                        self.cfg.config_hash(), self.updates_done)
        if self.teacher is not None:
            save_checkpoint(self.out / "teacher.ckpt.npz", self.teacher,
                            self.cfg.config_hash(), self.updates_done)

    def _student_update(self, batch: RolloutBatch) -> None:
        batch.advantages, batch.returns = gae(
            batch._rewards, batch._values_ext, batch._dones,  # type: ignore[attr-defined]
            self.cfg.student.gamma, self.cfg.student.gae_lambda,
        )
        ppo_update(self.student, self.student_opt, batch, self.cfg.student.ppo(),
                   self.updates_done, self.cfg.student.num_updates, self.torch_gen)
        self.updates_done += 1
        self._maybe_eval()
        self._maybe_checkpoint()

    # -- scoring -----------------------------------------------------------

    def _score_levels(self, levels: list[Level],
                      rollouts: dict[int, LevelRollout]) -> dict[str, tuple[Level, float, bool]]:
        """Merge env slots that played the same level; return per-unique-level
        (level, score, solved_this_round)."""
        groups: dict[str, tuple[Level, list[Trajectory], bool]] = {}
        for i, lv in enumerate(levels):
            h = level_hash(lv)
            trajs, solved = rollouts[i].trajectories, rollouts[i].solved_any
            if h in groups:
                old = groups[h]
                groups[h] = (lv, old[1] + trajs, old[2] or solved)
            else:
                groups[h] = (lv, list(trajs), solved)
        out = {}
        for h, (lv, trajs, solved) in groups.items():
            history_solved = solved or (self.buffer.ever_solved(h) if self.buffer else False)
            ctx = LevelScoreContext(trajectories=trajs, ever_solved=history_solved)
            out[h] = (lv, level_score(ctx, self.metric, self.score_params), solved)
        return out

    # -- per-method iterations --------------------------------------------

    def _iterate_dr(self) -> None:
        levels = [random_level(self.gen_cfg, self.level_rng)
                  for _ in range(self.cfg.student.num_envs)]
        self._log_levels(levels, "random")
        batch, _ = self._rollout(levels)
        self._student_update(batch)

    def _rollout(self, levels: list[Level]):
        batch, rollouts = rollout_fixed(
            self.student, levels, self.family, self.cfg.student.num_steps,
            self.torch_gen, self.reset_rng,
        )
        return batch, rollouts

    def _iterate_replay(self, edits: bool) -> None:
        assert self.buffer is not None
        decision = self.buffer.decide_replay(self.replay_rng)
        n_envs = self.cfg.student.num_envs
        if decision == ReplayDecision.REPLAY:
            entries = self.buffer.sample(self.replay_rng, self.updates_done, n=n_envs)
            levels = [e.level for e in entries]
            self._log_levels(levels, "replay")
            batch, rollouts = self._rollout(levels)
            scored = self._score_levels(levels, rollouts)
            self._student_update(batch)
            for h, (lv, score, solved) in scored.items():
                self.buffer.insert_or_update(lv, score, self.updates_done, solved=solved)
        else:
            if edits and len(self.buffer) > 0:
                levels = [self.buffer.propose_edit(self.replay_rng, self.updates_done)
                          for _ in range(n_envs)]
                note = "edit"
            else:
                levels = [random_level(self.gen_cfg, self.level_rng)
                          for _ in range(n_envs)]
                note = "random"
            batch, rollouts = self._rollout(levels)
            scored = self._score_levels(levels, rollouts)
            train_here = self.cfg.plr.train_on_new
            if train_here:
                self._log_levels(levels, note)
                self._student_update(batch)
            for h, (lv, score, solved) in scored.items():
                self.buffer.insert_or_update(lv, score, self.updates_done, solved=solved)

    def _sfl_success_prob(self, level: Level) -> float:
        results = run_episodes(
            self.student, [level], self.family,
            self.cfg.sfl.rollouts_per_level, self.torch_gen, self.reset_rng,
            greedy=False, batch_size=self.cfg.sfl.rollouts_per_level,
        )
        return sum(r.solved for r in results) / len(results)

    def _iterate_sfl(self) -> None:
        assert self.sfl_buffer is not None
        if self.sfl_buffer.due(self.updates_done):
            self.sfl_buffer.refresh(
                self.updates_done,
                propose=lambda: random_level(self.gen_cfg, self.level_rng),
                success_prob=self._sfl_success_prob,
            )
        levels = []
        for _ in range(self.cfg.student.num_envs):
            if len(self.sfl_buffer) > 0 and \
                    self.replay_rng.random() < self.cfg.sfl.sample_ratio:
                levels.append(self.sfl_buffer.sample(self.replay_rng))
            else:
                levels.append(random_level(self.gen_cfg, self.level_rng))
        self._log_levels(levels, "sfl")
        batch, _ = self._rollout(levels)
        self._student_update(batch)

    # -- learnt-generator methods ------------------------------------------

    def _teacher_update(self, batch: RolloutBatch) -> None:
        assert self.teacher is not None and self.teacher_opt is not None
        cfg = self.cfg.teacher.ppo(batch.obs.shape[1])
        batch.advantages, batch.returns = gae(
            batch._rewards, batch._values_ext, batch._dones,  # type: ignore[attr-defined]
            self.cfg.teacher.gamma, self.cfg.teacher.gae_lambda,
        )
        ppo_update(self.teacher, self.teacher_opt, batch, cfg,
                   self.updates_done, self.cfg.student.num_updates, self.torch_gen)

    def _iterate_initial_gen(self) -> None:
        assert self.teacher is not None
        n_envs = self.cfg.student.num_envs
        # The whole-grid budget cannot exceed the number of authorable cells.
        steps = min(self.cfg.teacher.initial_gen_steps, (self.cfg.env.size - 2) ** 2)
        gen_states = [dg.init_upfront(self.family, self.cfg.env.size,
                                      self.cfg.env.t_max) for _ in range(n_envs)]
        obs_dim = upfront_obs_dim(self.cfg.env.size)
        interior = (self.cfg.env.size - 2) ** 2
        t_obs = np.zeros((steps, n_envs, obs_dim), dtype=np.float32)
        t_act = np.zeros((steps, n_envs, 2), dtype=np.int64)
        t_a1m = np.zeros((steps, n_envs, interior), dtype=bool)
        t_a2m = np.zeros((steps, n_envs, dg.N_OBJECTS), dtype=bool)
        t_logp = np.zeros((steps, n_envs), dtype=np.float64)
        t_val = np.zeros((steps, n_envs), dtype=np.float64)
        lstm = self.teacher.initial_state(n_envs)
        for s in range(steps):
            obs = encode_upfront_batch(gen_states)
            mask_pairs = [dg.upfront_legal_mask(g) for g in gen_states]
            a1m = np.stack([m[0] for m in mask_pairs])
            a2m = np.stack([m[1] for m in mask_pairs])
            t_obs[s], t_a1m[s], t_a2m[s] = obs, a1m, a2m
            acts, logp, value, lstm = self.teacher.act(obs, lstm, [a1m, a2m],
                                                       self.torch_gen)
            t_act[s, :, 0], t_act[s, :, 1] = acts[0], acts[1]
            t_logp[s], t_val[s] = logp, value
            for i, g in enumerate(gen_states):
                dg.apply_upfront_action(g, dg.TeacherAction(int(acts[0][i]), int(acts[1][i])))
        levels = [dg.finalize_upfront(g, self.degen_rng) for g in gen_states]
        self._log_levels(levels, "initial_gen")

        batch, rollouts = self._rollout(levels)
        scored = self._score_levels(levels, rollouts)
        self._student_update(batch)

        rewards = np.zeros((steps, n_envs), dtype=np.float64)
        for i, lv in enumerate(levels):
            rewards[-1, i] = scored[level_hash(lv)][1]
        dones = np.zeros_like(rewards)
        dones[-1, :] = 1.0
        starts = np.zeros_like(rewards)
        starts[0, :] = 1.0
        t_batch = RolloutBatch(
            obs=t_obs, actions=t_act, masks=[t_a1m, t_a2m], log_probs=t_logp,
            values=t_val, advantages=np.zeros_like(t_val),
            returns=np.zeros_like(t_val), starts=starts,
            valid=np.ones_like(rewards, dtype=bool), kl_prior=self.kl_prior,
        )
        t_batch._rewards = rewards  # type: ignore[attr-defined]
        t_batch._values_ext = np.concatenate([t_val, np.zeros((1, n_envs))])  # type: ignore[attr-defined]
        t_batch._dones = dones      # type: ignore[attr-defined]
        self._teacher_update(t_batch)

    def _iterate_degen(self) -> None:
        assert self.teacher is not None
        n_envs = self.cfg.student.num_envs
        episodes = [dg.init_generation(self.family, self.cfg.env.size,
                                       self.cfg.env.t_max, rng=self.degen_rng)
                    for _ in range(n_envs)]
        s_log = [dict(obs=[], act=[], logp=[], val=[], rew=[], h=None, c=None)
                 for _ in range(n_envs)]
        t_log = [dict(obs=[], a1m=[], a2m=[], act=[], logp=[], val=[])
                 for _ in range(n_envs)]
        actions_enum = action_space(self.family)
        s_lstm = self.student.initial_state(n_envs)
        t_lstm = self.teacher.initial_state(n_envs)
        alive = list(range(n_envs))
        timeout_boot: dict[int, float] = {}
        pending_boot: list[tuple[int, np.ndarray, torch.Tensor, torch.Tensor]] = []

        while alive:
            while True:
                need = [i for i in alive if dg.needs_generation(episodes[i])]
                if not need:
                    break
                t_observations = [dg.teacher_observation(episodes[i]) for i in need]
                obs = encode_teacher_batch(t_observations)
                masks = [dg.legal_mask(episodes[i]) for i in need]
                a1m = np.stack([m[0] for m in masks])
                a2m = np.stack([m[1] for m in masks])
                h = torch.stack([t_lstm[0][i] for i in need])
                c = torch.stack([t_lstm[1][i] for i in need])
                acts, logp, value, (h2, c2) = self.teacher.act(obs, (h, c),
                                                               [a1m, a2m], self.torch_gen)
                for k, i in enumerate(need):
                    dg.apply_teacher_action(
                        episodes[i], dg.TeacherAction(int(acts[0][k]), int(acts[1][k])))
                    t_lstm[0][i] = h2[k]
                    t_lstm[1][i] = c2[k]
                    log = t_log[i]
                    log["obs"].append(obs[k])
                    log["a1m"].append(a1m[k])
                    log["a2m"].append(a2m[k])
                    log["act"].append((int(acts[0][k]), int(acts[1][k])))
                    log["logp"].append(float(logp[k]))
                    log["val"].append(float(value[k]))

            obs = encode_student_batch([episodes[i].env for i in alive], self.family)
            h = torch.stack([s_lstm[0][i] for i in alive])
            c = torch.stack([s_lstm[1][i] for i in alive])
            acts, logp, value, (h2, c2) = self.student.act(obs, (h, c), None,
                                                           self.torch_gen)
            next_alive = []
            for k, i in enumerate(alive):
                reward, done = dg.apply_student_action(
                    episodes[i], actions_enum[int(acts[0][k])])
                s_lstm[0][i] = h2[k]
                s_lstm[1][i] = c2[k]
                log = s_log[i]
                log["obs"].append(obs[k])
                log["act"].append(int(acts[0][k]))
                log["logp"].append(float(logp[k]))
                log["val"].append(float(value[k]))
                log["rew"].append(reward)
                if done:
                    if not episodes[i].env.solved:
                        final_obs = encode_student_batch([episodes[i].env], self.family)[0]
                        pending_boot.append((i, final_obs, h2[k].clone(), c2[k].clone()))
                else:
                    next_alive.append(i)
            alive = next_alive

        if pending_boot:
            p_obs = np.stack([p[1] for p in pending_boot])
            p_h = torch.stack([p[2] for p in pending_boot])
            p_c = torch.stack([p[3] for p in pending_boot])
            _, _, boots, _ = self.student.act(p_obs, (p_h, p_c), None,
                                              self.torch_gen, greedy=True)
            for (i, _, _, _), b in zip(pending_boot, boots):
                timeout_boot[i] = float(b)

        levels = [dg.archive_level(ep) for ep in episodes]
        self._log_levels(levels, "degen")

        # Scoring per episode, then dense generator rewards from score chunks.
        trajectories = []
        for i, ep in enumerate(episodes):
            traj = Trajectory(
                rewards=np.asarray(ep.rewards, dtype=np.float64),
                values=np.concatenate([s_log[i]["val"], [timeout_boot.get(i, 0.0)]]),
                solved=ep.env.solved,
            )
            trajectories.append(traj)

        t_rewards = []
        for i, (ep, traj) in enumerate(zip(episodes, trajectories)):
            if len(ep.tau) == 0:  # degenerate geometry: nothing to generate
                t_rewards.append(np.zeros(0))
                continue
            ctx = LevelScoreContext(trajectories=[traj])
            g = per_step_scores(traj, self.metric, self.score_params,
                                r_max=ctx.r_max, ever_solved=ep.env.solved)
            t_rewards.append(dg.assign_dense_rewards(g, np.asarray(ep.tau)))

        self._student_update(self._pad_student_batch(s_log, trajectories))
        if any(len(log["act"]) for log in t_log):
            self._teacher_update(self._pad_teacher_batch(t_log, t_rewards))

    def _pad_student_batch(self, s_log: list[dict],
                           trajectories: list[Trajectory]) -> RolloutBatch:
        n_envs = len(s_log)
        obs_dim = student_obs_dim(self.family)
        t_max = max(len(log["rew"]) for log in s_log)
        obs = np.zeros((t_max, n_envs, obs_dim), dtype=np.float32)
        act = np.zeros((t_max, n_envs, 1), dtype=np.int64)
        logp = np.zeros((t_max, n_envs), dtype=np.float64)
        val = np.zeros((t_max, n_envs), dtype=np.float64)
        rew = np.zeros((t_max, n_envs), dtype=np.float64)
        done = np.zeros((t_max, n_envs), dtype=np.float64)
        starts = np.zeros((t_max, n_envs), dtype=np.float64)
        valid = np.zeros((t_max, n_envs), dtype=bool)
        starts[0, :] = 1.0
        for i, log in enumerate(s_log):
            n = len(log["rew"])
            obs[:n, i] = np.stack(log["obs"])
            act[:n, i, 0] = log["act"]
            logp[:n, i] = log["logp"]
            val[:n, i] = log["val"]
            rew[:n, i] = log["rew"]
            done[n - 1:, i] = 1.0
            valid[:n, i] = True
        batch = RolloutBatch(
            obs=obs, actions=act, masks=[None], log_probs=logp, values=val,
            advantages=np.zeros_like(val), returns=np.zeros_like(val),
            starts=starts, valid=valid,
        )
        batch._rewards = rew  # type: ignore[attr-defined]
        batch._values_ext = np.concatenate([val, np.zeros((1, n_envs))])  # type: ignore[attr-defined]
        batch._dones = done   # type: ignore[attr-defined]
        return batch

    def _pad_teacher_batch(self, t_log: list[dict],
                           t_rewards: list[np.ndarray]) -> RolloutBatch:
        n_envs = len(t_log)
        obs_dim = teacher_obs_dim()
        t_max = max(max((len(log["act"]) for log in t_log), default=1), 1)
        obs = np.zeros((t_max, n_envs, obs_dim), dtype=np.float32)
        act = np.zeros((t_max, n_envs, 2), dtype=np.int64)
        a1m = np.zeros((t_max, n_envs, 25), dtype=bool)
        a2m = np.zeros((t_max, n_envs, dg.N_OBJECTS), dtype=bool)
        a1m[:, :, 0] = True  # padding rows need one legal entry; they carry no loss
        a2m[:, :, 0] = True
        logp = np.zeros((t_max, n_envs), dtype=np.float64)
        val = np.zeros((t_max, n_envs), dtype=np.float64)
        rew = np.zeros((t_max, n_envs), dtype=np.float64)
        done = np.zeros((t_max, n_envs), dtype=np.float64)
        starts = np.zeros((t_max, n_envs), dtype=np.float64)
        valid = np.zeros((t_max, n_envs), dtype=bool)
        starts[0, :] = 1.0
        for i, (log, rewards) in enumerate(zip(t_log, t_rewards)):
            n = len(log["act"])
            if n == 0:
                done[0, i] = 1.0
                continue
            obs[:n, i] = np.stack(log["obs"])
            act[:n, i] = log["act"]
            a1m[:n, i] = np.stack(log["a1m"])
            a2m[:n, i] = np.stack(log["a2m"])
            logp[:n, i] = log["logp"]
            val[:n, i] = log["val"]
            rew[:n, i] = rewards
            done[n - 1:, i] = 1.0
            valid[:n, i] = True
        batch = RolloutBatch(
            obs=obs, actions=act, masks=[a1m, a2m], log_probs=logp, values=val,
            advantages=np.zeros_like(val), returns=np.zeros_like(val),
            starts=starts, valid=valid, kl_prior=self.kl_prior,
        )
        batch._rewards = rew  # type: ignore[attr-defined]
        batch._values_ext = np.concatenate([val, np.zeros((1, n_envs))])  # type: ignore[attr-defined]
        batch._dones = done   # type: ignore[attr-defined]
        return batch

    # -- main loop ---------------------------------------------------------

    def train(self) -> dict:
        iterate = {
            "DR": self._iterate_dr,
            "PLR": lambda: self._iterate_replay(edits=False),
            "ACCEL": lambda: self._iterate_replay(edits=True),
            "SFL": self._iterate_sfl,
            "InitialGen": self._iterate_initial_gen,
            "DEGen": self._iterate_degen,
        }[self.cfg.method]
        try:
            self._maybe_eval(force=True)  # update 0 baseline row
            while self.updates_done < self.cfg.student.num_updates:
                iterate()
            if self.updates_done % self.cfg.eval.every != 0:
                self._maybe_eval(force=True)
        except NonFiniteLoss as exc:
            with open(self.out / "diagnostics.json", "w") as fh:
                json.dump({"error": "NonFiniteLoss", "update": self.updates_done,
                           "message": str(exc)}, fh)
            raise
        self.save_checkpoints()
        return {
            "updates": self.updates_done,
            "metrics_csv": str(self.metrics.path),
            "out_dir": str(self.out),
        }


def train(cfg: RunConfig, out_dir) -> dict:
    return Trainer(cfg, out_dir).train()
