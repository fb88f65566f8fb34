"""Run configuration: a dataclass tree mirroring the published hyperparameter
tables, with strict JSON loading (unknown keys are hard errors) and a stable
hash for checkpoint/manifest identity.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .gridworld import FAMILY_BY_NAME, Family
from .learner import PPOConfig
from .levelgen import GenConfig
from .replay import PLRConfig, SFLConfig
from .scoring import Metric

METHODS = ("DR", "PLR", "ACCEL", "InitialGen", "DEGen", "SFL")
PER_STEP_METRICS = ("MNA", "PVL", "MaxMC")


def _take(data: dict, cls_name: str, allowed: set[str]) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {cls_name}")


def _build(cls, data: dict | None, name: str):
    """Construct a flat dataclass from a dict, rejecting unknown keys."""
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    _take(data, name, names)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None


@dataclass
class EnvSection:
    family: str = "minigrid"
    size: int = 13
    t_max: int | None = None
    wall_count: list[int] | None = None
    box_count: list[int] = field(default_factory=lambda: [1, 10])
    include_key_door: bool = True
    sokoban_walls: int = 15

    def __post_init__(self):
        if self.family not in FAMILY_BY_NAME:
            raise ConfigError(
                f"unknown family {self.family!r}; expected one of {sorted(FAMILY_BY_NAME)}"
            )

    @property
    def family_enum(self) -> Family:
        return FAMILY_BY_NAME[self.family]

    def gen_config(self) -> GenConfig:
        return GenConfig(
            family=self.family_enum,
            size=self.size,
            t_max=self.t_max,
            wall_count=tuple(self.wall_count) if self.wall_count is not None else None,
            box_count=tuple(self.box_count),
            include_key_door=self.include_key_door,
            sokoban_walls=self.sokoban_walls,
        )


@dataclass
class StudentSection:
    num_updates: int = 30000
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

    def ppo(self) -> PPOConfig:
        return PPOConfig(
            gamma=self.gamma, gae_lambda=self.gae_lambda, num_steps=self.num_steps,
            epochs=self.epochs, minibatches=self.minibatches, clip_range=self.clip_range,
            num_envs=self.num_envs, learning_rate=self.learning_rate,
            anneal_lr=self.anneal_lr, adam_eps=self.adam_eps,
            max_grad_norm=self.max_grad_norm, value_clip=self.value_clip,
            value_loss_coef=self.value_loss_coef, entropy_coef=self.entropy_coef,
            hidden_dim=self.hidden_dim,
        )


@dataclass
class TeacherSection:
    gamma: float = 0.998
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatches: int = 4
    clip_range: float = 0.2
    learning_rate: float = 1e-3
    anneal_lr: bool = True
    adam_eps: float = 1e-5
    max_grad_norm: float = 0.5
    value_clip: bool = True
    value_loss_coef: float = 0.5
    entropy_coef: float = 5e-2
    hidden_dim: int = 256
    initial_gen_steps: int = 60
    kl_prior_pg: float = 0.01

    def ppo(self, num_envs: int) -> PPOConfig:
        return PPOConfig(
            gamma=self.gamma, gae_lambda=self.gae_lambda, num_steps=0,
            epochs=self.epochs, minibatches=self.minibatches, clip_range=self.clip_range,
            num_envs=num_envs, learning_rate=self.learning_rate,
            anneal_lr=self.anneal_lr, adam_eps=self.adam_eps,
            max_grad_norm=self.max_grad_norm, value_clip=self.value_clip,
            value_loss_coef=self.value_loss_coef, entropy_coef=self.entropy_coef,
            hidden_dim=self.hidden_dim,
        )


@dataclass
class ReplaySection:
    replay_rate: float = 0.5
    buffer_size: int = 8000
    prioritization: str = "rank"
    temperature: float = 1.0
    staleness_coef: float = 0.3
    train_on_new: bool = False
    num_edits: int = 20

    def __post_init__(self):
        if self.prioritization != "rank":
            raise ConfigError(
                f"only rank prioritization is implemented, got {self.prioritization!r}"
            )

    def plr(self) -> PLRConfig:
        return PLRConfig(
            replay_rate=self.replay_rate, buffer_size=self.buffer_size,
            temperature=self.temperature, staleness_coef=self.staleness_coef,
            train_on_new=self.train_on_new, num_edits=self.num_edits,
        )


@dataclass
class SFLSection:
    batch_size: int = 25000
    rollout_length: int = 20000
    update_period: int = 100
    buffer_size: int = 1000
    sample_ratio: float = 0.5
    rollouts_per_level: int = 8

    def sfl(self) -> SFLConfig:
        return SFLConfig(
            batch_size=self.batch_size, rollout_length=self.rollout_length,
            update_period=self.update_period, buffer_size=self.buffer_size,
            sample_ratio=self.sample_ratio, rollouts_per_level=self.rollouts_per_level,
        )


@dataclass
class EvalSection:
    every: int = 250
    episodes_per_level: int = 10
    greedy: bool = False
    level_set: str = "minigrid13"

    def __post_init__(self):
        if self.every < 1 or self.episodes_per_level < 1:
            raise ConfigError("eval every and episodes_per_level must be >= 1")


@dataclass
class RunConfig:
    method: str = "DR"
    metric: str = "MNA"
    seed: int = 0
    threads: int = 1
    wall_clock: str = "real"
    checkpoint_every: int | None = None
    env: EnvSection = field(default_factory=EnvSection)
    student: StudentSection = field(default_factory=StudentSection)
    teacher: TeacherSection = field(default_factory=TeacherSection)
    plr: ReplaySection = field(default_factory=ReplaySection)
    sfl: SFLSection = field(default_factory=SFLSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        try:
            Metric(self.metric)
        except ValueError:
            raise ConfigError(
                f"unknown metric {self.metric!r}; expected one of "
                f"{[m.value for m in Metric]}"
            ) from None
        if self.method in ("DEGen", "InitialGen") and self.metric not in PER_STEP_METRICS:
            raise ConfigError(
                f"method {self.method} needs a per-step metric {PER_STEP_METRICS}, "
                f"got {self.metric!r}"
            )
        if self.wall_clock not in ("real", "zero"):
            raise ConfigError(f"wall_clock must be 'real' or 'zero', got {self.wall_clock!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.method in ("DEGen", "InitialGen") and self.env.family == "sokoban" \
                and self.method == "InitialGen":
            raise ConfigError("the upfront generator baseline is minigrid-family only")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        sections = {
            "env": EnvSection, "student": StudentSection, "teacher": TeacherSection,
            "plr": ReplaySection, "sfl": SFLSection, "eval": EvalSection,
        }
        flat = {f.name for f in dataclasses.fields(cls) if f.name not in sections}
        _take(data, "run config", flat | set(sections))
        kwargs = {}
        for key, sub_cls in sections.items():
            if key in data:
                sub = data.pop(key)
                if not isinstance(sub, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                kwargs[key] = _build(sub_cls, sub, key)
        kwargs.update(data)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"run config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def smoke_config(method: str = "DR", family: str = "minigrid", seed: int = 0,
                 num_updates: int = 300, num_envs: int = 32) -> RunConfig:
    """Laptop-scale run: 7x7 levels with at most 6 walls, small recurrent core."""
    level_sets = {"minigrid": "smoke_minigrid7", "key_minigrid": "smoke_key_minigrid7",
                  "sokoban": "sokoban9"}
    return RunConfig(
        method=method,
        metric="MNA",
        seed=seed,
        wall_clock="zero",
        env=EnvSection(family=family, size=7, wall_count=[0, 6],
                       box_count=[1, 2], sokoban_walls=4),
        student=StudentSection(
            num_updates=num_updates, num_steps=128, num_envs=num_envs,
            learning_rate=1e-3, clip_range=0.2, hidden_dim=64, entropy_coef=1e-2,
        ),
        teacher=TeacherSection(hidden_dim=64),
        eval=EvalSection(every=100, episodes_per_level=10, greedy=True,
                         level_set=level_sets[family]),
    )
