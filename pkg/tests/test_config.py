"""Strict config loading: unknown keys are hard errors, method/metric pairs
are validated, and the canonical hash is stable."""

from __future__ import annotations

import json

import pytest

from uedlab.config import (
    EnvSection,
    EvalSection,
    METHODS,
    RunConfig,
    smoke_config,
)
from uedlab.errors import ConfigError
from uedlab.gridworld import Family


def test_defaults_build_and_convert():
    cfg = RunConfig()
    assert cfg.method == "DR" and cfg.metric == "MNA"
    gen = cfg.env.gen_config()
    assert gen.family == Family.MINIGRID and gen.size == 13
    ppo = cfg.student.ppo()
    assert ppo.num_envs == 256 and ppo.clip_range == 0.04
    teacher_ppo = cfg.teacher.ppo(num_envs=64)
    assert teacher_ppo.num_envs == 64 and teacher_ppo.clip_range == 0.2
    assert cfg.plr.plr().temperature == 1.0
    assert cfg.sfl.sfl().buffer_size == 1000


def test_from_dict_round_trip():
    cfg = RunConfig.from_dict({
        "method": "PLR", "metric": "PVL", "seed": 3,
        "env": {"family": "key_minigrid", "size": 9},
        "student": {"num_updates": 10},
    })
    assert cfg.method == "PLR" and cfg.env.size == 9
    again = RunConfig.from_json(json.dumps(cfg.to_dict()))
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


@pytest.mark.parametrize("data,fragment", [
    ({"bogus": 1}, "unknown key"),
    ({"env": {"bogus": 1}}, "unknown key"),
    ({"student": {"lr": 1e-3}}, "unknown key"),
    ({"env": 3}, "must be an object"),
    ({"method": "Oracle"}, "unknown method"),
    ({"metric": "Regret"}, "unknown metric"),
    ({"method": "DEGen", "metric": "Learnability"}, "per-step metric"),
    ({"method": "InitialGen", "metric": "Learnability"}, "per-step metric"),
    ({"wall_clock": "fast"}, "wall_clock"),
    ({"threads": 0}, "threads"),
    ({"env": {"family": "maze"}}, "unknown family"),
    ({"plr": {"prioritization": "proportional"}}, "rank"),
    ({"eval": {"every": 0}}, ">= 1"),
    ({"method": "InitialGen", "metric": "MNA", "env": {"family": "sokoban"}},
     "minigrid-family only"),
])
def test_strict_loading_rejects(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        RunConfig.from_dict(data)


def test_from_json_rejects_non_objects():
    with pytest.raises(ConfigError, match="valid JSON"):
        RunConfig.from_json("{not json")
    with pytest.raises(ConfigError, match="must be an object"):
        RunConfig.from_json("[1, 2]")


def test_degen_accepts_every_per_step_metric():
    for metric in ("MNA", "PVL", "MaxMC"):
        cfg = RunConfig.from_dict({"method": "DEGen", "metric": metric})
        assert cfg.metric == metric


def test_canonical_hash_sensitivity():
    base = RunConfig()
    assert base.config_hash() == RunConfig().config_hash()
    changed = RunConfig(seed=1)
    assert changed.config_hash() != base.config_hash()
    # key order in the input must not matter
    a = RunConfig.from_json('{"seed": 5, "method": "DR"}')
    b = RunConfig.from_json('{"method": "DR", "seed": 5}')
    assert a.canonical_json() == b.canonical_json()


def test_smoke_configs_valid_for_all_methods():
    for method in METHODS:
        family = "minigrid"
        cfg = smoke_config(method=method, family=family, num_updates=5, num_envs=8)
        assert cfg.method == method
        assert cfg.env.size == 7 and cfg.env.wall_count == [0, 6]
        assert cfg.wall_clock == "zero"
        cfg.env.gen_config()   # constructible generator parameters
        cfg.student.ppo()


def test_eval_section_defaults():
    ev = EvalSection()
    assert ev.every == 250 and ev.level_set == "minigrid13"
    with pytest.raises(ConfigError):
        EvalSection(episodes_per_level=0)


def test_env_section_carries_family_enum():
    env = EnvSection(family="sokoban")
    assert env.family_enum == Family.SOKOBAN
    with pytest.raises(ConfigError):
        EnvSection(family="")
