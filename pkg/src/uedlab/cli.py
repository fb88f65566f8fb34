"""Command-line entry points.

  uedlab train    --config cfg.json --out runs/exp [--seed N] [--threads K]
  uedlab eval     --checkpoint student.ckpt.npz --levels minigrid13 [...]
  uedlab score    --checkpoint student.ckpt.npz --level lv.txt --metric MNA [...]
  uedlab solvable --level lv.txt

Results go to stdout as JSON. Failures print a single-line JSON object
{"error": <type>, "message": <text>} on stderr and exit nonzero. The seed
resolution order for `train` is: --seed flag, then the DEGEN_SEED environment
variable, then the config file's value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch

from .config import RunConfig
from .errors import UedError
from .gridworld import Family
from .levelgen import level_hash, parse_level
from .learner import load_checkpoint, restore_policy
from .orchestrator import evaluate, resolve_level_set, train
from .scoring import LevelScoreContext, Metric, ScoreParams, Trajectory, level_score
from .solvability import bfs_solvable


def _load_policy(path: str):
    params, meta = load_checkpoint(path)
    return restore_policy(params, meta), meta


def cmd_train(args: argparse.Namespace) -> dict:
    with open(args.config) as fh:
        data = json.load(fh)
    if args.seed is not None:
        data["seed"] = args.seed
    elif os.environ.get("DEGEN_SEED"):
        data["seed"] = int(os.environ["DEGEN_SEED"])
    if args.threads is not None:
        data["threads"] = args.threads
    cfg = RunConfig.from_dict(data)
    return train(cfg, args.out)


def cmd_eval(args: argparse.Namespace) -> dict:
    policy, meta = _load_policy(args.checkpoint)
    eval_set = resolve_level_set(args.levels)
    rows = evaluate(policy, eval_set, args.episodes, seed=args.seed,
                    greedy=args.greedy)
    return {"checkpoint_updates": meta["update_count"], "levels": rows}


def cmd_score(args: argparse.Namespace) -> dict:
    policy, _ = _load_policy(args.checkpoint)
    with open(args.level) as fh:
        level = parse_level(fh.read())
    # The score needs value estimates along each episode, so play them through
    # the rollout machinery: one env slot, an episode-length rollout each.
    from .orchestrator import rollout_fixed

    trajectories: list[Trajectory] = []
    for ep in range(args.episodes):
        _, rollouts = rollout_fixed(
            policy, [level], level.family, level.t_max,
            torch.Generator().manual_seed(args.seed + ep),
            np.random.default_rng(args.seed + ep),
        )
        trajectories.append(rollouts[0].trajectories[0])
    ctx = LevelScoreContext(trajectories=trajectories)
    return {
        "level_hash": level_hash(level),
        "episodes": args.episodes,
        "solve_rate": ctx.solve_rate,
        "mean_return": float(np.mean([t.episode_return for t in trajectories])),
        "metric": args.metric,
        "score": level_score(ctx, Metric(args.metric), ScoreParams()),
    }


def cmd_solvable(args: argparse.Namespace) -> dict:
    with open(args.level) as fh:
        level = parse_level(fh.read())
    if level.family == Family.SOKOBAN:
        raise UedError("the reachability oracle covers the two minigrid families only")
    return {"level_hash": level_hash(level), "solvable": bfs_solvable(level)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uedlab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training configuration")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--threads", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="zero-shot evaluation of a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--levels", required=True,
                        help="named level set or path to a manifest JSON")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--greedy", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_score = sub.add_parser("score", help="score one level under a checkpoint")
    p_score.add_argument("--checkpoint", required=True)
    p_score.add_argument("--level", required=True)
    p_score.add_argument("--metric", default="MNA",
                         choices=[m.value for m in Metric])
    p_score.add_argument("--episodes", type=int, default=8)
    p_score.add_argument("--seed", type=int, default=0)
    p_score.set_defaults(func=cmd_score)

    p_solv = sub.add_parser("solvable", help="exact reachability check")
    p_solv.add_argument("--level", required=True)
    p_solv.set_defaults(func=cmd_solvable)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except UedError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
