"""Deterministic gridworld laboratory for adaptive level curricula:
environments, level generation and replay buffers, trajectory scoring, a
compact recurrent PPO learner, and training orchestration for six methods."""

__version__ = "0.1.0"

from .config import RunConfig, smoke_config
from .gridworld import Action, Cell, Direction, Family, Level
from .levelgen import GenConfig, level_hash, mutate, parse_level, random_level, serialize_level
from .orchestrator import Trainer, evaluate, train
from .scoring import Metric, ScoreParams, Trajectory, level_score
from .solvability import bfs_solvable

__all__ = [
    "Action", "Cell", "Direction", "Family", "GenConfig", "Level", "Metric",
    "RunConfig", "ScoreParams", "Trainer", "Trajectory", "bfs_solvable",
    "evaluate", "level_hash", "level_score", "mutate", "parse_level",
    "random_level", "serialize_level", "smoke_config", "train", "__version__",
]
