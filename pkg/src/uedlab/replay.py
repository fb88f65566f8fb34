"""Scored level replay: a bounded buffer with rank-prioritized, staleness-
mixed sampling; mutation-based proposals on top of it; and a periodically
refreshed learnability buffer.

Identity is the sha256 of a level's canonical serialization, so the same grid
reached twice is one entry. The buffer also owns the lifetime solve history
(level hash -> ever solved), which outlives eviction and feeds scoring gates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ConfigError, EmptyBuffer
from .gridworld import Level
from .levelgen import level_hash, mutate, serialize_level
from .scoring import learnability


class ReplayDecision(Enum):
    REPLAY = "replay"
    SAMPLE_NEW = "sample_new"


@dataclass
class PLRConfig:
    replay_rate: float = 0.5       # probability of the replay branch
    buffer_size: int = 8000
    temperature: float = 1.0       # beta: rank weights are (1/rank)^(1/beta)
    staleness_coef: float = 0.3    # mixture weight on the staleness distribution
    train_on_new: bool = False     # robust variant: gradients only on replayed levels
    num_edits: int = 20            # mutation budget for edit-based proposals

    def __post_init__(self):
        if not 0.0 <= self.replay_rate <= 1.0:
            raise ConfigError(f"replay_rate {self.replay_rate} outside [0, 1]")
        if self.buffer_size < 1:
            raise ConfigError(f"buffer_size must be >= 1, got {self.buffer_size}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.staleness_coef <= 1.0:
            raise ConfigError(f"staleness_coef {self.staleness_coef} outside [0, 1]")
        if self.num_edits < 0:
            raise ConfigError(f"num_edits must be >= 0, got {self.num_edits}")


@dataclass
class BufferEntry:
    level: Level
    score: float
    insert_update: int
    last_scored_update: int
    insert_order: int
    ever_solved: bool = False


class LevelBuffer:
    """Bounded score-prioritized buffer with stable (insertion-order) layout."""

    def __init__(self, cfg: PLRConfig):
        self.cfg = cfg
        self._entries: dict[str, BufferEntry] = {}
        self._order: list[str] = []          # insertion order, evictions removed
        self._counter = 0
        self.solve_history: dict[str, bool] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    @property
    def entries(self) -> list[BufferEntry]:
        return [self._entries[h] for h in self._order]

    def entry(self, key: str) -> BufferEntry:
        return self._entries[key]

    def record_outcome(self, level_or_hash: Level | str, solved: bool) -> None:
        """Lifetime solve history; monotone, survives eviction."""
        h = level_or_hash if isinstance(level_or_hash, str) else level_hash(level_or_hash)
        self.solve_history[h] = self.solve_history.get(h, False) or solved
        if h in self._entries:
            self._entries[h].ever_solved |= solved

    def ever_solved(self, level_or_hash: Level | str) -> bool:
        h = level_or_hash if isinstance(level_or_hash, str) else level_hash(level_or_hash)
        return self.solve_history.get(h, False)

    def decide_replay(self, rng: np.random.Generator) -> ReplayDecision:
        """Bernoulli(replay_rate), forced to sample-new while empty. The draw
        is consumed either way so downstream streams stay aligned."""
        draw = rng.random() < self.cfg.replay_rate
        if not self._entries:
            return ReplayDecision.SAMPLE_NEW
        return ReplayDecision.REPLAY if draw else ReplayDecision.SAMPLE_NEW

    def sampling_distribution(self, current_update: int) -> np.ndarray:
        """Mixture of rank-based score weights and staleness weights, aligned
        with `entries` (insertion order)."""
        if not self._order:
            raise EmptyBuffer("sampling distribution of an empty buffer")
        entries = self.entries
        scores = np.array([e.score for e in entries], dtype=np.float64)
        orders = np.array([e.insert_order for e in entries], dtype=np.int64)
        # rank 1 = highest score; ties broken toward the older insert.
        sorted_idx = np.lexsort((orders, -scores))
        ranks = np.empty(len(entries), dtype=np.float64)
        ranks[sorted_idx] = np.arange(1, len(entries) + 1)
        p_score = (1.0 / ranks) ** (1.0 / self.cfg.temperature)
        p_score /= p_score.sum()
        staleness = np.array(
            [current_update - e.last_scored_update for e in entries], dtype=np.float64
        )
        total = staleness.sum()
        p_stale = staleness / total if total > 0 else np.full(len(entries), 1.0 / len(entries))
        rho = self.cfg.staleness_coef
        return (1.0 - rho) * p_score + rho * p_stale

    def sample(self, rng: np.random.Generator, current_update: int, n: int = 1) -> list[BufferEntry]:
        """n i.i.d. draws from the sampling distribution."""
        probs = self.sampling_distribution(current_update)
        idx = rng.choice(len(probs), size=n, p=probs)
        entries = self.entries
        return [entries[i] for i in idx]

    def insert_or_update(self, level: Level, score: float, current_update: int,
                         solved: bool = False) -> bool:
        """Score a level into the buffer. An existing entry's score is
        replaced and its staleness clock reset. A new level enters while there
        is room; at capacity it must strictly beat the minimum score, whose
        entry is evicted (ties toward the least recently scored, then the
        earliest insert). Returns True iff the level is now in the buffer."""
        h = level_hash(level)
        self.record_outcome(h, solved)
        if h in self._entries:
            e = self._entries[h]
            e.score = float(score)
            e.last_scored_update = current_update
            return True
        if len(self._entries) >= self.cfg.buffer_size:
            victim = min(
                self._order,
                key=lambda k: (
                    self._entries[k].score,
                    self._entries[k].last_scored_update,
                    self._entries[k].insert_order,
                ),
            )
            if float(score) <= self._entries[victim].score:
                return False
            del self._entries[victim]
            self._order.remove(victim)
        self._entries[h] = BufferEntry(
            level=level, score=float(score), insert_update=current_update,
            last_scored_update=current_update, insert_order=self._counter,
            ever_solved=self.solve_history.get(h, False),
        )
        self._order.append(h)
        self._counter += 1
        return True

    def propose_edit(self, rng: np.random.Generator, current_update: int) -> Level:
        """Draw one buffered level by priority and return a mutated copy."""
        if not self._entries:
            raise EmptyBuffer("cannot propose edits from an empty buffer")
        base = self.sample(rng, current_update, n=1)[0]
        return mutate(base.level, self.cfg.num_edits, rng)

    def dump_snapshot(self, path, current_update: int) -> None:
        """JSON-lines snapshot: hash, score, staleness, solve flag, and the
        level payload in text form."""
        with open(path, "w") as fh:
            for h in self._order:
                e = self._entries[h]
                fh.write(json.dumps({
                    "hash": h,
                    "score": e.score,
                    "staleness": current_update - e.last_scored_update,
                    "ever_solved": e.ever_solved,
                    "level": serialize_level(e.level),
                }) + "\n")


def accel_propose(buffer: LevelBuffer, rng: np.random.Generator,
                  current_update: int) -> Level:
    """Edit-based proposal from the buffer (module-level convenience)."""
    return buffer.propose_edit(rng, current_update)


# ---------------------------------------------------------------------------
# Learnability buffer


@dataclass
class SFLConfig:
    batch_size: int = 25000        # levels sampled per refresh
    rollout_length: int = 20000    # recorded rollout budget (see manifest); the
                                   # estimator consumes rollouts_per_level below
    update_period: int = 100       # student updates between refreshes
    buffer_size: int = 1000        # top-K kept
    sample_ratio: float = 0.5      # probability a training level comes from the buffer
    rollouts_per_level: int = 8    # episodes per success-probability estimate

    def __post_init__(self):
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ConfigError("batch_size and buffer_size must be >= 1")
        if not 0.0 <= self.sample_ratio <= 1.0:
            raise ConfigError(f"sample_ratio {self.sample_ratio} outside [0, 1]")
        if self.rollouts_per_level < 1:
            raise ConfigError("rollouts_per_level must be >= 1")


@dataclass
class SFLEntry:
    level: Level
    success_prob: float

    @property
    def score(self) -> float:
        return learnability(self.success_prob)


def sfl_refresh(cfg: SFLConfig, propose: Callable[[], Level],
                success_prob: Callable[[Level], float]) -> list[SFLEntry]:
    """Sample batch_size candidate levels, estimate each one's success
    probability, and keep the top buffer_size by p*(1-p). A level at p=0 or
    p=1 can only appear when fewer than buffer_size levels sit strictly
    between; sorting is stable in proposal order."""
    candidates = [propose() for _ in range(cfg.batch_size)]
    entries = [SFLEntry(level, float(success_prob(level))) for level in candidates]
    ranked = sorted(enumerate(entries), key=lambda kv: (-kv[1].score, kv[0]))
    return [e for _, e in ranked[: cfg.buffer_size]]


class SFLBuffer:
    """Holds the current learnability top-K; uniform sampling for training."""

    def __init__(self, cfg: SFLConfig):
        self.cfg = cfg
        self.entries: list[SFLEntry] = []
        self.last_refresh_update: int | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def due(self, current_update: int) -> bool:
        if self.last_refresh_update is None:
            return True
        return current_update - self.last_refresh_update >= self.cfg.update_period

    def refresh(self, current_update: int, propose: Callable[[], Level],
                success_prob: Callable[[Level], float]) -> None:
        self.entries = sfl_refresh(self.cfg, propose, success_prob)
        self.last_refresh_update = current_update

    def sample(self, rng: np.random.Generator) -> Level:
        if not self.entries:
            raise EmptyBuffer("learnability buffer is empty")
        return self.entries[int(rng.integers(len(self.entries)))].level
