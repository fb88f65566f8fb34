"""Reachability-based solvability for minigrid-family levels, plus the
episode-history proxy used by scoring gates.

`bfs_solvable` searches (position, has_key) states: four-neighbour moves,
walls block, a locked door is passable only with the key (passing consumes
nothing — unlocking is modelled as passability), stepping onto the key cell
grants it. Turning costs are irrelevant to reachability, so direction is not
part of the search state.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NoGoal
from .gridworld import Cell, Level

_PASSABLE_FREE = (Cell.EMPTY, Cell.GOAL, Cell.KEY, Cell.DOOR_UNLOCKED)


def bfs_solvable(level: Level, start: tuple[int, int] | None = None) -> bool:
    """True iff the goal is reachable from the start. Raises NoGoal if the
    level has no goal cell (which covers sokoban levels)."""
    grid = level.grid
    if not (grid == Cell.GOAL).any():
        raise NoGoal("level has no goal cell")
    if start is None:
        if level.start is None:
            raise NoGoal("level has no start pose and none was given")
        start = (level.start.row, level.start.col)
    h, w = grid.shape
    seen = np.zeros((h, w, 2), dtype=bool)
    queue: deque[tuple[int, int, int]] = deque()
    queue.append((start[0], start[1], 0))
    seen[start[0], start[1], 0] = True
    while queue:
        r, c, key = queue.popleft()
        if grid[r, c] == Cell.GOAL:
            return True
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w):
                continue
            cell = Cell(grid[nr, nc])
            if cell in _PASSABLE_FREE or (cell == Cell.DOOR_LOCKED and key):
                nkey = 1 if (key or cell == Cell.KEY) else 0
                if not seen[nr, nc, nkey]:
                    seen[nr, nc, nkey] = True
                    queue.append((nr, nc, nkey))
    return False


@dataclass
class SolveRecord:
    """Monotone per-level history of episode outcomes."""

    attempts: int = 0
    successes: int = 0

    def record(self, solved: bool) -> None:
        self.attempts += 1
        self.successes += int(solved)

    @property
    def ever_solved(self) -> bool:
        return self.successes > 0


def approx_solvable(history: SolveRecord) -> int:
    """Binary solvability estimate from observed episodes: 1 iff ever solved."""
    return 1 if history.ever_solved else 0
