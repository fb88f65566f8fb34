"""Shared test utilities: compact level construction from row strings and an
independent action-level solvability search used to cross-check the
reachability oracle."""

from __future__ import annotations

import numpy as np

from uedlab.gridworld import Cell, Level
from uedlab.levelgen import parse_level

_FWD = {0: (-1, 0), 1: (0, 1), 2: (1, 0), 3: (0, -1)}


def level_from_rows(rows, family: str = "minigrid", t_max: int | None = None,
                    validate: bool = True, allow_ungenerated: bool = False) -> Level:
    """Build a level from literal row strings (border included)."""
    width, height = len(rows[0]), len(rows)
    t = t_max if t_max is not None else 2 * width * height
    text = f"{width} {height} {family} {t}\n" + "\n".join(rows) + "\n"
    return parse_level(text, validate=validate, allow_ungenerated=allow_ungenerated)


def search_solvable(level: Level) -> bool:
    """Exhaustive action search, written independently of the package's
    reachability code: depth-first over (row, col, direction, has_key,
    door_open) states
    with the forward/turn/unlock action semantics. True iff some action
    sequence walks onto the goal."""
    grid = [[int(v) for v in row] for row in level.grid]
    h, w = level.height, level.width
    empty, wall = int(Cell.EMPTY), int(Cell.WALL)
    goal, key = int(Cell.GOAL), int(Cell.KEY)
    locked, unlocked = int(Cell.DOOR_LOCKED), int(Cell.DOOR_UNLOCKED)

    start = (level.start.row, level.start.col, int(level.start.direction), 0, 0)
    seen = {start}
    stack = [start]
    while stack:
        r, c, d, k, o = stack.pop()
        successors = [(r, c, (d - 1) % 4, k, o), (r, c, (d + 1) % 4, k, o)]
        fr, fc = r + _FWD[d][0], c + _FWD[d][1]
        cell = grid[fr][fc] if 0 <= fr < h and 0 <= fc < w else wall
        if cell == goal:
            return True
        if cell == key:
            if k:  # already collected; the cell is bare floor now
                successors.append((fr, fc, d, k, o))
            else:
                successors.append((fr, fc, d, 1, o))
        elif cell == empty or cell == unlocked:
            successors.append((fr, fc, d, k, o))
        elif cell == locked:
            if o:
                successors.append((fr, fc, d, k, o))
            elif k:  # unlock-in-place action
                successors.append((r, c, d, k, 1))
        for s in successors:
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return False


def env_search_solvable(level: Level) -> bool:
    """Slower cross-check of `search_solvable`: exhaustive search driven by
    the environment's own step function."""
    from exact_mdp import build_transition_graph

    _, _, transitions = build_transition_graph(level)
    return any(solves for _, solves in transitions.values())
