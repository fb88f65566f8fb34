"""Deterministic gridworld dynamics for three families.

Families: minigrid (navigate to goal), key_minigrid (a locked door may stand
between agent and goal; a key opens it), sokoban (push every box onto a
storage cell). All dynamics are pure functions of (state, action); the only
randomness lives in `reset` when a level carries no fixed start pose.

Geometry: the agent observes a 5x5 window in front of itself, oriented so the
facing direction is "up". The agent occupies the bottom-center cell of the
window (view row 4, col 2); a cell two steps ahead therefore appears in view
row 2. Out-of-bounds cells read as Wall.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InvalidLevel


class Cell(IntEnum):
    EMPTY = 0
    WALL = 1
    GOAL = 2
    KEY = 3
    DOOR_LOCKED = 4
    DOOR_UNLOCKED = 5
    BOX = 6
    STORAGE = 7
    BOX_ON_STORAGE = 8
    UNGENERATED = 9


N_CELL_KINDS = 10


class Family(IntEnum):
    MINIGRID = 0
    KEY_MINIGRID = 1
    SOKOBAN = 2


FAMILY_NAMES = {
    Family.MINIGRID: "minigrid",
    Family.KEY_MINIGRID: "key_minigrid",
    Family.SOKOBAN: "sokoban",
}
FAMILY_BY_NAME = {v: k for k, v in FAMILY_NAMES.items()}


class Action(IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    USE = 3    # key_minigrid only: unlock the door directly ahead
    RESET = 4  # sokoban only: restore authored cell contents and start pose


def action_space(family: Family) -> tuple[Action, ...]:
    if family == Family.MINIGRID:
        return (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)
    if family == Family.KEY_MINIGRID:
        return (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.USE)
    return (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.RESET)


class Direction(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


# (drow, dcol) per direction; "right" is forward rotated 90 degrees clockwise.
_FORWARD = {
    Direction.NORTH: (-1, 0),
    Direction.EAST: (0, 1),
    Direction.SOUTH: (1, 0),
    Direction.WEST: (0, -1),
}
_RIGHT = {
    Direction.NORTH: (0, 1),
    Direction.EAST: (1, 0),
    Direction.SOUTH: (0, -1),
    Direction.WEST: (-1, 0),
}

VIEW_SIZE = 5
_VIEW_ROWS, _VIEW_COLS = np.meshgrid(
    np.arange(VIEW_SIZE), np.arange(VIEW_SIZE), indexing="ij"
)
# Precomputed world offsets per direction: offset = (4 - r) * forward + (c - 2) * right.
_VIEW_OFFSETS = {}
for _d in Direction:
    _f = _FORWARD[_d]
    _r = _RIGHT[_d]
    _VIEW_OFFSETS[_d] = (
        (4 - _VIEW_ROWS) * _f[0] + (_VIEW_COLS - 2) * _r[0],
        (4 - _VIEW_ROWS) * _f[1] + (_VIEW_COLS - 2) * _r[1],
    )


class AgentState(NamedTuple):
    row: int
    col: int
    direction: Direction
    has_key: bool = False


@dataclass(frozen=True)
class Level:
    """A finalized level: grid contents, family, optional start pose, time limit.

    `grid` is an (H, W) int8 array of Cell values. Border cells are Wall.
    Finalized levels contain no UNGENERATED cells (partial grids exist only
    inside the interleaved generator and go through the non-validating
    serializer).
    """

    width: int
    height: int
    family: Family
    grid: np.ndarray
    start: AgentState | None
    t_max: int

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.int8))
        self.grid.setflags(write=False)

    def cell_counts(self) -> np.ndarray:
        return np.bincount(self.grid.reshape(-1), minlength=N_CELL_KINDS)


def default_t_max(width: int, height: int) -> int:
    return 2 * width * height


def goal_reward(t: int, t_max: int) -> float:
    """Terminal reward for finishing at step t of a t_max-step budget.

    Linearly decays from just under 1 (instant) to 0.1 (last step). Raises
    DomainError outside 0 < t <= t_max. The rescaled form keeps the boundary
    value exactly 0.1 in floating point.
    """
    if t_max <= 0:
        raise DomainError(f"t_max must be positive, got {t_max}")
    if not 0 < t <= t_max:
        raise DomainError(f"t={t} outside (0, {t_max}]")
    return (10.0 - 9.0 * (t / t_max)) / 10.0


@dataclass
class EnvState:
    """Live episode state. Treated as a value: step() returns a new instance.

    `grid` holds current contents (keys vanish when picked up, doors unlock,
    boxes move); `authored` holds what the level/generator wrote and is the
    restore source for the sokoban reset action. The two share storage until
    a mutation forces a copy.
    """

    level: Level
    grid: np.ndarray
    authored: np.ndarray
    agent: AgentState
    start: AgentState
    t: int
    done: bool
    solved: bool

    @property
    def t_max(self) -> int:
        return self.level.t_max


def reset(level: Level, start_override: AgentState | None = None,
          rng: np.random.Generator | int | None = None) -> EnvState:
    """Start an episode. Uses start_override, else the level's start pose,
    else a uniformly random empty cell and direction drawn from `rng`."""
    agent = start_override if start_override is not None else level.start
    if agent is None:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        empties = np.argwhere(level.grid == Cell.EMPTY)
        if len(empties) == 0:
            raise InvalidLevel("no empty cell available for a start pose")
        r, c = empties[gen.integers(len(empties))]
        agent = AgentState(int(r), int(c), Direction(int(gen.integers(4))), False)
    if not (0 <= agent.row < level.height and 0 <= agent.col < level.width):
        raise InvalidLevel(f"start pose {agent.row},{agent.col} out of bounds")
    if level.grid[agent.row, agent.col] != Cell.EMPTY:
        raise InvalidLevel(
            f"start cell ({agent.row},{agent.col}) is "
            f"{Cell(level.grid[agent.row, agent.col]).name}, not EMPTY"
        )
    agent = AgentState(agent.row, agent.col, Direction(agent.direction), False)
    grid = level.grid.copy()
    return EnvState(
        level=level, grid=grid, authored=grid.copy(), agent=agent, start=agent,
        t=0, done=False, solved=False,
    )


def _cell_at(grid: np.ndarray, row: int, col: int) -> Cell:
    h, w = grid.shape
    if 0 <= row < h and 0 <= col < w:
        return Cell(grid[row, col])
    return Cell.WALL


def _sokoban_solved(grid: np.ndarray) -> bool:
    # All boxes stored, and at least one box exists to have been stored.
    return not (grid == Cell.BOX).any() and bool((grid == Cell.BOX_ON_STORAGE).any())


def step(state: EnvState, action: Action) -> tuple[EnvState, float, bool]:
    """Advance one step. Illegal moves are no-ops; time runs regardless."""
    if state.done:
        raise DomainError("step() called on a finished episode")
    family = state.level.family
    if action not in action_space(family):
        raise DomainError(f"action {Action(action).name} not in {FAMILY_NAMES[family]} action set")

    grid = state.grid
    agent = state.agent
    reward = 0.0
    solved = False

    if action == Action.TURN_LEFT:
        agent = agent._replace(direction=Direction((agent.direction - 1) % 4))
    elif action == Action.TURN_RIGHT:
        agent = agent._replace(direction=Direction((agent.direction + 1) % 4))
    elif action == Action.USE:
        dr, dc = _FORWARD[agent.direction]
        fr, fc = agent.row + dr, agent.col + dc
        if agent.has_key and _cell_at(grid, fr, fc) == Cell.DOOR_LOCKED:
            grid = grid.copy()
            grid[fr, fc] = Cell.DOOR_UNLOCKED
    elif action == Action.RESET:
        grid = state.authored.copy()
        agent = state.start
    elif action == Action.FORWARD:
        dr, dc = _FORWARD[agent.direction]
        fr, fc = agent.row + dr, agent.col + dc
        target = _cell_at(grid, fr, fc)
        if target in (Cell.EMPTY, Cell.STORAGE, Cell.DOOR_UNLOCKED):
            agent = agent._replace(row=fr, col=fc)
        elif target == Cell.KEY:
            grid = grid.copy()
            grid[fr, fc] = Cell.EMPTY
            agent = agent._replace(row=fr, col=fc, has_key=True)
        elif target == Cell.GOAL:
            agent = agent._replace(row=fr, col=fc)
            solved = True
        elif target in (Cell.BOX, Cell.BOX_ON_STORAGE) and family == Family.SOKOBAN:
            br, bc = fr + dr, fc + dc
            dest = _cell_at(grid, br, bc)
            if dest in (Cell.EMPTY, Cell.STORAGE):
                grid = grid.copy()
                grid[fr, fc] = Cell.STORAGE if target == Cell.BOX_ON_STORAGE else Cell.EMPTY
                grid[br, bc] = Cell.BOX_ON_STORAGE if dest == Cell.STORAGE else Cell.BOX
                agent = agent._replace(row=fr, col=fc)
        # Wall, locked door, blocked box: no-op.

    t = state.t + 1
    if family == Family.SOKOBAN and not solved and _sokoban_solved(grid):
        solved = True
    if solved:
        reward = goal_reward(t, state.level.t_max)
    done = solved or t >= state.level.t_max
    new_state = replace(state, grid=grid, agent=agent, t=t, done=done, solved=solved)
    return new_state, reward, done


@dataclass(frozen=True)
class Observation:
    """5x5 egocentric window plus pose scalars.

    `view` is int8 Cell values; index [4, 2] is the cell under the agent and
    row 0 is four steps ahead. `has_key` is meaningful in key_minigrid only.
    """

    view: np.ndarray
    direction: Direction
    has_key: bool


def observe(state: EnvState) -> Observation:
    view = observe_grid(state.grid, state.agent)
    return Observation(view=view, direction=state.agent.direction, has_key=state.agent.has_key)


def observe_grid(grid: np.ndarray, agent: AgentState) -> np.ndarray:
    """The 5x5 window of `grid` seen from `agent`; out-of-bounds reads Wall."""
    h, w = grid.shape
    off_r, off_c = _VIEW_OFFSETS[Direction(agent.direction)]
    rows = agent.row + off_r
    cols = agent.col + off_c
    inb = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    view = np.full((VIEW_SIZE, VIEW_SIZE), Cell.WALL, dtype=np.int8)
    view[inb] = grid[rows[inb], cols[inb]]
    return view


def view_world_coords(agent: AgentState) -> tuple[np.ndarray, np.ndarray]:
    """World (rows, cols) arrays for each cell of the agent's 5x5 window."""
    off_r, off_c = _VIEW_OFFSETS[Direction(agent.direction)]
    return agent.row + off_r, agent.col + off_c
