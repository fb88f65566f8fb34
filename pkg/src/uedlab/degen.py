"""Interleaved level generation: a generator agent authors the level cell by
cell, just ahead of a student playing it.

Protocol per episode: the level starts all-ungenerated (border walls, a random
empty start cell for the student). Whenever the student's current 5x5 view
contains in-bounds ungenerated cells, the generator acts — one cell per
generator step, (window position, object) with legality masking — until the
view is fully authored; only then does the student take one action. Authored
content never changes except through student dynamics (key pickup, door
unlock, box pushes). At episode end, never-observed cells are archived as
walls.

Generator rewards are dense: the episode's per-student-step score G_t is
chunked by generation bursts, and each chunk is credited to the last generator
step of the burst that preceded it, scaled by 1/T. The chunks tile the episode
exactly, so the generator's summed reward equals the episode score.

The upfront variant authors a level in a fixed number of whole-grid actions
before the student ever moves, with the entire score granted on its final
step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, PolicyError, ShapeError
from .gridworld import (
    AgentState,
    Action,
    Cell,
    Direction,
    EnvState,
    Family,
    Level,
    Observation,
    VIEW_SIZE,
    default_t_max,
    observe,
    observe_grid,
    reset,
    step,
    view_world_coords,
)

# Object vocabularies for the generator's second action head, per family.
MINIGRID_OBJECTS = (Cell.WALL, Cell.EMPTY, Cell.GOAL, Cell.KEY, Cell.DOOR_LOCKED)
SOKOBAN_OBJECTS = (Cell.EMPTY, Cell.WALL, Cell.BOX, Cell.STORAGE, Cell.BOX_ON_STORAGE)
N_OBJECTS = 5
N_WINDOW_CELLS = VIEW_SIZE * VIEW_SIZE


def object_set(family: Family) -> tuple[Cell, ...]:
    return SOKOBAN_OBJECTS if family == Family.SOKOBAN else MINIGRID_OBJECTS


def placement_caps(family: Family) -> dict[Cell, int]:
    """How many of each capped object may still be placed. Plain minigrid
    keeps the 5-object head but masks key/door permanently (cap 0)."""
    if family == Family.MINIGRID:
        return {Cell.GOAL: 1, Cell.KEY: 0, Cell.DOOR_LOCKED: 0}
    if family == Family.KEY_MINIGRID:
        return {Cell.GOAL: 1, Cell.KEY: 1, Cell.DOOR_LOCKED: 1}
    return {}


def kl_prior(p_g: float) -> np.ndarray:
    """Prior over the 5 objects: rare mass p_g on each of the three structured
    objects, the rest split evenly over the two common ones."""
    if not 0.0 < p_g < 1.0 / 3.0:
        raise DomainError(f"p_g={p_g} outside (0, 1/3)")
    p_w = 0.5 - 1.5 * p_g
    return np.array([p_w, p_w, p_g, p_g, p_g], dtype=np.float64)


class TeacherAction(NamedTuple):
    cell: int  # index into the 5x5 window, row-major 0..24
    obj: int   # index into the family's object set, 0..4


@dataclass(frozen=True)
class TeacherObservation:
    """What the generator conditions on: the student's current window, which
    of its cells are still ungenerated, and the student's facing direction."""

    view: np.ndarray       # (5, 5) int8 Cell values (ungenerated cells visible)
    gen_mask: np.ndarray   # (5, 5) bool, True where in-bounds and ungenerated
    direction: Direction


@dataclass
class GenEpisodeState:
    """Mutable state of one interleaved episode. Owned by its driver; the
    contained EnvState's arrays are mutated in place by generator writes."""

    env: EnvState
    caps: dict[Cell, int]
    tau: list[int] = field(default_factory=list)   # student steps taken before each generator step
    student_steps: int = 0
    teacher_steps: int = 0
    rewards: list[float] = field(default_factory=list)

    @property
    def family(self) -> Family:
        return self.env.level.family

    @property
    def done(self) -> bool:
        return self.env.done


def init_generation(family: Family, size: int, t_max: int | None = None,
                    rng: np.random.Generator | int | None = None) -> GenEpisodeState:
    """Fresh all-ungenerated level with a random student start pose. The start
    cell is authored as empty so the student always stands on real ground."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    t_max = t_max if t_max is not None else default_t_max(size, size)
    grid = np.full((size, size), Cell.UNGENERATED, dtype=np.int8)
    grid[0, :] = grid[-1, :] = Cell.WALL
    grid[:, 0] = grid[:, -1] = Cell.WALL
    r = int(gen.integers(1, size - 1))
    c = int(gen.integers(1, size - 1))
    grid[r, c] = Cell.EMPTY
    start = AgentState(r, c, Direction(int(gen.integers(4))), False)
    level = Level(width=size, height=size, family=family, grid=grid,
                  start=start, t_max=t_max)
    env = reset(level, start_override=start)
    return GenEpisodeState(env=env, caps=placement_caps(family))


def teacher_observation(state: GenEpisodeState) -> TeacherObservation:
    agent = state.env.agent
    view = observe_grid(state.env.grid, agent)
    rows, cols = view_world_coords(agent)
    h, w = state.env.grid.shape
    inb = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    gen_mask = np.zeros((VIEW_SIZE, VIEW_SIZE), dtype=bool)
    gen_mask[inb] = state.env.authored[rows[inb], cols[inb]] == Cell.UNGENERATED
    return TeacherObservation(view=view, gen_mask=gen_mask, direction=agent.direction)


def legal_mask(state: GenEpisodeState) -> tuple[np.ndarray, np.ndarray]:
    """(cell mask (25,), object mask (5,)). A window cell is legal iff it is
    in-bounds and ungenerated; an object is legal while its cap allows it."""
    obs = teacher_observation(state)
    a1 = obs.gen_mask.reshape(-1).copy()
    objs = object_set(state.family)
    a2 = np.array([state.caps.get(o, 1) > 0 if o in state.caps else True for o in objs])
    return a1, a2


def needs_generation(state: GenEpisodeState) -> bool:
    obs = teacher_observation(state)
    return bool(obs.gen_mask.any())


def apply_teacher_action(state: GenEpisodeState, action: TeacherAction) -> None:
    """Author one cell. Raises PolicyError if the action violates the mask."""
    a1_mask, a2_mask = legal_mask(state)
    if not (0 <= action.cell < N_WINDOW_CELLS) or not a1_mask[action.cell]:
        raise PolicyError(f"window cell {action.cell} is not legal to author")
    if not (0 <= action.obj < N_OBJECTS) or not a2_mask[action.obj]:
        raise PolicyError(f"object index {action.obj} is masked")
    rows, cols = view_world_coords(state.env.agent)
    r = int(rows.reshape(-1)[action.cell])
    c = int(cols.reshape(-1)[action.cell])
    value = object_set(state.family)[action.obj]
    state.env.authored[r, c] = value
    state.env.grid[r, c] = value
    if value in state.caps:
        state.caps[value] -= 1
    state.tau.append(state.student_steps)
    state.teacher_steps += 1


def apply_student_action(state: GenEpisodeState, action: Action) -> tuple[float, bool]:
    """One student step. The driver must finish the generation burst first."""
    if needs_generation(state):
        raise PolicyError("student cannot act while its view contains ungenerated cells")
    env, reward, done = step(state.env, action)
    state.env = env
    state.student_steps += 1
    state.rewards.append(reward)
    return reward, done


def archive_level(state: GenEpisodeState) -> Level:
    """The authored level for provenance: never-observed cells become walls,
    the start pose is the episode's. Not validated — the generator may author
    things (e.g. unbalanced sokoban) that the random generator never would."""
    grid = state.env.authored.copy()
    grid[grid == Cell.UNGENERATED] = Cell.WALL
    return Level(width=state.env.level.width, height=state.env.level.height,
                 family=state.family, grid=grid, start=state.env.start,
                 t_max=state.env.level.t_max)


def assign_dense_rewards(step_scores: np.ndarray, tau: np.ndarray | list[int]) -> np.ndarray:
    """Spread per-student-step scores over generator steps.

    tau[i] is the number of student steps that had occurred when generator
    step i ran; tau is nondecreasing with values in [0, T]. Each chunk of
    student steps goes to the last generator step of the burst preceding it;
    chunks tile [0, T) so the rewards sum to (1/T) * sum_t G_t exactly.
    Student steps before the first generator step (possible only in degenerate
    geometry) are credited to generator step 0.
    """
    g = np.asarray(step_scores, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.int64)
    big_t = len(g)
    if tau.ndim != 1 or g.ndim != 1:
        raise ShapeError("step_scores and tau must be 1-d")
    if len(tau) == 0:
        if big_t > 0:
            raise ShapeError("cannot assign scores of a played episode to zero generator steps")
        return np.zeros(0)
    if big_t == 0:
        return np.zeros(len(tau))
    if (np.diff(tau) < 0).any():
        raise ShapeError("tau must be nondecreasing")
    if tau[0] < 0 or tau[-1] > big_t:
        raise ShapeError(f"tau values must lie in [0, {big_t}]")
    cum = np.concatenate(([0.0], np.cumsum(g)))
    lower = tau.copy()
    lower[0] = 0
    upper = np.concatenate((tau[1:], [big_t]))
    return (cum[upper] - cum[lower]) / big_t


TeacherPolicy = Callable[[TeacherObservation, np.ndarray, np.ndarray], TeacherAction]
StudentPolicy = Callable[[Observation], Action]


@dataclass
class EpisodeRecord:
    """Outcome of one interleaved episode, driven to completion."""

    level: Level
    tau: np.ndarray
    rewards: np.ndarray
    solved: bool
    student_steps: int
    teacher_steps: int
    trace: list[dict]


def run_interleaved_episode(
    family: Family,
    size: int,
    teacher_policy: TeacherPolicy,
    student_policy: StudentPolicy,
    t_max: int | None = None,
    rng: np.random.Generator | int | None = None,
    collect_trace: bool = False,
) -> EpisodeRecord:
    """Drive one episode with callable policies (tests, tracing, small runs;
    the trainer drives batches of GenEpisodeState directly)."""
    state = init_generation(family, size, t_max=t_max, rng=rng)
    trace: list[dict] = []
    done = False
    while not done:
        while needs_generation(state):
            obs = teacher_observation(state)
            a1_mask, a2_mask = legal_mask(state)
            action = teacher_policy(obs, a1_mask, a2_mask)
            apply_teacher_action(state, TeacherAction(*action))
            if collect_trace:
                trace.append({
                    "i": state.teacher_steps - 1, "actor": "teacher",
                    "action": [int(action[0]), int(action[1])],
                    "masked_count": int((~a1_mask).sum() + (~a2_mask).sum()),
                    "reward": 0.0,
                })
        action = student_policy(observe(state.env))
        reward, done = apply_student_action(state, Action(action))
        if collect_trace:
            trace.append({
                "i": state.student_steps - 1, "actor": "student",
                "action": int(action), "masked_count": 0, "reward": reward,
            })
    return EpisodeRecord(
        level=archive_level(state),
        tau=np.asarray(state.tau, dtype=np.int64),
        rewards=np.asarray(state.rewards, dtype=np.float64),
        solved=state.env.solved,
        student_steps=state.student_steps,
        teacher_steps=state.teacher_steps,
        trace=trace,
    )


def write_trace_jsonl(path, trace: list[dict]) -> None:
    import json

    with open(path, "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry) + "\n")


# ---------------------------------------------------------------------------
# Upfront (whole-grid) generation


@dataclass
class UpfrontGenState:
    """State for the fixed-budget, whole-grid generator variant."""

    family: Family
    size: int
    t_max: int
    grid: np.ndarray
    caps: dict[Cell, int]
    steps_taken: int = 0

    @property
    def interior_cells(self) -> int:
        return (self.size - 2) * (self.size - 2)


def init_upfront(family: Family, size: int, t_max: int | None = None) -> UpfrontGenState:
    t_max = t_max if t_max is not None else default_t_max(size, size)
    grid = np.full((size, size), Cell.UNGENERATED, dtype=np.int8)
    grid[0, :] = grid[-1, :] = Cell.WALL
    grid[:, 0] = grid[:, -1] = Cell.WALL
    return UpfrontGenState(family=family, size=size, t_max=t_max, grid=grid,
                           caps=placement_caps(family))


def upfront_legal_mask(state: UpfrontGenState) -> tuple[np.ndarray, np.ndarray]:
    """(interior-cell mask ((size-2)^2,), object mask (5,))."""
    interior = state.grid[1:-1, 1:-1].reshape(-1)
    a1 = interior == Cell.UNGENERATED
    objs = object_set(state.family)
    a2 = np.array([state.caps.get(o, 1) > 0 if o in state.caps else True for o in objs])
    return a1, a2


def apply_upfront_action(state: UpfrontGenState, action: TeacherAction) -> None:
    a1_mask, a2_mask = upfront_legal_mask(state)
    if not (0 <= action.cell < state.interior_cells) or not a1_mask[action.cell]:
        raise PolicyError(f"interior cell {action.cell} is not legal to author")
    if not (0 <= action.obj < N_OBJECTS) or not a2_mask[action.obj]:
        raise PolicyError(f"object index {action.obj} is masked")
    side = state.size - 2
    r = 1 + action.cell // side
    c = 1 + action.cell % side
    value = object_set(state.family)[action.obj]
    state.grid[r, c] = value
    if value in state.caps:
        state.caps[value] -= 1
    state.steps_taken += 1


def finalize_upfront(state: UpfrontGenState,
                     rng: np.random.Generator | int | None = None) -> Level:
    """Unauthored cells default to empty; the start pose is drawn uniformly
    over empty cells (the generator has no place-agent object)."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    grid = state.grid.copy()
    grid[grid == Cell.UNGENERATED] = Cell.EMPTY
    empties = np.argwhere(grid == Cell.EMPTY)
    if len(empties) == 0:
        # Filled every interior cell with non-empty content; carve the first
        # authored wall (deterministic) so the student can stand somewhere.
        walls = np.argwhere(grid[1:-1, 1:-1] == Cell.WALL)
        r, c = (walls[0] + 1) if len(walls) else (1, 1)
        grid[r, c] = Cell.EMPTY
        empties = np.array([[r, c]])
    r, c = empties[int(gen.integers(len(empties)))]
    start = AgentState(int(r), int(c), Direction(int(gen.integers(4))), False)
    return Level(width=state.size, height=state.size, family=state.family,
                 grid=grid, start=start, t_max=state.t_max)
