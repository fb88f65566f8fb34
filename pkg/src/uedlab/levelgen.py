"""Level construction: text format, validation, random generation, mutation.

Text format
-----------
Header line `W H family t_max`, then H rows of W characters:

    '#' wall   '.' empty   'G' goal   'K' key   'D' locked door
    'd' unlocked door   'B' box   'S' storage   '*' box-on-storage
    '?' ungenerated (partial grids only)

The agent's start pose is drawn on its cell as '^', '>', 'v' or '<' (the cell
beneath is empty). Serialization is canonical: LF endings, one trailing
newline, no trailing spaces; `serialize(parse(text))` is a fixpoint.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidLevel, ParseError
from .gridworld import (
    FAMILY_BY_NAME,
    FAMILY_NAMES,
    AgentState,
    Cell,
    Direction,
    Family,
    Level,
    default_t_max,
)

CELL_CHARS = {
    Cell.EMPTY: ".",
    Cell.WALL: "#",
    Cell.GOAL: "G",
    Cell.KEY: "K",
    Cell.DOOR_LOCKED: "D",
    Cell.DOOR_UNLOCKED: "d",
    Cell.BOX: "B",
    Cell.STORAGE: "S",
    Cell.BOX_ON_STORAGE: "*",
    Cell.UNGENERATED: "?",
}
CHAR_CELLS = {v: k for k, v in CELL_CHARS.items()}

AGENT_CHARS = {
    Direction.NORTH: "^",
    Direction.EAST: ">",
    Direction.SOUTH: "v",
    Direction.WEST: "<",
}
CHAR_DIRS = {v: k for k, v in AGENT_CHARS.items()}


def validate_level(level: Level, allow_ungenerated: bool = False) -> None:
    """Raise InvalidLevel on any structural violation."""
    h, w = level.height, level.width
    if level.grid.shape != (h, w):
        raise InvalidLevel(f"grid shape {level.grid.shape} != ({h}, {w})")
    if w < 3 or h < 3:
        raise InvalidLevel(f"level must be at least 3x3, got {w}x{h}")
    if level.t_max < 1:
        raise InvalidLevel(f"t_max must be >= 1, got {level.t_max}")
    border = np.concatenate([
        level.grid[0, :], level.grid[-1, :], level.grid[:, 0], level.grid[:, -1]
    ])
    if not (border == Cell.WALL).all():
        raise InvalidLevel("border cells must all be walls")
    counts = level.cell_counts()
    if counts[Cell.UNGENERATED] and not allow_ungenerated:
        raise InvalidLevel("finalized level contains ungenerated cells")
    fam = level.family
    if fam in (Family.MINIGRID, Family.KEY_MINIGRID):
        for kind in (Cell.BOX, Cell.STORAGE, Cell.BOX_ON_STORAGE):
            if counts[kind]:
                raise InvalidLevel(f"{kind.name} cell in a {FAMILY_NAMES[fam]} level")
        if counts[Cell.GOAL] > 1:
            raise InvalidLevel(f"{counts[Cell.GOAL]} goals; at most one allowed")
        if counts[Cell.KEY] > 1:
            raise InvalidLevel(f"{counts[Cell.KEY]} keys; at most one allowed")
        if counts[Cell.DOOR_LOCKED] + counts[Cell.DOOR_UNLOCKED] > 1:
            raise InvalidLevel("more than one door")
        if fam == Family.MINIGRID and (
            counts[Cell.KEY] or counts[Cell.DOOR_LOCKED] or counts[Cell.DOOR_UNLOCKED]
        ):
            raise InvalidLevel("key/door cells only exist in key_minigrid")
    else:
        for kind in (Cell.GOAL, Cell.KEY, Cell.DOOR_LOCKED, Cell.DOOR_UNLOCKED):
            if counts[kind]:
                raise InvalidLevel(f"{kind.name} cell in a sokoban level")
        if counts[Cell.BOX] != counts[Cell.STORAGE]:
            raise InvalidLevel(
                f"unmatched boxes/storages: {counts[Cell.BOX]} loose boxes, "
                f"{counts[Cell.STORAGE]} open storages"
            )
    if level.start is not None:
        r, c = level.start.row, level.start.col
        if not (0 <= r < h and 0 <= c < w):
            raise InvalidLevel(f"start pose ({r},{c}) out of bounds")
        if level.grid[r, c] != Cell.EMPTY:
            raise InvalidLevel(f"start cell ({r},{c}) is not empty")


def parse_level(text: str, allow_ungenerated: bool = False, validate: bool = True) -> Level:
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    while lines and lines[-1].strip() == "":
        lines.pop()
    if not lines:
        raise ParseError("empty level text")
    header = lines[0].split()
    if len(header) != 4:
        raise ParseError(f"line 1: header needs 'W H family t_max', got {lines[0]!r}")
    try:
        width, height = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(f"line 1: non-integer dimensions in {lines[0]!r}") from None
    if header[2] not in FAMILY_BY_NAME:
        raise ParseError(
            f"line 1: unknown family {header[2]!r} (expected one of "
            f"{sorted(FAMILY_BY_NAME)})"
        )
    family = FAMILY_BY_NAME[header[2]]
    try:
        t_max = int(header[3])
    except ValueError:
        raise ParseError(f"line 1: non-integer t_max in {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != height:
        raise ParseError(f"expected {height} grid rows, found {len(rows)}")
    grid = np.zeros((height, width), dtype=np.int8)
    start: AgentState | None = None
    for r, row in enumerate(rows):
        row = row.rstrip()
        if len(row) != width:
            raise ParseError(f"line {r + 2}: row has {len(row)} chars, expected {width}")
        for c, ch in enumerate(row):
            if ch in CHAR_DIRS:
                if start is not None:
                    raise ParseError(f"line {r + 2}, col {c + 1}: second agent marker")
                start = AgentState(r, c, CHAR_DIRS[ch], False)
                grid[r, c] = Cell.EMPTY
            elif ch in CHAR_CELLS:
                grid[r, c] = CHAR_CELLS[ch]
            else:
                raise ParseError(f"line {r + 2}, col {c + 1}: unknown character {ch!r}")
    level = Level(width=width, height=height, family=family, grid=grid,
                  start=start, t_max=t_max)
    if validate:
        validate_level(level, allow_ungenerated=allow_ungenerated)
    return level


def serialize_level(level: Level) -> str:
    """Canonical text for a level (LF endings, single trailing newline)."""
    out = [f"{level.width} {level.height} {FAMILY_NAMES[level.family]} {level.t_max}"]
    for r in range(level.height):
        chars = [CELL_CHARS[Cell(v)] for v in level.grid[r]]
        if level.start is not None and level.start.row == r:
            chars[level.start.col] = AGENT_CHARS[Direction(level.start.direction)]
        out.append("".join(chars))
    return "\n".join(out) + "\n"


def level_hash(level: Level) -> str:
    """Identity for dedup/replay: sha256 of the canonical serialization."""
    return hashlib.sha256(serialize_level(level).encode()).hexdigest()


DEFAULT_WALL_BUDGET_13 = 60  # max walls on a 13x13 grid; scaled by interior area


def scaled_wall_budget(size: int) -> int:
    interior = (size - 2) * (size - 2)
    return round(DEFAULT_WALL_BUDGET_13 * interior / 121)


@dataclass
class GenConfig:
    """Random level generator parameters for one family."""

    family: Family
    size: int = 13
    t_max: int | None = None
    wall_count: tuple[int, int] | None = None  # inclusive range; None -> family default
    box_count: tuple[int, int] = (1, 10)       # sokoban pairs, inclusive
    include_key_door: bool = True              # key_minigrid only
    sokoban_walls: int = 15

    resolved_walls: tuple[int, int] = field(init=False)

    def __post_init__(self):
        if self.size < 4:
            raise ConfigError(f"size must be >= 4, got {self.size}")
        interior = (self.size - 2) ** 2
        if self.wall_count is None:
            if self.family == Family.SOKOBAN:
                walls = (self.sokoban_walls, self.sokoban_walls)
            else:
                walls = (0, scaled_wall_budget(self.size))
        else:
            walls = (int(self.wall_count[0]), int(self.wall_count[1]))
        if not (0 <= walls[0] <= walls[1]):
            raise ConfigError(f"bad wall range {walls}")
        self.resolved_walls = walls
        if self.family == Family.SOKOBAN:
            lo, hi = self.box_count
            if not (1 <= lo <= hi):
                raise ConfigError(f"bad box range {self.box_count}")
            need = walls[1] + 2 * hi + 1
        else:
            entities = 1 + (2 if self.family == Family.KEY_MINIGRID and self.include_key_door else 0)
            need = walls[1] + entities + 1
        if need > interior:
            raise ConfigError(
                f"cannot fit up to {need} occupied cells in a {self.size}x{self.size} "
                f"interior of {interior}"
            )

    @property
    def effective_t_max(self) -> int:
        return self.t_max if self.t_max is not None else default_t_max(self.size, self.size)


def _as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def random_level(cfg: GenConfig, rng: np.random.Generator | int | None = None) -> Level:
    """Draw a level: walls, then entities, then the start pose, all on distinct
    interior cells. Deterministic in the generator state."""
    gen = _as_rng(rng)
    size = cfg.size
    grid = np.full((size, size), Cell.WALL, dtype=np.int8)
    grid[1:-1, 1:-1] = Cell.EMPTY
    interior = [(r, c) for r in range(1, size - 1) for c in range(1, size - 1)]

    n_walls = int(gen.integers(cfg.resolved_walls[0], cfg.resolved_walls[1] + 1))
    if cfg.family == Family.SOKOBAN:
        n_pairs = int(gen.integers(cfg.box_count[0], cfg.box_count[1] + 1))
        n_cells = n_walls + 2 * n_pairs + 1
    else:
        has_kd = cfg.family == Family.KEY_MINIGRID and cfg.include_key_door
        n_cells = n_walls + 1 + (2 if has_kd else 0) + 1

    picks = gen.choice(len(interior), size=n_cells, replace=False)
    cells = [interior[i] for i in picks]
    i = 0
    for _ in range(n_walls):
        grid[cells[i]] = Cell.WALL
        i += 1
    if cfg.family == Family.SOKOBAN:
        for _ in range(n_pairs):
            grid[cells[i]] = Cell.BOX
            grid[cells[i + 1]] = Cell.STORAGE
            i += 2
    else:
        grid[cells[i]] = Cell.GOAL
        i += 1
        if has_kd:
            grid[cells[i]] = Cell.KEY
            grid[cells[i + 1]] = Cell.DOOR_LOCKED
            i += 2
    sr, sc = cells[i]
    start = AgentState(sr, sc, Direction(int(gen.integers(4))), False)
    level = Level(width=size, height=size, family=cfg.family, grid=grid,
                  start=start, t_max=cfg.effective_t_max)
    validate_level(level)
    return level


_SOKOBAN_PAIR_CAP = (1, 10)
_MUTATE_RETRIES = 64


def _empty_cells(grid: np.ndarray, exclude: tuple[int, int] | None = None) -> list[tuple[int, int]]:
    cells = [tuple(x) for x in np.argwhere(grid == Cell.EMPTY)]
    if exclude is not None:
        cells = [c for c in cells if c != exclude]
    return cells


def mutate(level: Level, n_edits: int, rng: np.random.Generator | int | None = None) -> Level:
    """Apply n_edits atomic edits: wall toggles, entity moves, and (sokoban)
    box/storage pair additions or removals. n_edits=0 returns an equal level."""
    gen = _as_rng(rng)
    grid = level.grid.copy()
    start = level.start
    fam = level.family

    def entity_positions(kind: Cell) -> list[tuple[int, int]]:
        return [tuple(x) for x in np.argwhere(grid == kind)]

    for _ in range(n_edits):
        for _attempt in range(_MUTATE_RETRIES):
            ops = ["toggle"]
            if fam in (Family.MINIGRID, Family.KEY_MINIGRID):
                if entity_positions(Cell.GOAL):
                    ops.append("move_goal")
                if entity_positions(Cell.KEY):
                    ops.append("move_key")
                if entity_positions(Cell.DOOR_LOCKED) or entity_positions(Cell.DOOR_UNLOCKED):
                    ops.append("move_door")
            else:
                n_pairs = int((grid == Cell.BOX).sum() + (grid == Cell.BOX_ON_STORAGE).sum())
                if n_pairs < _SOKOBAN_PAIR_CAP[1]:
                    ops.append("add_pair")
                if n_pairs > _SOKOBAN_PAIR_CAP[0]:
                    ops.append("remove_pair")
            if start is not None:
                ops.append("move_start")
            op = ops[int(gen.integers(len(ops)))]

            if op == "toggle":
                r = int(gen.integers(1, level.height - 1))
                c = int(gen.integers(1, level.width - 1))
                if start is not None and (r, c) == (start.row, start.col):
                    continue
                if grid[r, c] == Cell.WALL:
                    grid[r, c] = Cell.EMPTY
                    break
                if grid[r, c] == Cell.EMPTY:
                    grid[r, c] = Cell.WALL
                    break
                continue
            if op in ("move_goal", "move_key", "move_door"):
                kind = {"move_goal": Cell.GOAL, "move_key": Cell.KEY, "move_door": None}[op]
                if op == "move_door":
                    locked = entity_positions(Cell.DOOR_LOCKED)
                    src = locked[0] if locked else entity_positions(Cell.DOOR_UNLOCKED)[0]
                    kind = Cell(grid[src])
                else:
                    src = entity_positions(kind)[0]
                targets = _empty_cells(grid, exclude=(start.row, start.col) if start else None)
                if not targets:
                    continue
                dst = targets[int(gen.integers(len(targets)))]
                grid[src] = Cell.EMPTY
                grid[dst] = kind
                break
            if op == "move_start":
                targets = _empty_cells(grid, exclude=(start.row, start.col))
                if not targets:
                    continue
                r, c = targets[int(gen.integers(len(targets)))]
                start = AgentState(r, c, start.direction, False)
                break
            if op == "add_pair":
                targets = _empty_cells(grid, exclude=(start.row, start.col) if start else None)
                if len(targets) < 2:
                    continue
                picks = gen.choice(len(targets), size=2, replace=False)
                grid[targets[picks[0]]] = Cell.BOX
                grid[targets[picks[1]]] = Cell.STORAGE
                break
            if op == "remove_pair":
                boxes = entity_positions(Cell.BOX)
                storages = entity_positions(Cell.STORAGE)
                if boxes and storages:
                    grid[boxes[int(gen.integers(len(boxes)))]] = Cell.EMPTY
                    grid[storages[int(gen.integers(len(storages)))]] = Cell.EMPTY
                    break
                stored = entity_positions(Cell.BOX_ON_STORAGE)
                if stored:
                    grid[stored[int(gen.integers(len(stored)))]] = Cell.EMPTY
                    break
                continue
    out = Level(width=level.width, height=level.height, family=fam, grid=grid,
                start=start, t_max=level.t_max)
    validate_level(out)
    return out
