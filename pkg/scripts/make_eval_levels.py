"""Author the shipped evaluation level sets.

Each level is written as interior rows only; this script adds the border,
header, and manifest, parses every file back, validates it, and checks
reachability for the two minigrid families before writing anything to the
package data directory. Rerunning is idempotent.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from uedlab.gridworld import Family
from uedlab.levelgen import parse_level, validate_level
from uedlab.solvability import bfs_solvable

OUT_ROOT = Path(__file__).resolve().parents[1] / "src" / "uedlab" / "eval_levels"


def build_text(family: str, interior: list[str], t_max: int | None = None) -> str:
    width = len(interior[0]) + 2
    height = len(interior) + 2
    for row in interior:
        assert len(row) == width - 2, f"ragged interior row {row!r}"
    t_max = t_max if t_max is not None else 2 * width * height
    border = "#" * width
    rows = [border] + ["#" + r + "#" for r in interior] + [border]
    return f"{width} {height} {family} {t_max}\n" + "\n".join(rows) + "\n"


MINIGRID13 = {
    "SixteenRooms": [
        ">..........",
        "..#..#..#..",
        "#.##.##.##.",
        "...........",
        "..#..#..#..",
        "#.##.##.##.",
        "...........",
        "..#..#..#..",
        "#.##.##.##.",
        "...........",
        "..#..#..#.G",
    ],
    "SixteenRooms2": [
        "..#..#..#..",
        "v..........",
        ".##.##.##.#",
        "..#..#..#..",
        "...........",
        ".##.##.##.#",
        "..#..#..#..",
        "...........",
        ".##.##.##.#",
        "..#..#..#..",
        "..........G",
    ],
    "Labyrinth": [
        ">..........",
        ".####.####.",
        ".#.......#.",
        ".#.#####.#.",
        ".#.#...#.#.",
        ".#.#.G.#.#.",
        ".#.#...#.#.",
        ".#.##.##.#.",
        ".#.......#.",
        ".#########.",
        "...........",
    ],
    "LabyrinthFlipped": [
        ">..........",
        ".#########.",
        ".#.......#.",
        ".#.##.##.#.",
        ".#.#...#.#.",
        ".#.#.G.#.#.",
        ".#.#...#.#.",
        ".#.#####.#.",
        ".#.......#.",
        ".####.####.",
        "...........",
    ],
    "Labyrinth2": [
        "v..........",
        ".#########.",
        ".#.......#.",
        ".#.#####.#.",
        ".#.#...#.#.",
        "...#.G...#.",
        ".#.#...#.#.",
        ".#.#####.#.",
        ".#.......#.",
        ".#########.",
        "...........",
    ],
    "StandardMaze": [
        ">..........",
        "##########.",
        "...........",
        ".##########",
        "...........",
        "##########.",
        "...........",
        ".##########",
        "...........",
        "##########.",
        "..........G",
    ],
    "StandardMaze2": [
        "v#...#...#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        "...#...#..G",
    ],
    "StandardMaze3": [
        ">..........",
        "####.#####.",
        "...........",
        ".#####.####",
        "...........",
        "##.#####.##",
        "...........",
        ".#########.",
        "...........",
        "#####.#####",
        "G..........",
    ],
}

KEY_MINIGRID13 = {
    "SixteenRooms_Key": [
        ">..........",
        "..#..#..#..",
        "#.##.##.##.",
        "...........",
        "..#..#..#..",
        "#.##.##.##.",
        "...........",
        "..#..#..#..",
        "#.##.##.###",
        "........D..",
        "K.#..#..#.G",
    ],
    "SixteenRooms2_Key": [
        "..#..#..#.K",
        "v..........",
        ".##.##.##.#",
        "..#..#..#..",
        "...........",
        ".##.##.##.#",
        "..#..#..#..",
        "...........",
        ".##.##.####",
        "..#..#..#..",
        "........D.G",
    ],
    "FourRooms_Key": [
        ".....#.....",
        ".>...#.....",
        "........K..",
        ".....#.....",
        ".....#.....",
        "##.########",
        ".....#.....",
        ".....#.....",
        ".....D..G..",
        ".....#.....",
        ".....#.....",
    ],
    "FourRooms2_Key": [
        ".....#.....",
        ".>...#.....",
        ".....D..G..",
        ".....#.....",
        ".....#.....",
        "##.########",
        ".....#.....",
        ".....#.....",
        "........K..",
        ".....#.....",
        ".....#.....",
    ],
    "FourRooms3_Key": [
        ".....#.....",
        ".>...#.....",
        "........K..",
        ".....#.....",
        ".....#.....",
        "##D#####.##",
        ".....#.....",
        ".....#.....",
        "..G..#.....",
        ".....#.....",
        ".....#.....",
    ],
    "StandardMaze_Key": [
        ">..........",
        "##########.",
        "...........",
        ".##########",
        "...........",
        "##########.",
        "...........",
        ".##########",
        "K..........",
        "##########D",
        "..........G",
    ],
    "StandardMaze2_Key": [
        "v#...#..K#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#.",
        ".#.#.#.#.#G",
        "...#...#.D.",
    ],
    "StandardMaze3_Key": [
        ">..........",
        "####.#####.",
        "...........",
        ".#####.####",
        "...........",
        "##.#####.##",
        "..........K",
        ".#########.",
        "...........",
        "#####D#####",
        "G..........",
    ],
}

SOKOBAN9 = {
    "Sokoban_Push": [
        ".......",
        ".......",
        ".......",
        ".>.B.S.",
        ".......",
        ".......",
        ".......",
    ],
    "Sokoban_TwoBoxes": [
        ".......",
        ".......",
        ".>B...S",
        ".......",
        "..B..S.",
        ".......",
        ".......",
    ],
    "Sokoban_Corner": [
        ".......",
        ".v.....",
        "..B....",
        ".......",
        "....S..",
        ".......",
        ".......",
    ],
    "Sokoban_Gap": [
        ".v.....",
        ".......",
        "...B...",
        "###.###",
        "...S...",
        ".......",
        ".......",
    ],
    "Sokoban_TwoRooms": [
        "...#...",
        ".v.#...",
        "..B#.S.",
        "...#...",
        "...#...",
        ".......",
        "...#...",
    ],
    "Sokoban_Corridor": [
        ".......",
        ".v.....",
        "...#...",
        ".B...S.",
        "...#...",
        ".......",
        ".......",
    ],
}

SMOKE_MINIGRID7 = {
    "Smoke_StepForward": [
        ">G...",
        ".....",
        ".....",
        ".....",
        ".....",
    ],
    "Smoke_TwoAhead": [
        ">.G..",
        ".....",
        ".....",
        ".....",
        ".....",
    ],
    "Smoke_Diagonal": [
        "v....",
        ".....",
        "..G..",
        ".....",
        ".....",
    ],
    "Smoke_FarCorner": [
        ">....",
        ".....",
        ".....",
        ".....",
        "....G",
    ],
    "Smoke_OneWall": [
        ".....",
        ".....",
        ">#G..",
        ".....",
        ".....",
    ],
}

SMOKE_KEY_MINIGRID7 = {
    "SmokeKey_Inline": [
        "..#..",
        "..#..",
        ">KD.G",
        "..#..",
        "..#..",
    ],
    "SmokeKey_Aside": [
        "..#..",
        "K.#..",
        ">.D.G",
        "..#..",
        "..#..",
    ],
    "SmokeKey_Behind": [
        "..#..",
        "..#..",
        ">.D.G",
        "..#..",
        "K.#..",
    ],
    "SmokeKey_Across": [
        "K.#..",
        "..#..",
        "..D.G",
        "..#..",
        "^.#..",
    ],
    "SmokeKey_Jog": [
        ".K#..",
        ".##..",
        "..D.G",
        "..#..",
        "^.#..",
    ],
}


SETS = {
    "minigrid13": ("minigrid", MINIGRID13),
    "key_minigrid13": ("key_minigrid", KEY_MINIGRID13),
    "sokoban9": ("sokoban", SOKOBAN9),
    "smoke_minigrid7": ("minigrid", SMOKE_MINIGRID7),
    "smoke_key_minigrid7": ("key_minigrid", SMOKE_KEY_MINIGRID7),
}


def main() -> int:
    for set_name, (family, levels) in SETS.items():
        out_dir = OUT_ROOT / set_name
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = []
        for name, interior in levels.items():
            text = build_text(family, interior)
            level = parse_level(text)
            validate_level(level)
            if level.family != Family.SOKOBAN:
                assert bfs_solvable(level), f"{set_name}/{name} is not solvable"
            path = out_dir / f"{name}.txt"
            path.write_text(text)
            manifest.append({"name": name, "path": f"{name}.txt"})
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n")
        print(f"{set_name}: {len(manifest)} levels")
    return 0


if __name__ == "__main__":
    sys.exit(main())
