"""Regenerate the shipped JSON run configs in configs/.

Every file is produced through RunConfig itself, so anything written here is
guaranteed to round-trip through `uedlab train --config`. Rerunning is
idempotent.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from uedlab.config import EnvSection, EvalSection, RunConfig, smoke_config

OUT = Path(__file__).resolve().parents[1] / "configs"


def dump(name: str, cfg: RunConfig) -> None:
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"{path.name}: method={cfg.method} family={cfg.env.family} "
          f"updates={cfg.student.num_updates}")


def main() -> int:
    OUT.mkdir(exist_ok=True)

    # Laptop-scale smoke runs: minutes on CPU, used by the acceptance suite.
    dump("smoke_dr_minigrid", smoke_config("DR", "minigrid"))
    dump("smoke_dr_key_minigrid", smoke_config("DR", "key_minigrid"))
    dump("smoke_degen_key_minigrid", smoke_config("DEGen", "key_minigrid"))
    dump("smoke_plr_minigrid", smoke_config("PLR", "minigrid"))
    dump("smoke_accel_minigrid", smoke_config("ACCEL", "minigrid"))
    dump("smoke_sfl_minigrid", smoke_config("SFL", "minigrid"))
    dump("smoke_initialgen_minigrid", smoke_config("InitialGen", "minigrid"))

    # Full-scale reference configs (days on CPU; the dataclass defaults).
    for method in ("DR", "PLR", "ACCEL", "SFL"):
        dump(f"full_{method.lower()}_minigrid", RunConfig(method=method))
    dump("full_degen_key_minigrid",
         RunConfig(method="DEGen", metric="MNA",
                   env=EnvSection(family="key_minigrid"),
                   eval=EvalSection(level_set="key_minigrid13")))
    return 0


if __name__ == "__main__":
    sys.exit(main())
