"""Bundled benchmark scenarios.

Desk-scale terrain and task files reconstructed from the benchmark
descriptions: flat-ground walking, a pallet with a 20 cm gap climbing
3 cm, a 10-degree slope pair separated by a 15 cm gap, a slope-gap-stair
combination, and a roof-like two-slope terrain for gait comparison. The
geometry is approximate (built from the published dimensions, not
surveyed data), and the robot file is a plausible quadruped of the right
mass rather than manufacturer data.
"""

from __future__ import annotations

import importlib.resources as resources
import json
from pathlib import Path

from .formulation import TaskSpec, load_task
from .robot import RobotModel, load_robot
from .terrain import TerrainScene, load_terrain

BUILTIN = {
    "flat-walk": ("terrain_flat.json", "hyq.json", "task_flat_walk.json"),
    "pallet-gap": ("terrain_pallet_gap.json", "hyq.json",
                   "task_pallet_gap.json"),
    "slopes-gap": ("terrain_slopes_gap.json", "hyq.json",
                   "task_slopes_gap.json"),
    "gap-stair": ("terrain_gap_stair.json", "hyq.json",
                  "task_gap_stair.json"),
    "roof": ("terrain_roof.json", "hyq.json", "task_roof.json"),
}


def scenario_names() -> list[str]:
    return sorted(BUILTIN)


def data_text(filename: str) -> str:
    return resources.files("micplan.data").joinpath(filename).read_text()


def scenario_files(name: str) -> tuple[str, str, str]:
    try:
        return BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; available: "
                       f"{', '.join(scenario_names())}") from None


def load_scenario(name: str, gait=None
                  ) -> tuple[TerrainScene, RobotModel, TaskSpec]:
    terrain_f, robot_f, task_f = scenario_files(name)
    scene = load_terrain(json.loads(data_text(terrain_f)))
    robot = load_robot(json.loads(data_text(robot_f)))
    task = load_task(json.loads(data_text(task_f)), robot=robot,
                     scene=scene)
    if gait is not None:
        task.gait = gait
    return scene, robot, task


def dump_scenario(name: str, directory) -> list[Path]:
    """Materialize a scenario's three input files into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for filename in scenario_files(name):
        path = directory / filename
        path.write_text(data_text(filename))
        out.append(path)
    return out
