#!/usr/bin/env python3
"""
Task registry
Maps task names to their builders; each built Task carries its own default
exploration weight and warp prior
"""

from typing import Any, Dict, List, Optional

from errors import ConfigError
from tasks import Task, arm_breakage_task, arm_collision_task, arm_torque_task, fsre1_task, fsre2_task

TASK_PRESETS: List[Dict[str, Any]] = [
    {
        "name": "fsre1",
        "description": "F-SRE1: one policy dimension, rare band of theta in [-1, 0] carries a large bump",
        "build": lambda seed, mc_size: fsre1_task(),
    },
    {
        "name": "fsre2",
        "description": "F-SRE2: rare band |theta| < 0.2 flips the sign of a 200 cos(2 pi) term",
        "build": lambda seed, mc_size: fsre2_task(),
    },
    {
        "name": "arm_collision",
        "description": "Three-joint arm reaching a target past a randomly placed wall",
        "build": lambda seed, mc_size: arm_collision_task(),
    },
    {
        "name": "arm_breakage",
        "description": "Three-joint arm whose first joint breaks 5% of the time inside [0.3, 0.7]",
        "build": lambda seed, mc_size: arm_breakage_task(mc_count=mc_size, seed=seed),
    },
    {
        "name": "arm_torque",
        "description": "Three-joint arm with unknown joint rigidity inferred from baseline trials",
        "build": lambda seed, mc_size: arm_torque_task(seed=seed)[0],
    },
]


def get_all_task_names() -> List[str]:
    """Get all registered task names"""
    return [preset["name"] for preset in TASK_PRESETS]


def get_task_preset(name: str) -> Optional[Dict[str, Any]]:
    """Get a registered task preset by name (case-insensitive, '-' ignored)"""
    key = name.lower().replace("-", "")
    for preset in TASK_PRESETS:
        if preset["name"] == key:
            return preset
    return None


def build_task(name: str, seed: int = 0, mc_size: int = 200) -> Task:
    """
    Construct a task by name.

    Args:
        name: Registered task name
        seed: Seeds the breakage task's Monte Carlo support and the torque task's
            hidden rigidity, baseline trials and posterior chain
        mc_size: Monte Carlo support size for continuous environments
    """
    preset = get_task_preset(name)
    if preset is None:
        raise ConfigError(f"unknown task '{name}'; choose from {', '.join(get_all_task_names())}")
    return preset["build"](seed, mc_size)
