"""
Planar three-link kinematic arm.

Joint settings are normalised to [0, 1] and mapped affinely to radians. The
first angle is absolute, the other two are relative, so the link headings are
cumulative sums. Every heading stays inside [0, pi] over the whole joint box,
which makes the tip x-coordinate monotone in each joint: the reach extremes
sit at the corners (0, 0, 0) and (1, 1, 1).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import DomainError

LINK_LENGTH = 0.477
BASE_X = 0.2
REACH_X = (-0.54, 0.89)
RELATIVE_BEND = 0.8  # radians available to joints 2 and 3

# joint 1 limits solved so the reach extremes equal REACH_X exactly
JOINT1_LOW = float(np.arccos((REACH_X[1] - BASE_X) / (3 * LINK_LENGTH)))
JOINT1_HIGH = float(np.arccos((REACH_X[0] - BASE_X) / (LINK_LENGTH * (1 + 2 * np.cos(RELATIVE_BEND))))
                    - RELATIVE_BEND)


@dataclass(frozen=True)
class ArmGeometry:
    link_lengths: Tuple[float, float, float] = (LINK_LENGTH, LINK_LENGTH, LINK_LENGTH)
    base: Tuple[float, float] = (BASE_X, 0.0)
    angle_low: Tuple[float, float, float] = (JOINT1_LOW, 0.0, 0.0)
    angle_high: Tuple[float, float, float] = (JOINT1_HIGH, RELATIVE_BEND, RELATIVE_BEND)

    def to_radians(self, joints) -> np.ndarray:
        joints = np.asarray(joints, dtype=float)
        low = np.asarray(self.angle_low)
        return low + joints * (np.asarray(self.angle_high) - low)

    def as_dict(self) -> dict:
        return {
            "link_lengths": list(self.link_lengths),
            "base": list(self.base),
            "angle_low": list(self.angle_low),
            "angle_high": list(self.angle_high),
        }


DEFAULT_GEOMETRY = ArmGeometry()


def arm_fk_angles(angles, link_lengths=DEFAULT_GEOMETRY.link_lengths,
                  base=(0.0, 0.0)) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward kinematics from joint angles in radians.

    Returns:
        (tip (2,), points (n_links + 1, 2)) where points[0] is the base
    """
    headings = np.cumsum(np.asarray(angles, dtype=float))
    lengths = np.asarray(link_lengths, dtype=float)
    steps = np.stack([lengths * np.cos(headings), lengths * np.sin(headings)], axis=1)
    points = np.vstack([np.asarray(base, dtype=float), np.asarray(base, dtype=float) + np.cumsum(steps, axis=0)])
    return points[-1].copy(), points


def arm_fk(joints, geom: ArmGeometry = DEFAULT_GEOMETRY) -> Tuple[np.ndarray, np.ndarray]:
    """Forward kinematics from normalised joints in [0, 1]^3"""
    joints = np.asarray(joints, dtype=float)
    if joints.shape != (3,):
        raise DomainError(f"arm takes 3 joints, got shape {joints.shape}")
    if not np.all(np.isfinite(joints)) or np.any(joints < 0.0) or np.any(joints > 1.0):
        raise DomainError(f"joint settings must lie in [0, 1], got {joints.tolist()}")
    return arm_fk_angles(geom.to_radians(joints), geom.link_lengths, geom.base)


def min_x(points: np.ndarray) -> float:
    """Leftmost x over the arm; segments are straight so the endpoints suffice"""
    return float(np.min(points[:, 0]))
