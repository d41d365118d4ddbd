"""
Index layout and planar kinematics of the spring-legged biped.

Generalized coordinates ``q`` (9): base x, base z, base pitch, then per leg (left, right) the
actuated hip, the actuated knee and the passive spring (ankle) joint. Angles are measured
counter-clockwise; a link at absolute angle ``phi`` points along ``(sin phi, -cos phi)``.
"""
import math
from typing import Tuple

import numpy as np

from . import exceptions

BASE_X, BASE_Z, BASE_PITCH = 0, 1, 2
N_BASE = 3

LINKS = ("pelvis", "thigh_l", "shin_l", "foot_l", "thigh_r", "shin_r", "foot_r")
JOINTS = ("hip_l", "knee_l", "ankle_l", "hip_r", "knee_r", "ankle_r")
N_LINKS = len(LINKS)
N_JOINTS = len(JOINTS)
N_Q = N_BASE + N_JOINTS
Q_NAMES = ("base_x", "base_z", "base_pitch") + JOINTS

# joint index (into JOINTS) of each actuated motor and each passive spring
ACTUATED = (0, 1, 3, 4)
SPRINGS = (2, 5)
N_ACTUATED = len(ACTUATED)
N_SPRINGS = len(SPRINGS)
ACTUATED_Q = tuple(N_BASE + j for j in ACTUATED)
SPRING_Q = tuple(N_BASE + j for j in SPRINGS)

# parent link of every link and the q index of the joint that drives it (None for the pelvis)
PARENT = (None, 0, 1, 2, 0, 4, 5)
LINK_JOINT_Q = (None, 3, 4, 5, 6, 7, 8)
FOOT_LINKS = (3, 6)
SEGMENTS = ("pelvis", "thigh", "shin", "foot")
LINK_SEGMENT = (0, 1, 2, 3, 1, 2, 3)


def chain(link: int) -> Tuple[int, ...]:
    """Links from the pelvis down to ``link`` inclusive."""
    path = []
    while link is not None:
        path.append(link)
        link = PARENT[link]
    return tuple(reversed(path))


CHAINS = tuple(chain(i) for i in range(N_LINKS))


def rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate a planar vector by +90 degrees."""
    return np.array([-v[1], v[0]])


def leg_ik(thigh: float, shin: float, dx: float, dz: float, margin: float = 1e-9) -> Tuple[float, float]:
    """
    Two-link inverse kinematics from hip to ankle, knee-backward branch.

    :param thigh: Thigh length (m).
    :param shin: Shin length (m), hip-to-ankle is thigh + shin when straight.
    :param dx: Ankle x minus hip x (m) in the pelvis frame.
    :param dz: Ankle z minus hip z (m) in the pelvis frame, negative below the hip.
    :return: (hip angle, knee angle) in rad.
    :raises exceptions.ReferenceMotionError: if the ankle is out of reach.
    """
    d = math.hypot(dx, dz)
    if d > thigh + shin + margin:
        raise exceptions.ReferenceMotionError(f"hip-to-ankle distance {d:.4f} m exceeds leg length {thigh + shin:.4f} m")
    if d < abs(thigh - shin) - margin:
        raise exceptions.ReferenceMotionError(f"hip-to-ankle distance {d:.4f} m is below the folded leg length "
                                              f"{abs(thigh - shin):.4f} m")
    cos_knee = (d * d - thigh * thigh - shin * shin) / (2.0 * thigh * shin)
    knee = math.acos(min(1.0, max(-1.0, cos_knee)))
    psi = math.atan2(dx, -dz)
    hip = psi - math.atan2(shin * math.sin(knee), thigh + shin * math.cos(knee))
    return hip, knee


def flat_foot_spring(hip: float, knee: float, pitch: float = 0.0) -> float:
    """Spring joint angle that keeps the foot plate level."""
    return -(pitch + hip + knee)
