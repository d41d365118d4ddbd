import math
from dataclasses import dataclass

import numpy as np

from .section import Section


class GoalMode:
    """Goal sampling modes."""
    flat = "flat"
    terrain = "terrain"
    all = (flat, terrain)


class GoalAttributes:
    c_x = "c_x_m"
    c_y = "c_y_m"
    c_z = "c_z_m"
    c_phi = "c_phi_rad"
    columns = (c_x, c_y, c_z, c_phi)


@dataclass(frozen=True)
class Goal:
    """
    A jump command in the local frame of the robot's starting pose.

    :ivar float c_x: Landing displacement (m).
    :ivar float c_y: Lateral displacement (m), 0 in the planar build.
    :ivar float c_z: Elevation change (m).
    :ivar float c_phi: Turning angle (rad), 0 in the planar build.
    """
    c_x: float = 0.0
    c_y: float = 0.0
    c_z: float = 0.0
    c_phi: float = 0.0

    @classmethod
    def from_row(cls, row) -> "Goal":
        a = GoalAttributes
        r = row if isinstance(row, Section) else Section(dict(row), "goal")
        return cls(*(r.number(key) for key in a.columns))

    def to_array(self) -> np.ndarray:
        return np.array([self.c_x, self.c_y, self.c_z, self.c_phi])

    def to_row(self) -> dict:
        return dict(zip(GoalAttributes.columns, (self.c_x, self.c_y, self.c_z, self.c_phi)))

    def pinned(self, mode: str, planar: bool = True) -> "Goal":
        """Zero the components the mode does not command."""
        c_y, c_z, c_phi = self.c_y, self.c_z, self.c_phi
        if mode == GoalMode.flat:
            c_z = 0.0
        if mode == GoalMode.terrain:
            c_phi = 0.0
        if planar:
            c_y = c_phi = 0.0
        return Goal(self.c_x, c_y, c_z, c_phi)


class GoalRangesAttributes:
    c_x = "c_x_m"
    c_y = "c_y_m"
    c_z = "c_z_m"
    c_phi = "c_phi_deg"
    min_step_run = "min_step_run_m"


class GoalRanges:
    """
    Uniform sampling ranges for Stage 2/3 goals.

    :ivar tuple c_x: (lo, hi) m.
    :ivar tuple c_y: (lo, hi) m.
    :ivar tuple c_z: (lo, hi) m.
    :ivar tuple c_phi: (lo, hi) rad.
    :ivar float min_step_run: In terrain mode, jumps shorter than this get no elevation change,
        otherwise the step edge would sit under the feet.
    """

    def __init__(self, goals):
        a = GoalRangesAttributes
        g = goals if isinstance(goals, Section) else Section(goals, "env.goals")
        self.c_x = g.pair(a.c_x)
        self.c_y = g.pair(a.c_y)
        self.c_z = g.pair(a.c_z)
        lo, hi = g.pair(a.c_phi)
        self.c_phi = (math.radians(lo), math.radians(hi))
        self.min_step_run = g.number(a.min_step_run, nonneg=True)
