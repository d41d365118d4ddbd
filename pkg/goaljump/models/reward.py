from typing import Dict

import numpy as np

from .. import exceptions
from .section import Section

COMPONENTS = (
    "motion_position",
    "pelvis_height",
    "foot_height",
    "pelvis_position",
    "pelvis_velocity",
    "orientation",
    "angular_rate",
    "ground_impact",
    "torque",
    "motor_velocity",
    "joint_acceleration",
    "change_of_action",
)
N_COMPONENTS = len(COMPONENTS)


class Phase:
    jump = "jump"
    stand = "stand"


class RewardWeightsAttributes:
    alpha = "alpha"
    weights = "weights"
    stage1 = "stage1"
    stage23 = "stage23"
    angular_rate_literal = "angular_rate_literal"


class RewardWeights:
    """
    Weight schedules and kernel scales of the reward.

    Weights are stored per (stage group, phase) in :data:`COMPONENTS` order. The jump phase is
    t <= T_J, the stand phase t > T_J.

    :ivar np.ndarray alpha: Kernel scale per component.
    :ivar Dict[str, Dict[str, np.ndarray]] schedules: ``schedules["stage23"]["jump"]`` etc.
    :ivar bool angular_rate_literal: Compare the orientation itself, not its rate, with the
        commanded turning rate.
    """

    def __init__(self, reward):
        a = RewardWeightsAttributes
        r = reward if isinstance(reward, Section) else Section(reward, "reward")
        alpha = r.sub(a.alpha)
        self.alpha = np.array([alpha.number(name, positive=True) for name in COMPONENTS])
        self.angular_rate_literal = r.flag(a.angular_rate_literal)

        weights = r.sub(a.weights)
        self.schedules: Dict[str, Dict[str, np.ndarray]] = {}
        for group in (a.stage1, a.stage23):
            g = weights.sub(group)
            self.schedules[group] = {}
            for phase in (Phase.jump, Phase.stand):
                p = g.sub(phase)
                w = np.array([p.number(name, nonneg=True) for name in COMPONENTS])
                if not np.any(w > 0):
                    raise exceptions.ConfigError(f"{p.path} needs at least one positive weight")
                self.schedules[group][phase] = w

    def select(self, stage: int, t: float, duration: float) -> np.ndarray:
        """The weight vector for a stage at reference time ``t``."""
        group = RewardWeightsAttributes.stage1 if stage == 1 else RewardWeightsAttributes.stage23
        phase = Phase.jump if t <= duration else Phase.stand
        return self.schedules[group][phase]

    def scaled(self, factor: float) -> "RewardWeights":
        """A copy with every schedule multiplied by ``factor``."""
        other = object.__new__(RewardWeights)
        other.alpha = self.alpha.copy()
        other.angular_rate_literal = self.angular_rate_literal
        other.schedules = {g: {p: w * factor for p, w in phases.items()} for g, phases in self.schedules.items()}
        return other
