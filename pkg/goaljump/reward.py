"""
The imitation and task reward.

Each component is an exponential kernel ``exp(-alpha * |u - v|^2)`` and the reward is their
weighted mean, so it always lies in [0, 1].
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from . import exceptions
from .models.goal import Goal
from .models.reward import N_COMPONENTS, RewardWeights
from .reference import ReferenceMotion


def reward_kernel(u, v, alpha: float) -> float:
    """
    ``exp(-alpha * ||u - v||^2)``, in (0, 1].

    :param u: Measured value.
    :param v: Target value, the same shape as ``u``.
    :param alpha: Positive scale.
    :type alpha: float
    :rtype: float
    :raises exceptions.DimensionError: if the shapes differ.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if u.shape != v.shape:
        raise exceptions.DimensionError(f"cannot compare shapes {u.shape} and {v.shape}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    d = u - v
    return float(np.exp(-alpha * float(d @ d)))


@dataclass(frozen=True)
class RewardInputs:
    """
    Everything the reward looks at after one policy step, positions in the local goal frame.

    :ivar np.ndarray motor_positions: (4,) q_m (rad).
    :ivar float pelvis_height: q_z above the frame origin (m).
    :ivar np.ndarray foot_heights: (2,) e_z above the frame origin (m).
    :ivar np.ndarray pelvis_position: (2,) q_x, q_y (m).
    :ivar np.ndarray pelvis_velocity: (2,) qd_x, qd_y (m/s).
    :ivar np.ndarray orientation: (3,) roll, pitch, yaw (rad).
    :ivar np.ndarray angular_rate: (3,) their rates (rad/s).
    :ivar float vertical_force: F_z summed over both feet (N).
    :ivar np.ndarray torques: (4,) actuated torques (N m).
    :ivar np.ndarray motor_velocities: (4,) qd_m (rad/s).
    :ivar np.ndarray joint_acceleration: (9,) qdd over the policy step.
    :ivar np.ndarray action: (4,) a_t.
    :ivar np.ndarray prev_action: (4,) a_{t-1}.
    """
    motor_positions: np.ndarray
    pelvis_height: float
    foot_heights: np.ndarray
    pelvis_position: np.ndarray
    pelvis_velocity: np.ndarray
    orientation: np.ndarray
    angular_rate: np.ndarray
    vertical_force: float
    torques: np.ndarray
    motor_velocities: np.ndarray
    joint_acceleration: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray


def reference_index(ref: ReferenceMotion, t: float) -> int:
    return int(round(t / ref.dt))


def reward_terms(inputs: RewardInputs, ref: ReferenceMotion, goal: Goal, t: float, alpha: np.ndarray,
                 angular_rate_literal: bool = False) -> np.ndarray:
    """
    The twelve components, in :data:`goaljump.models.reward.COMPONENTS` order.

    :param t: Reference clock (s), 0 at the start of the current jump.
    :param alpha: Kernel scale per component.
    :param angular_rate_literal: Compare the orientation itself with the turning rate.
    :rtype: np.ndarray
    """
    k = reference_index(ref, t)
    jumping = t <= ref.duration
    shift = goal.c_z * ref.goal_ramp(t)
    target_xy = np.array([goal.c_x, goal.c_y])
    velocity_target = target_xy / ref.duration if jumping else np.zeros(2)
    turn_rate = goal.c_phi / ref.duration if jumping else 0.0
    rate_measured = inputs.orientation if angular_rate_literal else inputs.angular_rate

    pairs = (
        (inputs.motor_positions, ref.motors_at(k)),
        (inputs.pelvis_height, ref.pelvis_height_at(k) + shift),
        (inputs.foot_heights, ref.foot_height_at(k) + shift),
        (inputs.pelvis_position, target_xy),
        (inputs.pelvis_velocity, velocity_target),
        (inputs.orientation, np.array([0.0, 0.0, goal.c_phi])),
        (rate_measured, np.array([0.0, 0.0, turn_rate])),
        (inputs.vertical_force, 0.0),
        (inputs.torques, np.zeros_like(inputs.torques)),
        (inputs.motor_velocities, np.zeros_like(inputs.motor_velocities)),
        (inputs.joint_acceleration, np.zeros_like(inputs.joint_acceleration)),
        (inputs.action, inputs.prev_action),
    )
    return np.array([reward_kernel(u, v, a) for (u, v), a in zip(pairs, alpha)])


def combine(terms: np.ndarray, weights: np.ndarray) -> float:
    """The L1-normalized weighted sum of the components."""
    if terms.shape != (N_COMPONENTS,) or weights.shape != (N_COMPONENTS,):
        raise exceptions.DimensionError(f"expected {N_COMPONENTS} components, got {terms.shape} and {weights.shape}")
    # elementwise w * r <= w and a fixed summation order keep the ratio at or below 1
    return float(np.sum(weights * terms) / np.sum(weights))


def compute_reward(inputs: RewardInputs, ref: ReferenceMotion, goal: Goal, t: float, weights: RewardWeights,
                   stage: int) -> Tuple[float, np.ndarray]:
    """
    The reward of one policy step.

    :param inputs: Measured quantities after the step.
    :type inputs: :class:`RewardInputs`
    :param ref: The reference jump.
    :type ref: :class:`ReferenceMotion <goaljump.reference.ReferenceMotion>`
    :param goal: The current command.
    :type goal: :class:`Goal <goaljump.models.goal.Goal>`
    :param t: Reference clock (s).
    :type t: float
    :param weights: Schedules and kernel scales.
    :type weights: :class:`RewardWeights <goaljump.models.reward.RewardWeights>`
    :param stage: Training stage, selects the schedule together with ``t``.
    :type stage: int
    :return: (r_t, components)
    :rtype: Tuple[float, np.ndarray]
    """
    terms = reward_terms(inputs, ref, goal, t, weights.alpha, weights.angular_rate_literal)
    return combine(terms, weights.select(stage, t, ref.duration)), terms