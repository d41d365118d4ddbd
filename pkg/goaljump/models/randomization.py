from dataclasses import dataclass, fields
from typing import Tuple

import numpy as np

from .. import kinematics as kin
from .section import Section


class RandomizationRangesAttributes:
    friction_ratio = "friction_ratio"
    joint_damping = "joint_damping_nms_per_rad"
    spring_stiffness_scale = "spring_stiffness_scale"
    link_mass_scale = "link_mass_scale"
    link_inertia_scale = "link_inertia_scale"
    root_com_offset = "root_com_offset_m"
    link_com_offset = "link_com_offset_m"
    pd_gain_scale = "pd_gain_scale"
    motor_position_bias = "motor_position_bias_rad"
    motor_velocity_bias = "motor_velocity_bias_rad_per_s"
    gyro_bias = "gyro_bias_rad"
    linear_velocity_error = "linear_velocity_error_m_per_s"
    delay = "delay_s"


class RandomizationRanges:
    """
    One (lo, hi) pair per randomized dynamics parameter. Every row is sampled uniformly.

    Scales multiply the nominal value, offsets are added to it and the remaining rows are
    absolute values.
    """

    def __init__(self, randomization):
        a = RandomizationRangesAttributes
        r = randomization if isinstance(randomization, Section) else Section(randomization, "randomization")
        self.friction_ratio = r.pair(a.friction_ratio, nonneg=True)
        self.joint_damping = r.pair(a.joint_damping, nonneg=True)
        self.spring_stiffness_scale = r.pair(a.spring_stiffness_scale, positive=True)
        self.link_mass_scale = r.pair(a.link_mass_scale, positive=True)
        self.link_inertia_scale = r.pair(a.link_inertia_scale, positive=True)
        self.root_com_offset = r.pair(a.root_com_offset)
        self.link_com_offset = r.pair(a.link_com_offset)
        self.pd_gain_scale = r.pair(a.pd_gain_scale, positive=True)
        self.motor_position_bias = r.pair(a.motor_position_bias)
        self.motor_velocity_bias = r.pair(a.motor_velocity_bias)
        self.gyro_bias = r.pair(a.gyro_bias)
        self.linear_velocity_error = r.pair(a.linear_velocity_error)
        self.delay = r.pair(a.delay, nonneg=True)

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-entry (lo, hi) of the flattened :class:`DynamicsSample` vector."""
        lo, hi = [], []
        for f in fields(DynamicsSample):
            pair = getattr(self, f.name)
            lo.extend([pair[0]] * DynamicsSample.SIZES[f.name])
            hi.extend([pair[1]] * DynamicsSample.SIZES[f.name])
        return np.array(lo), np.array(hi)


@dataclass(frozen=True)
class DynamicsSample:
    """
    The sampled dynamics of one episode, in the order of the privileged parameter vector.

    ``link_com_offset`` holds the (x, z) offsets of every link except the pelvis.
    """
    friction_ratio: float
    joint_damping: np.ndarray
    spring_stiffness_scale: np.ndarray
    link_mass_scale: np.ndarray
    link_inertia_scale: np.ndarray
    root_com_offset: np.ndarray
    link_com_offset: np.ndarray
    pd_gain_scale: np.ndarray
    motor_position_bias: np.ndarray
    motor_velocity_bias: np.ndarray
    gyro_bias: float
    linear_velocity_error: np.ndarray
    delay: float

    SIZES = {
        "friction_ratio": 1,
        "joint_damping": kin.N_JOINTS,
        "spring_stiffness_scale": kin.N_SPRINGS,
        "link_mass_scale": kin.N_LINKS,
        "link_inertia_scale": kin.N_LINKS,
        "root_com_offset": 2,
        "link_com_offset": 2 * (kin.N_LINKS - 1),
        "pd_gain_scale": kin.N_ACTUATED,
        "motor_position_bias": kin.N_ACTUATED,
        "motor_velocity_bias": kin.N_ACTUATED,
        "gyro_bias": 1,
        "linear_velocity_error": 2,
        "delay": 1,
    }
    SIZE = sum(SIZES.values())

    @classmethod
    def nominal(cls, joint_damping: np.ndarray) -> "DynamicsSample":
        return cls(
            friction_ratio=1.0,
            joint_damping=np.asarray(joint_damping, dtype=float).copy(),
            spring_stiffness_scale=np.ones(kin.N_SPRINGS),
            link_mass_scale=np.ones(kin.N_LINKS),
            link_inertia_scale=np.ones(kin.N_LINKS),
            root_com_offset=np.zeros(2),
            link_com_offset=np.zeros((kin.N_LINKS - 1, 2)),
            pd_gain_scale=np.ones(kin.N_ACTUATED),
            motor_position_bias=np.zeros(kin.N_ACTUATED),
            motor_velocity_bias=np.zeros(kin.N_ACTUATED),
            gyro_bias=0.0,
            linear_velocity_error=np.zeros(2),
            delay=0.0,
        )

    def vector(self) -> np.ndarray:
        """The raw parameter vector."""
        return np.concatenate([np.ravel(np.asarray(getattr(self, f.name), dtype=float)) for f in fields(self)])

    def normalized(self, ranges: RandomizationRanges) -> np.ndarray:
        """The parameter vector mapped to [-1, 1] per entry by its range (0 for a degenerate range)."""
        lo, hi = ranges.bounds()
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, 2.0 * (self.vector() - lo) / safe - 1.0, 0.0)


class PerturbationConfigAttributes:
    enabled = "enabled"
    force = "force_n"
    moment = "moment_nm"
    duration = "duration_s"
    gap = "gap_s"


class PerturbationConfig:
    """
    Random base wrenches applied during training.

    Each pulse draws (F_x, F_z) uniformly within +/- ``force`` and the pitch moment within
    +/- ``moment``, lasts ``duration`` and is followed by a quiet ``gap``.
    """

    def __init__(self, perturbation):
        a = PerturbationConfigAttributes
        p = perturbation if isinstance(perturbation, Section) else Section(perturbation, "perturbation")
        self.enabled = p.flag(a.enabled)
        self.force = p.number(a.force, nonneg=True)
        self.moment = p.number(a.moment, nonneg=True)
        self.duration = p.pair(a.duration, positive=True)
        self.gap = p.pair(a.gap, nonneg=True)
