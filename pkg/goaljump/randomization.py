from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import kinematics as kin
from .models.randomization import DynamicsSample, PerturbationConfig, RandomizationRanges
from .models.robot import RobotModel, SensorModel


class RandomizedDynamics(NamedTuple):
    robot: RobotModel
    sensor: SensorModel
    sample: DynamicsSample


def _uniform(rng: np.random.Generator, pair, size=None):
    return rng.uniform(pair[0], pair[1], size)


def sample_dynamics(ranges: RandomizationRanges, base: RobotModel, sensor: SensorModel,
                    rng: np.random.Generator, stage: int = 3) -> RandomizedDynamics:
    """
    Draw the dynamics of one episode.

    Stages 1 and 2 return copies of the nominal robot and sensor without touching ``rng``.

    :param ranges: Table of (lo, hi) per parameter.
    :type ranges: :class:`RandomizationRanges <goaljump.models.randomization.RandomizationRanges>`
    :param base: Nominal robot.
    :type base: :class:`RobotModel <goaljump.models.robot.RobotModel>`
    :param sensor: Nominal sensor, supplying the jitter stds.
    :type sensor: :class:`SensorModel <goaljump.models.robot.SensorModel>`
    :param rng: Episode generator.
    :type rng: np.random.Generator
    :param stage: Training stage.
    :type stage: int
    :return: The sampled robot, sensor and the raw parameter record.
    :rtype: :class:`RandomizedDynamics`
    """
    if stage < 3:
        return RandomizedDynamics(base.copy(), sensor.copy(), DynamicsSample.nominal(base.joint_damping))

    sample = DynamicsSample(
        friction_ratio=float(_uniform(rng, ranges.friction_ratio)),
        joint_damping=_uniform(rng, ranges.joint_damping, kin.N_JOINTS),
        spring_stiffness_scale=_uniform(rng, ranges.spring_stiffness_scale, kin.N_SPRINGS),
        link_mass_scale=_uniform(rng, ranges.link_mass_scale, kin.N_LINKS),
        link_inertia_scale=_uniform(rng, ranges.link_inertia_scale, kin.N_LINKS),
        root_com_offset=_uniform(rng, ranges.root_com_offset, 2),
        link_com_offset=_uniform(rng, ranges.link_com_offset, (kin.N_LINKS - 1, 2)),
        pd_gain_scale=_uniform(rng, ranges.pd_gain_scale, kin.N_ACTUATED),
        motor_position_bias=_uniform(rng, ranges.motor_position_bias, kin.N_ACTUATED),
        motor_velocity_bias=_uniform(rng, ranges.motor_velocity_bias, kin.N_ACTUATED),
        gyro_bias=float(_uniform(rng, ranges.gyro_bias)),
        linear_velocity_error=_uniform(rng, ranges.linear_velocity_error, 2),
        delay=float(_uniform(rng, ranges.delay)),
    )
    robot, sensor = apply_sample(base, sensor, sample)
    return RandomizedDynamics(robot, sensor, sample)


def apply_sample(base: RobotModel, sensor: SensorModel, sample: DynamicsSample):
    """The robot and sensor described by ``sample``. Lengths and structure are never changed."""
    robot = base.copy()
    robot.ground_friction = base.ground_friction * sample.friction_ratio
    robot.joint_damping = np.array(sample.joint_damping, dtype=float)
    robot.spring_stiffness = base.spring_stiffness * sample.spring_stiffness_scale
    robot.link_masses = base.link_masses * sample.link_mass_scale
    robot.link_inertias = base.link_inertias * sample.link_inertia_scale
    robot.link_com_offsets = base.link_com_offsets + np.vstack([sample.root_com_offset, sample.link_com_offset])
    # one gain scale per motor, shared by Kp and Kd
    robot.kp = base.kp * sample.pd_gain_scale
    robot.kd = base.kd * sample.pd_gain_scale

    sensor = sensor.copy()
    sensor.motor_pos_noise_mean = np.array(sample.motor_position_bias, dtype=float)
    sensor.motor_vel_noise_mean = np.array(sample.motor_velocity_bias, dtype=float)
    sensor.gyro_noise_mean = float(sample.gyro_bias)
    sensor.linvel_error = np.array(sample.linear_velocity_error, dtype=float)
    sensor.delay = float(sample.delay)
    return robot, sensor


def offset_all_coms(base: RobotModel, offset: float) -> RobotModel:
    """A copy with every link COM moved by ``offset`` in x and z."""
    robot = base.copy()
    robot.link_com_offsets = base.link_com_offsets + offset
    return robot


@dataclass(frozen=True)
class WrenchPulse:
    """A base wrench (F_x, F_z, M) active on [start, start + duration)."""
    wrench: np.ndarray
    start: float
    duration: float

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration


def apply_perturbation(wrench, duration: float, start: float = 0.0) -> WrenchPulse:
    """
    Schedule an external wrench on the pelvis.

    :param wrench: (F_x, F_z, M) in N and N m.
    :param duration: s, ``inf`` for the whole episode.
    :param start: Simulation time the wrench starts (s).
    :return: :class:`WrenchPulse`
    """
    w = np.asarray(wrench, dtype=float)
    if w.shape != (kin.N_BASE,) or not np.all(np.isfinite(w)):
        raise ValueError(f"a wrench is three finite values (F_x, F_z, M), got {wrench!r}")
    return WrenchPulse(w, float(start), float(duration))


class PerturbationSchedule:
    """
    Random wrench pulses separated by quiet gaps, drawn lazily from the episode generator.

    Nothing is drawn when the configuration is disabled.
    """

    def __init__(self, config: PerturbationConfig, rng: np.random.Generator, start: float = 0.0):
        self.config = config
        self.rng = rng
        self.pulse: Optional[WrenchPulse] = None
        self.next_start = start + float(_uniform(rng, config.gap)) if config.enabled else None

    def sample_pulse(self, start: float) -> WrenchPulse:
        c = self.config
        wrench = np.array([self.rng.uniform(-c.force, c.force), self.rng.uniform(-c.force, c.force),
                           self.rng.uniform(-c.moment, c.moment)])
        return apply_perturbation(wrench, float(_uniform(self.rng, c.duration)), start)

    def wrench(self, t: float) -> Optional[np.ndarray]:
        """The wrench at simulation time ``t``; call with non-decreasing times."""
        if self.next_start is None:
            return None
        if self.pulse is not None and t >= self.pulse.start + self.pulse.duration:
            self.next_start = self.pulse.start + self.pulse.duration + float(_uniform(self.rng, self.config.gap))
            self.pulse = None
        if self.pulse is None and t >= self.next_start:
            self.pulse = self.sample_pulse(self.next_start)
        if self.pulse is not None and self.pulse.active(t):
            return self.pulse.wrench
        return None
