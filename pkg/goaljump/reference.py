"""
The procedural jump-in-place reference motion.

The pelvis crouches, extends to lift-off, follows a ballistic arc through the apex, lands and
settles back to the standing height by T_J. The feet stay on the ground except during flight,
where they follow a raised-cosine bump peaking at the pelvis apex. Joint targets come from
two-link inverse kinematics with the ankle straight below the hip.
"""
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import exceptions
from . import kinematics as kin
from .models.motion import ReferenceConfig
from .models.robot import RobotModel


class ReferenceColumns:
    time = "t_s"
    pelvis_height = "pelvis_height_m"
    foot_height = ("foot_height_l_m", "foot_height_r_m")
    motors = tuple(f"{kin.JOINTS[j]}_rad" for j in kin.ACTUATED)
    all = (time, pelvis_height) + foot_height + motors


@dataclass(frozen=True)
class ReferenceMotion:
    """
    A reference trajectory sampled at the policy rate.

    :ivar float duration: T_J (s).
    :ivar float dt: Sample spacing (s).
    :ivar np.ndarray pelvis_height: (n,) q_z^r (m).
    :ivar np.ndarray foot_height: (n, 2) e_z^r per foot (m).
    :ivar np.ndarray motor_positions: (n, 4) q_m^r (rad).
    :ivar np.ndarray standing_pose: (4,) q_m^r for every sample past the end.
    :ivar float standing_height: q_z^r for every sample past the end.
    :ivar float takeoff_time: When the feet leave the ground (s).
    :ivar float touchdown_time: When the feet return (s).
    """
    duration: float
    dt: float
    pelvis_height: np.ndarray
    foot_height: np.ndarray
    motor_positions: np.ndarray
    standing_pose: np.ndarray
    standing_height: float
    takeoff_time: float
    touchdown_time: float

    @property
    def n_samples(self) -> int:
        return len(self.pelvis_height)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def motors_at(self, k: int) -> np.ndarray:
        return self.motor_positions[k] if 0 <= k < self.n_samples else self.standing_pose

    def pelvis_height_at(self, k: int) -> float:
        return float(self.pelvis_height[k]) if 0 <= k < self.n_samples else self.standing_height

    def foot_height_at(self, k: int) -> np.ndarray:
        return self.foot_height[k] if 0 <= k < self.n_samples else np.zeros(2)

    def goal_ramp(self, t: float) -> float:
        """Fraction of the elevation change the reference has made by time ``t``."""
        span = self.touchdown_time - self.takeoff_time
        return float(np.clip((t - self.takeoff_time) / span, 0.0, 1.0))


def _quintic(t: float, t0: float, t1: float, start: Sequence[float], end: Sequence[float]) -> float:
    """Quintic through (position, velocity, acceleration) at both ends."""
    h = t1 - t0
    s = (t - t0) / h
    p0, v0, a0 = start[0], start[1] * h, start[2] * h * h
    p1, v1, a1 = end[0], end[1] * h, end[2] * h * h
    c3 = 10 * (p1 - p0) - 6 * v0 - 4 * v1 - 1.5 * a0 + 0.5 * a1
    c4 = -15 * (p1 - p0) + 8 * v0 + 7 * v1 + 1.5 * a0 - a1
    c5 = 6 * (p1 - p0) - 3 * v0 - 3 * v1 - 0.5 * a0 + 0.5 * a1
    return p0 + v0 * s + 0.5 * a0 * s ** 2 + c3 * s ** 3 + c4 * s ** 4 + c5 * s ** 5


def _cosine(t: float, t0: float, t1: float, p0: float, p1: float) -> float:
    s = min(1.0, max(0.0, (t - t0) / (t1 - t0)))
    return p0 + (p1 - p0) * 0.5 * (1.0 - math.cos(math.pi * s))


class _Profile:
    """Continuous pelvis and foot height profiles."""

    def __init__(self, config: ReferenceConfig, standing: float, gravity: float, dt: float):
        self.config = config
        self.standing = standing
        self.gravity = gravity
        self.crouch = standing - config.crouch_depth
        self.liftoff_height = standing + config.liftoff_extension
        if config.apex_pelvis_height <= self.liftoff_height:
            raise exceptions.ReferenceMotionError(
                f"apex pelvis height {config.apex_pelvis_height:.3f} m must exceed the lift-off height "
                f"{self.liftoff_height:.3f} m")
        self.liftoff_speed = math.sqrt(2.0 * gravity * (config.apex_pelvis_height - self.liftoff_height))
        rise = self.liftoff_speed / gravity

        self.crouch_end = config.crouch_duration
        # the apex lands on a sample so the sampled maximum is the configured apex
        self.apex_time = math.ceil((self.crouch_end + config.pushoff_duration + rise) / dt - 1e-9) * dt
        self.takeoff = self.apex_time - rise
        self.touchdown = self.apex_time + rise
        self.bottom_time = self.touchdown + 0.35 * (config.duration - self.touchdown)
        if self.touchdown >= config.duration:
            raise exceptions.ReferenceMotionError(
                f"the flight ends at {self.touchdown:.3f} s, after the reference duration {config.duration:.3f} s")

    def pelvis(self, t: float) -> float:
        c = self.config
        if t <= self.crouch_end:
            return _cosine(t, 0.0, self.crouch_end, self.standing, self.crouch)
        if t <= self.takeoff:
            return _quintic(t, self.crouch_end, self.takeoff, (self.crouch, 0.0, 0.0),
                            (self.liftoff_height, self.liftoff_speed, 0.0))
        if t <= self.touchdown:
            tau = t - self.takeoff
            return self.liftoff_height + self.liftoff_speed * tau - 0.5 * self.gravity * tau * tau
        bottom = self.standing - c.landing_absorption
        if t <= self.bottom_time:
            return _quintic(t, self.touchdown, self.bottom_time, (self.liftoff_height, -self.liftoff_speed, 0.0),
                            (bottom, 0.0, 0.0))
        return _cosine(t, self.bottom_time, c.duration, bottom, self.standing)

    def foot(self, t: float) -> float:
        if t <= self.takeoff or t >= self.touchdown:
            return 0.0
        s = (t - self.takeoff) / (self.touchdown - self.takeoff)
        return self.config.apex_foot_height * 0.5 * (1.0 - math.cos(2.0 * math.pi * s))


def build_jump_in_place(config: ReferenceConfig, model: RobotModel, dt: float) -> ReferenceMotion:
    """
    Build the jump-in-place reference.

    :param config: Shape of the jump.
    :type config: :class:`ReferenceConfig <goaljump.models.motion.ReferenceConfig>`
    :param model: The robot whose legs have to reach every pose.
    :type model: :class:`RobotModel <goaljump.models.robot.RobotModel>`
    :param dt: Policy step (s).
    :type dt: float
    :return: :class:`ReferenceMotion`
    :raises exceptions.ReferenceMotionError: if a pose is out of reach or samples jump by more than
        the configured rate bounds.
    """
    standing = model.standing_pelvis_height
    profile = _Profile(config, standing, model.gravity, dt)
    n = int(math.floor(config.duration / dt + 1e-9)) + 1
    times = np.arange(n) * dt

    pelvis = np.array([profile.pelvis(t) for t in times])
    foot = np.array([profile.foot(t) for t in times])
    motors = np.empty((n, kin.N_ACTUATED))
    for k in range(n):
        drop = pelvis[k] - foot[k] - model.ankle_height
        try:
            hip, knee = kin.leg_ik(model.thigh_length, model.shin_length, 0.0, -drop)
        except exceptions.ReferenceMotionError as e:
            raise exceptions.ReferenceMotionError(f"at t = {times[k]:.3f} s: {e.detail}")
        motors[k] = (hip, knee, hip, knee)

    ref = ReferenceMotion(duration=config.duration, dt=dt, pelvis_height=pelvis,
                          foot_height=np.repeat(foot[:, None], 2, axis=1), motor_positions=motors,
                          standing_pose=model.standing_pose(), standing_height=standing,
                          takeoff_time=profile.takeoff, touchdown_time=profile.touchdown)
    check_rates(ref, config.max_joint_step, config.max_height_step)
    return ref


def check_rates(ref: ReferenceMotion, max_joint_step: float, max_height_step: float):
    """
    Check that adjacent samples (including the step onto the standing pose) stay within the bounds.

    :raises exceptions.ReferenceMotionError: naming the first offending sample.
    """
    motors = np.vstack([ref.motor_positions, ref.standing_pose])
    heights = np.concatenate([ref.pelvis_height, [ref.standing_height]])
    feet = np.vstack([ref.foot_height, np.zeros(2)])
    for name, values, bound in (("joint target", motors, max_joint_step), ("pelvis height", heights, max_height_step),
                                ("foot height", feet, max_height_step)):
        steps = np.abs(np.diff(values, axis=0))
        if steps.ndim > 1:
            steps = steps.max(axis=1)
        if np.any(steps >= bound):
            k = int(np.argmax(steps >= bound))
            raise exceptions.ReferenceMotionError(
                f"{name} changes by {steps[k]:.4f} between samples {k} and {k + 1}, bound {bound}")


def sample_preview(ref: ReferenceMotion, k: int, steps: Sequence[int] = (1, 4, 7)) -> np.ndarray:
    """
    The reference preview at policy step ``k``: [q_z^r(k), q_m^r(k + s) for s in steps].

    Indices past the end clamp to the standing pose.
    """
    if k < 0:
        raise ValueError(f"preview index must be >= 0, got {k}")
    return np.concatenate([[ref.pelvis_height_at(k)]] + [ref.motors_at(k + s) for s in steps])


def to_csv(ref: ReferenceMotion, path: Union[str, Path]):
    """Write the sampled reference, one row per policy step."""
    with open(path, "w", encoding="UTF-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ReferenceColumns.all)
        for k in range(ref.n_samples):
            writer.writerow([repr(float(k * ref.dt)), repr(float(ref.pelvis_height[k]))]
                            + [repr(float(v)) for v in ref.foot_height[k]]
                            + [repr(float(v)) for v in ref.motor_positions[k]])


def from_csv(path: Union[str, Path], model: RobotModel, duration: float) -> ReferenceMotion:
    """
    Read a reference written by :func:`to_csv` or authored elsewhere with the same columns.

    Take-off and touchdown are where the higher foot first leaves and last returns to the ground.
    """
    with open(path, "r", encoding="UTF-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in ReferenceColumns.all if c not in (reader.fieldnames or ())]
        if missing:
            raise exceptions.ReferenceMotionError(f"{path} is missing columns {', '.join(missing)}")
        rows = [[float(row[c]) for c in ReferenceColumns.all] for row in reader]
    if len(rows) < 2:
        raise exceptions.ReferenceMotionError(f"{path} needs at least two samples")
    data = np.array(rows)
    dt = float(data[1, 0] - data[0, 0])
    feet = data[:, 2:4]
    airborne = np.flatnonzero(feet.max(axis=1) > 0.0)
    if len(airborne):
        takeoff, touchdown = (airborne[0] - 1) * dt, (airborne[-1] + 1) * dt
    else:
        takeoff, touchdown = duration, duration + dt
    return ReferenceMotion(duration=duration, dt=dt, pelvis_height=data[:, 1], foot_height=feet,
                           motor_positions=data[:, 4:], standing_pose=model.standing_pose(),
                           standing_height=model.standing_pelvis_height, takeoff_time=takeoff,
                           touchdown_time=touchdown)
