import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .. import kinematics as kin
from .section import Section


class SegmentAttributes:
    mass = "mass_kg"
    inertia = "inertia_kg_m2"
    length = "length_m"
    com_offset = "com_offset_m"


class RobotModelAttributes:
    gravity = "gravity_m_per_s2"
    segments = "segments"
    foot_heel = "foot_heel_m"
    foot_toe = "foot_toe_m"
    standing_pelvis_height = "standing_pelvis_height_m"

    class Joints:
        section = "joints"
        damping = "damping_nms_per_rad"
        spring_stiffness = "spring_stiffness_nm_per_rad"
        spring_damping = "spring_damping_nms_per_rad"
        kp = "kp_nm_per_rad"
        kd = "kd_nms_per_rad"
        torque_limit = "torque_limit_nm"

    class Ground:
        section = "ground"
        friction = "friction"
        stiffness = "stiffness_n_per_m"
        damping = "damping_ns_per_m"
        tangential_damping = "tangential_damping_ns_per_m"
        max_penetration = "max_penetration_m"


class RobotModel:
    """
    Physical parameters of the planar spring-legged biped.

    Per-link arrays follow :data:`goaljump.kinematics.LINKS`, per-joint arrays follow
    :data:`goaljump.kinematics.JOINTS` and gains/limits follow the actuated joints.
    The foot "length" is the ankle height above the sole.

    :ivar np.ndarray link_masses: kg per link.
    :ivar np.ndarray link_inertias: kg m^2 per link.
    :ivar np.ndarray link_lengths: m per link.
    :ivar np.ndarray link_com_offsets: (7, 2) m, COM in the link frame.
    :ivar np.ndarray joint_damping: N m s/rad per joint.
    :ivar np.ndarray spring_stiffness: N m/rad per passive joint.
    :ivar np.ndarray spring_damping: N m s/rad per passive joint.
    :ivar np.ndarray spring_rest: rad per passive joint (foot level in the standing pose).
    :ivar np.ndarray kp: N m/rad per actuated joint.
    :ivar np.ndarray kd: N m s/rad per actuated joint.
    :ivar np.ndarray torque_limits: N m per actuated joint.
    :ivar float ground_friction: Coulomb coefficient.
    :ivar float ground_stiffness: N/m.
    :ivar float ground_damping: N s/m.
    :ivar float ground_tangential_damping: N s/m, regularizes Coulomb friction.
    :ivar float max_penetration: m, deeper points are treated as being inside a step wall.
    :ivar float gravity: m/s^2.
    """

    def __init__(self, robot):
        a = RobotModelAttributes
        r = robot if isinstance(robot, Section) else Section(robot, "robot")

        segments = r.sub(a.segments)
        per_segment = [segments.sub(name) for name in kin.SEGMENTS]
        s = SegmentAttributes
        self.link_masses = np.array([per_segment[i].number(s.mass, positive=True) for i in kin.LINK_SEGMENT])
        self.link_inertias = np.array([per_segment[i].number(s.inertia, positive=True) for i in kin.LINK_SEGMENT])
        self.link_lengths = np.array([per_segment[i].number(s.length, positive=True) for i in kin.LINK_SEGMENT])
        self.link_com_offsets = np.array([per_segment[i].vector(s.com_offset, 2) for i in kin.LINK_SEGMENT])

        j = r.sub(a.Joints.section)
        self.joint_damping = np.full(kin.N_JOINTS, j.number(a.Joints.damping, positive=True))
        self.spring_stiffness = np.full(kin.N_SPRINGS, j.number(a.Joints.spring_stiffness, positive=True))
        self.spring_damping = np.full(kin.N_SPRINGS, j.number(a.Joints.spring_damping, positive=True))
        self.kp = np.full(kin.N_ACTUATED, j.number(a.Joints.kp, positive=True))
        self.kd = np.full(kin.N_ACTUATED, j.number(a.Joints.kd, positive=True))
        self.torque_limits = np.full(kin.N_ACTUATED, j.number(a.Joints.torque_limit, positive=True))

        g = r.sub(a.Ground.section)
        self.ground_friction = g.number(a.Ground.friction, nonneg=True)
        self.ground_stiffness = g.number(a.Ground.stiffness, positive=True)
        self.ground_damping = g.number(a.Ground.damping, nonneg=True)
        self.ground_tangential_damping = g.number(a.Ground.tangential_damping, positive=True)
        self.max_penetration = g.number(a.Ground.max_penetration, positive=True)

        self.gravity = r.number(a.gravity, positive=True)
        self.foot_heel = r.number(a.foot_heel, positive=True)
        self.foot_toe = r.number(a.foot_toe, positive=True)
        self.standing_pelvis_height = r.number(a.standing_pelvis_height, positive=True)

        hip, knee = self.standing_leg()
        self.spring_rest = np.full(kin.N_SPRINGS, kin.flat_foot_spring(hip, knee))

    @property
    def thigh_length(self) -> float:
        return float(self.link_lengths[1])

    @property
    def shin_length(self) -> float:
        return float(self.link_lengths[2])

    @property
    def ankle_height(self) -> float:
        return float(self.link_lengths[3])

    @property
    def total_mass(self) -> float:
        return float(self.link_masses.sum())

    def standing_leg(self):
        """(hip, knee) of the standing pose, feet under the hips."""
        return kin.leg_ik(self.thigh_length, self.shin_length, 0.0, -(self.standing_pelvis_height - self.ankle_height))

    def standing_pose(self) -> np.ndarray:
        """Actuated joint targets of the standing pose, [hip_l, knee_l, hip_r, knee_r]."""
        hip, knee = self.standing_leg()
        return np.array([hip, knee, hip, knee])

    def copy(self) -> "RobotModel":
        return copy.deepcopy(self)


class SensorModelAttributes:
    class NoiseStd:
        section = "noise_std"
        motor_position = "motor_position_rad"
        motor_velocity = "motor_velocity_rad_per_s"
        gyro = "gyro_rad"
        linear_velocity = "linear_velocity_m_per_s"


class SensorModel:
    """
    Observation channel: per-channel bias (the sampled noise mean), Gaussian jitter and delay.

    :ivar np.ndarray motor_pos_noise_mean: rad per actuated joint.
    :ivar np.ndarray motor_vel_noise_mean: rad/s per actuated joint.
    :ivar float gyro_noise_mean: rad, added to the base pitch.
    :ivar np.ndarray linvel_error: m/s, (x, z).
    :ivar float delay: s.
    :ivar np.ndarray noise_std: std per observation channel.
    """

    def __init__(self, sensor):
        a = SensorModelAttributes.NoiseStd
        s = sensor if isinstance(sensor, Section) else Section(sensor, "sensor")
        n = s.sub(a.section)
        self.motor_pos_noise_mean = np.zeros(kin.N_ACTUATED)
        self.motor_vel_noise_mean = np.zeros(kin.N_ACTUATED)
        self.gyro_noise_mean = 0.0
        self.linvel_error = np.zeros(2)
        self.delay = 0.0
        self.motor_pos_std = n.number(a.motor_position, nonneg=True)
        self.motor_vel_std = n.number(a.motor_velocity, nonneg=True)
        self.gyro_std = n.number(a.gyro, nonneg=True)
        self.linvel_std = n.number(a.linear_velocity, nonneg=True)

    @property
    def bias(self) -> np.ndarray:
        """Bias per observation channel, in the observation layout."""
        return np.concatenate(([self.gyro_noise_mean], self.motor_pos_noise_mean, self.linvel_error,
                               self.motor_vel_noise_mean))

    @property
    def noise_std(self) -> np.ndarray:
        return np.concatenate(([self.gyro_std], np.full(kin.N_ACTUATED, self.motor_pos_std),
                               np.full(2, self.linvel_std), np.full(kin.N_ACTUATED, self.motor_vel_std)))

    def copy(self) -> "SensorModel":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class SimState:
    """
    Generalized state of the biped.

    ``foot_forces`` rows are (tangential, normal) per foot in the contact frame, summed over heel
    and toe; ``foot_vertical`` is the world vertical force per foot. Both are evaluated at the
    configuration the last step started from.
    """
    q: np.ndarray
    qd: np.ndarray
    qdd_last: np.ndarray = field(default_factory=lambda: np.zeros(kin.N_Q))
    foot_positions: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    foot_forces: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    foot_vertical: np.ndarray = field(default_factory=lambda: np.zeros(2))
    time: float = 0.0

    @property
    def motor_positions(self) -> np.ndarray:
        return self.q[list(kin.ACTUATED_Q)]

    @property
    def motor_velocities(self) -> np.ndarray:
        return self.qd[list(kin.ACTUATED_Q)]

    @property
    def in_contact(self) -> np.ndarray:
        return self.foot_forces[:, 1] > 0.0

    @property
    def vertical_force(self) -> float:
        """F_z, the summed vertical contact force."""
        return float(self.foot_vertical.sum())

    def with_velocity(self, qd: np.ndarray) -> "SimState":
        return replace(self, qd=np.asarray(qd, dtype=float))


class SimulationConfigAttributes:
    dt = "dt_s"
    substeps = "substeps"
    max_joint_speed = "max_joint_speed_rad_per_s"


class SimulationConfig:
    """
    Integration settings.

    :ivar float dt: Low-level step (s), 5e-4 for the 2 kHz PD loop.
    :ivar int substeps: Low-level steps per policy step.
    :ivar float max_joint_speed: Hard bound on any generalized velocity before the run is declared diverged.
    """

    def __init__(self, simulation):
        a = SimulationConfigAttributes
        s = simulation if isinstance(simulation, Section) else Section(simulation, "simulation")
        self.dt = s.number(a.dt, positive=True)
        self.substeps = s.integer(a.substeps, positive=True)
        self.max_joint_speed = s.number(a.max_joint_speed, positive=True)

    @property
    def policy_dt(self) -> float:
        return self.dt * self.substeps
