"""
Planar rigid-body simulation of the spring-legged biped.

Equations of motion are assembled from per-link COM Jacobians, ``M(q) qdd = f(q, qd)``, and
integrated with semi-implicit Euler. Ground contact is a penalty spring-damper on the heel and
toe of each foot with regularized Coulomb friction.
"""
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import exceptions
from . import kinematics as kin
from .models.robot import RobotModel, SensorModel, SimState
from .terrain import Terrain

FLAT = Terrain.flat()

# heel and toe of the left foot, then the right foot
CONTACT_FOOT = (0, 0, 1, 1)
CONTACT_LINK = tuple(kin.FOOT_LINKS[f] for f in CONTACT_FOOT)

# constant angular Jacobian of every link
ANGULAR = np.zeros((kin.N_LINKS, kin.N_Q))
for _i, _chain in enumerate(kin.CHAINS):
    ANGULAR[_i, kin.BASE_PITCH] = 1.0
    for _k in _chain[1:]:
        ANGULAR[_i, kin.LINK_JOINT_Q[_k]] = 1.0

GRAVITY_DIRECTION = np.array([0.0, -1.0])
OBSERVATION_SIZE = 1 + kin.N_ACTUATED + 2 + kin.N_ACTUATED


def axis(phi: float) -> np.ndarray:
    """Unit vector along a link at absolute angle ``phi``, pointing from its joint to its far end."""
    return np.array([math.sin(phi), -math.cos(phi)])


@dataclass(frozen=True)
class Kinematics:
    """
    Forward kinematics of one configuration.

    :ivar np.ndarray angles: (7,) absolute link angles.
    :ivar np.ndarray origins: (7, 2) joint point of every link; the pelvis origin is the hip.
    :ivar np.ndarray coms: (7, 2) link centres of mass.
    :ivar np.ndarray soles: (2, 2) centre of each sole.
    :ivar np.ndarray contacts: (4, 2) heel and toe points.
    :ivar np.ndarray strikes: (6, 2) knees, ankles, hip and pelvis top; none may touch the ground.
    """
    angles: np.ndarray
    origins: np.ndarray
    coms: np.ndarray
    soles: np.ndarray
    contacts: np.ndarray
    strikes: np.ndarray


def forward_kinematics(model: RobotModel, q: np.ndarray) -> Kinematics:
    angles = np.empty(kin.N_LINKS)
    origins = np.empty((kin.N_LINKS, 2))
    for i in range(kin.N_LINKS):
        parent = kin.PARENT[i]
        if parent is None:
            angles[i] = q[kin.BASE_PITCH]
            origins[i] = q[kin.BASE_X], q[kin.BASE_Z]
            continue
        angles[i] = angles[parent] + q[kin.LINK_JOINT_Q[i]]
        origins[i] = origins[parent]
        if parent != 0:
            origins[i] = origins[parent] + model.link_lengths[parent] * axis(angles[parent])

    c, s = np.cos(angles), np.sin(angles)
    off = model.link_com_offsets
    coms = origins + np.stack([c * off[:, 0] - s * off[:, 1], s * off[:, 0] + c * off[:, 1]], axis=1)

    soles = np.empty((2, 2))
    contacts = np.empty((4, 2))
    for f, link in enumerate(kin.FOOT_LINKS):
        phi = angles[link]
        soles[f] = origins[link] + model.link_lengths[link] * axis(phi)
        tangent = np.array([math.cos(phi), math.sin(phi)])
        contacts[2 * f] = soles[f] - model.foot_heel * tangent
        contacts[2 * f + 1] = soles[f] + model.foot_toe * tangent

    pelvis_top = origins[0] - model.link_lengths[0] * axis(angles[0])
    strikes = np.stack([origins[2], origins[5], origins[3], origins[6], origins[0], pelvis_top])
    return Kinematics(angles, origins, coms, soles, contacts, strikes)


def point_jacobian(k: Kinematics, link: int, p: np.ndarray) -> np.ndarray:
    """(2, 9) Jacobian of a point rigidly attached to ``link``."""
    j = np.zeros((2, kin.N_Q))
    j[0, kin.BASE_X] = 1.0
    j[1, kin.BASE_Z] = 1.0
    j[:, kin.BASE_PITCH] = kin.perp(p - k.origins[0])
    for link_k in kin.CHAINS[link][1:]:
        j[:, kin.LINK_JOINT_Q[link_k]] = kin.perp(p - k.origins[link_k])
    return j


def _chain_bias(k: Kinematics, omega: np.ndarray) -> np.ndarray:
    """Centripetal acceleration of each link origin, -sum(omega^2 * segment) down the chain."""
    bias = np.zeros((kin.N_LINKS, 2))
    for i in range(kin.N_LINKS):
        parent = kin.PARENT[i]
        if parent is None:
            continue
        bias[i] = bias[parent] - omega[parent] ** 2 * (k.origins[i] - k.origins[parent])
    return bias


def point_contact(model: RobotModel, terrain: Terrain, p: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """
    Penalty contact force on one point.

    :param p: World position (m).
    :param v: World velocity (m/s).
    :return: (world force, tangential force, normal force); zero when the point is above ground.
    """
    ground = terrain.height(p[0])
    penetration = ground - p[1]
    if penetration <= 0.0:
        return np.zeros(2), 0.0, 0.0
    wall = terrain.wall(p[0], p[1]) if penetration > model.max_penetration else None
    if wall is None:
        normal = max(0.0, model.ground_stiffness * penetration - model.ground_damping * v[1])
        tangential = friction_force(model, v[0], normal)
        return np.array([tangential, normal]), tangential, normal
    edge, direction = wall
    depth = direction * (edge - p[0])
    normal = max(0.0, model.ground_stiffness * depth - model.ground_damping * direction * v[0])
    tangential = friction_force(model, v[1], normal)
    return np.array([direction * normal, tangential]), tangential, normal


def friction_force(model: RobotModel, slip_velocity: float, normal: float) -> float:
    """Viscous-regularized Coulomb friction, clamped to the friction cone."""
    limit = model.ground_friction * normal
    return float(np.clip(-model.ground_tangential_damping * slip_velocity, -limit, limit))


def contact_forces(model: RobotModel, state: SimState, terrain: Terrain = FLAT) -> np.ndarray:
    """(2, 2) per-foot (tangential, normal) force, summed over heel and toe."""
    k = forward_kinematics(model, state.q)
    forces = np.zeros((2, 2))
    for c, p in enumerate(k.contacts):
        v = point_jacobian(k, CONTACT_LINK[c], p) @ state.qd
        _, tangential, normal = point_contact(model, terrain, p, v)
        forces[CONTACT_FOOT[c]] += (tangential, normal)
    return forces


def pd_torque(model: RobotModel, q_m: np.ndarray, qd_m: np.ndarray, q_m_desired: np.ndarray) -> np.ndarray:
    """Joint-level PD law, clamped to the torque limits."""
    tau = model.kp * (np.asarray(q_m_desired) - q_m) - model.kd * qd_m
    return np.clip(tau, -model.torque_limits, model.torque_limits)


def spring_torque(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Passive spring joint torques, -k (delta - rest) - c delta_dot."""
    springs = list(kin.SPRING_Q)
    return -model.spring_stiffness * (q[springs] - model.spring_rest) - model.spring_damping * qd[springs]


def _check_finite(name: str, value: np.ndarray):
    if not np.all(np.isfinite(value)):
        raise exceptions.NonFiniteError(f"{name} = {np.asarray(value).tolist()}")


def step_dynamics(model: RobotModel, state: SimState, torques: np.ndarray, dt: float,
                  terrain: Terrain = FLAT, wrench: Optional[np.ndarray] = None,
                  max_speed: float = math.inf) -> SimState:
    """
    Advance one semi-implicit Euler step.

    :param model: The robot.
    :type model: :class:`RobotModel <goaljump.models.robot.RobotModel>`
    :param state: The current state.
    :type state: :class:`SimState <goaljump.models.robot.SimState>`
    :param torques: Actuated joint torques (N m), clamped to the limits.
    :type torques: np.ndarray
    :param dt: Step (s).
    :type dt: float
    :param terrain: Ground profile, flat by default.
    :type terrain: :class:`Terrain <goaljump.terrain.Terrain>`
    :param wrench: External (F_x, F_z, M) on the pelvis at the hip, optional.
    :type wrench: Optional[np.ndarray]
    :param max_speed: Hard bound on any generalized velocity.
    :type max_speed: float
    :return: The next state.
    :rtype: :class:`SimState <goaljump.models.robot.SimState>`
    :raises exceptions.NonFiniteError: on non-finite inputs.
    :raises exceptions.SimulationDivergedError: when a velocity exceeds ``max_speed``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_finite("q", state.q)
    _check_finite("qd", state.qd)
    _check_finite("torques", torques)
    q, qd = state.q, state.qd
    torques = np.clip(torques, -model.torque_limits, model.torque_limits)

    k = forward_kinematics(model, q)
    omega = ANGULAR @ qd
    chain_bias = _chain_bias(k, omega)

    mass = np.zeros((kin.N_Q, kin.N_Q))
    force = np.zeros(kin.N_Q)
    gravity = model.gravity * GRAVITY_DIRECTION
    for i in range(kin.N_LINKS):
        j = point_jacobian(k, i, k.coms[i])
        m = model.link_masses[i]
        bias = chain_bias[i] - omega[i] ** 2 * (k.coms[i] - k.origins[i])
        mass += m * j.T @ j
        force += j.T @ (m * (gravity - bias))
    mass += ANGULAR.T @ (model.link_inertias[:, None] * ANGULAR)

    force[list(kin.ACTUATED_Q)] += torques
    force[list(kin.SPRING_Q)] += spring_torque(model, q, qd)
    force[kin.N_BASE:] -= model.joint_damping * qd[kin.N_BASE:]
    if wrench is not None:
        _check_finite("wrench", wrench)
        force[:kin.N_BASE] += wrench

    foot_forces = np.zeros((2, 2))
    foot_vertical = np.zeros(2)
    for c, p in enumerate(k.contacts):
        j = point_jacobian(k, CONTACT_LINK[c], p)
        world, tangential, normal = point_contact(model, terrain, p, j @ qd)
        if normal > 0.0:
            force += j.T @ world
            foot_forces[CONTACT_FOOT[c]] += (tangential, normal)
            foot_vertical[CONTACT_FOOT[c]] += world[1]

    qdd = np.linalg.solve(mass, force)
    qd_next = qd + dt * qdd
    if not np.all(np.isfinite(qd_next)) or np.max(np.abs(qd_next)) > max_speed:
        raise exceptions.SimulationDivergedError(
            f"|qd| = {np.max(np.abs(qd_next)):.4g} exceeds {max_speed:.4g} at t = {state.time:.4f} s")
    q_next = q + dt * qd_next
    return SimState(q=q_next, qd=qd_next, qdd_last=qdd, foot_positions=k.soles, foot_forces=foot_forces,
                    foot_vertical=foot_vertical, time=state.time + dt)


def mechanical_energy(model: RobotModel, state: SimState, terrain: Terrain = FLAT) -> float:
    """Kinetic plus gravitational, spring and ground-penetration energy (J)."""
    k = forward_kinematics(model, state.q)
    omega = ANGULAR @ state.qd
    energy = 0.0
    for i in range(kin.N_LINKS):
        v = point_jacobian(k, i, k.coms[i]) @ state.qd
        energy += 0.5 * model.link_masses[i] * float(v @ v) + 0.5 * model.link_inertias[i] * omega[i] ** 2
        energy += model.link_masses[i] * model.gravity * k.coms[i][1]
    deflection = state.q[list(kin.SPRING_Q)] - model.spring_rest
    energy += 0.5 * float(np.sum(model.spring_stiffness * deflection ** 2))
    for p in k.contacts:
        penetration = terrain.height(p[0]) - p[1]
        if 0.0 < penetration <= model.max_penetration:
            energy += 0.5 * model.ground_stiffness * penetration ** 2
    return energy


def standing_state(model: RobotModel, pose: Optional[np.ndarray] = None, terrain: Terrain = FLAT,
                   x: float = 0.0) -> SimState:
    """
    The robot at rest with both feet flat on the ground under the hips.

    :param pose: Actuated joint angles [hip_l, knee_l, hip_r, knee_r], the standing pose by default.
    """
    pose = model.standing_pose() if pose is None else np.asarray(pose, dtype=float)
    q = np.zeros(kin.N_Q)
    q[kin.BASE_X] = x
    q[list(kin.ACTUATED_Q)] = pose
    for leg, spring in enumerate(kin.SPRING_Q):
        q[spring] = kin.flat_foot_spring(pose[2 * leg], pose[2 * leg + 1])
    lowest = forward_kinematics(model, q).contacts[:, 1].min()
    q[kin.BASE_Z] = terrain.height(x) - lowest
    k = forward_kinematics(model, q)
    return SimState(q=q, qd=np.zeros(kin.N_Q), foot_positions=k.soles)


def raw_observation(state: SimState) -> np.ndarray:
    """[base pitch, motor positions, base velocity (x, z), motor velocities] without noise or delay."""
    return np.concatenate(([state.q[kin.BASE_PITCH]], state.motor_positions,
                           state.qd[kin.BASE_X:kin.BASE_Z + 1], state.motor_velocities))


class DelayBuffer:
    """
    The most recent raw observations, one per low-level tick.

    :param dt: Low-level step (s).
    :param max_delay: Longest delay that will be requested (s).
    :param initial: The state the buffer is pre-filled with.
    """

    def __init__(self, dt: float, max_delay: float, initial: SimState):
        self.dt = dt
        self.entries = deque(maxlen=self.ticks(max_delay) + 1)
        self.times = deque(maxlen=self.entries.maxlen)
        self.push(initial)

    def ticks(self, delay: float) -> int:
        return int(math.floor(delay / self.dt + 1e-9))

    def push(self, state: SimState):
        self.entries.append(raw_observation(state))
        self.times.append(state.time)

    def latest_time(self) -> float:
        return self.times[-1]

    def delayed(self, delay: float) -> np.ndarray:
        """The raw observation ``floor(delay / dt)`` ticks ago, or the oldest one held."""
        ticks = min(self.ticks(delay), len(self.entries) - 1)
        return self.entries[-1 - ticks]

    def __len__(self):
        return len(self.entries)


def observe(state: SimState, sensor: SensorModel, delay_buffer: DelayBuffer, rng: np.random.Generator) -> np.ndarray:
    """
    The proprioceptive observation q^o: delayed raw channels plus bias and Gaussian jitter.

    ``state`` is pushed into the buffer first unless it already is the newest entry.
    """
    if delay_buffer.latest_time() != state.time:
        delay_buffer.push(state)
    raw = delay_buffer.delayed(sensor.delay)
    return raw + sensor.bias + rng.standard_normal(OBSERVATION_SIZE) * sensor.noise_std
