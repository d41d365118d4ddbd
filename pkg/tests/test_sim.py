import math

import numpy as np
import pytest

from goaljump import exceptions
from goaljump import kinematics as kin
from goaljump import sim
from goaljump.models.robot import SimState
from goaljump.terrain import Terrain


def lifted(state: SimState, height: float = 1.0) -> SimState:
    q = state.q.copy()
    q[kin.BASE_Z] += height
    return SimState(q=q, qd=state.qd.copy(), time=state.time)


def momentum_rate(model, q, qd, qdd) -> np.ndarray:
    k = sim.forward_kinematics(model, q)
    omega = sim.ANGULAR @ qd
    chain_bias = sim._chain_bias(k, omega)
    total = np.zeros(2)
    for i in range(kin.N_LINKS):
        j = sim.point_jacobian(k, i, k.coms[i])
        bias = chain_bias[i] - omega[i] ** 2 * (k.coms[i] - k.origins[i])
        total += model.link_masses[i] * (j @ qdd + bias)
    return total


def test_standing_state_rests_on_the_ground(robot, standing):
    k = sim.forward_kinematics(robot, standing.q)
    np.testing.assert_allclose(k.contacts[:, 1], 0.0, atol=1e-12)
    np.testing.assert_allclose(k.soles[:, 0], standing.q[kin.BASE_X], atol=1e-9)
    assert standing.q[kin.BASE_Z] == pytest.approx(robot.standing_pelvis_height, abs=1e-9)
    assert np.all(standing.qd == 0.0)
    assert np.all(k.strikes[:, 1] > 0.0)


def test_standing_state_on_a_raised_floor(robot):
    state = sim.standing_state(robot, terrain=Terrain.flat(0.25), x=0.4)
    k = sim.forward_kinematics(robot, state.q)
    np.testing.assert_allclose(k.contacts[:, 1], 0.25, atol=1e-12)
    assert state.q[kin.BASE_X] == 0.4


def test_free_fall_at_rest(robot, standing):
    state = lifted(standing)
    out = sim.step_dynamics(robot, state, np.zeros(kin.N_ACTUATED), 0.0005)
    assert not out.in_contact.any()
    assert out.vertical_force == 0.0
    rate = momentum_rate(robot, state.q, state.qd, out.qdd_last)
    np.testing.assert_allclose(rate, [0.0, -robot.total_mass * robot.gravity], atol=1e-8)
    np.testing.assert_allclose(out.qdd_last[kin.N_BASE:], 0.0, atol=1e-9)
    assert out.qd[kin.BASE_Z] == pytest.approx(-robot.gravity * 0.0005, abs=1e-9)


def test_rising_body_decelerates_at_g(robot, standing):
    qd = np.zeros(kin.N_Q)
    qd[kin.BASE_Z] = 0.7
    out = sim.step_dynamics(robot, lifted(standing).with_velocity(qd), np.zeros(kin.N_ACTUATED), 0.0005)
    assert not out.in_contact.any()
    assert out.qd[kin.BASE_Z] == pytest.approx(0.7 - robot.gravity * 0.0005, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_internal_torques_do_not_move_the_centre_of_mass(robot, standing, seed):
    rng = np.random.default_rng(seed)
    state = lifted(standing).with_velocity(rng.uniform(-2.0, 2.0, kin.N_Q))
    torques = rng.uniform(-100.0, 100.0, kin.N_ACTUATED)
    out = sim.step_dynamics(robot, state, torques, 0.0005)
    rate = momentum_rate(robot, state.q, state.qd, out.qdd_last)
    weight = robot.total_mass * robot.gravity
    np.testing.assert_allclose(rate, [0.0, -weight], atol=1e-7 * weight)


def test_point_jacobian_matches_finite_differences(robot, standing):
    rng = np.random.default_rng(3)
    q = standing.q + rng.uniform(-0.3, 0.3, kin.N_Q)
    k = sim.forward_kinematics(robot, q)
    h = 1e-6
    for c, link in enumerate(sim.CONTACT_LINK):
        j = sim.point_jacobian(k, link, k.contacts[c])
        numeric = np.empty((2, kin.N_Q))
        for n in range(kin.N_Q):
            dq = np.zeros(kin.N_Q)
            dq[n] = h
            plus = sim.forward_kinematics(robot, q + dq).contacts[c]
            minus = sim.forward_kinematics(robot, q - dq).contacts[c]
            numeric[:, n] = (plus - minus) / (2 * h)
        np.testing.assert_allclose(j, numeric, atol=1e-7)


def test_standing_supports_its_weight(robot):
    state = sim.standing_state(robot)
    pose = robot.standing_pose()
    dt = 0.0005
    forces = []
    for n in range(4000):
        tau = sim.pd_torque(robot, state.motor_positions, state.motor_velocities, pose)
        state = sim.step_dynamics(robot, state, tau, dt)
        if n >= 3000:
            forces.append(state.vertical_force)
    assert state.q[kin.BASE_Z] > 0.7
    assert np.mean(forces) == pytest.approx(robot.total_mass * robot.gravity, rel=0.02)


def check_friction_cone(robot, n, seed):
    rng = np.random.default_rng(seed)
    terrain = Terrain.flat().with_step(0.5, 0.1, 1)
    for _ in range(n):
        p = np.array([rng.uniform(-1.0, 2.0), rng.uniform(-0.1, 0.3)])
        v = rng.uniform(-5.0, 5.0, 2)
        world, tangential, normal = sim.point_contact(robot, terrain, p, v)
        assert normal >= 0.0
        assert abs(tangential) <= robot.ground_friction * normal + 1e-12
        if p[1] >= terrain.height(p[0]):
            assert normal == 0.0 and tangential == 0.0
            assert np.all(world == 0.0)


def test_contact_forces_stay_in_the_friction_cone(robot):
    check_friction_cone(robot, 20000, seed=11)


@pytest.mark.slow
def test_contact_forces_stay_in_the_friction_cone_at_scale(robot):
    check_friction_cone(robot, 1_000_000, seed=12)


def test_step_wall_pushes_back(robot):
    terrain = Terrain.flat().with_step(0.5, 0.3, 1)
    # buried 0.1 m deep, just past the face of the step
    world, _, normal = sim.point_contact(robot, terrain, np.array([0.52, 0.2]), np.zeros(2))
    assert normal > 0.0
    assert world[0] < 0.0


def test_pd_torque_is_clamped(robot):
    pose = robot.standing_pose()
    tau = sim.pd_torque(robot, pose, np.zeros(kin.N_ACTUATED), pose + np.array([10.0, -10.0, 0.0, 0.0]))
    np.testing.assert_allclose(tau, [robot.torque_limits[0], -robot.torque_limits[1], 0.0, 0.0])


def test_springs_rest_in_the_standing_pose(robot, standing):
    np.testing.assert_allclose(sim.spring_torque(robot, standing.q, standing.qd), 0.0, atol=1e-9)


def test_energy_is_nearly_conserved_in_undamped_flight(robot, standing):
    model = robot.copy()
    model.joint_damping[:] = 0.0
    model.spring_damping[:] = 0.0
    rng = np.random.default_rng(5)
    state = lifted(standing).with_velocity(rng.uniform(-0.5, 0.5, kin.N_Q))
    start = sim.mechanical_energy(model, state)
    for _ in range(200):
        state = sim.step_dynamics(model, state, np.zeros(kin.N_ACTUATED), 0.0005)
    assert sim.mechanical_energy(model, state) == pytest.approx(start, abs=0.2)


def test_energy_never_rises_in_a_damped_drop(robot, standing):
    state = lifted(standing, 0.03)
    energy = sim.mechanical_energy(robot, state)
    for _ in range(4000):
        state = sim.step_dynamics(robot, state, np.zeros(kin.N_ACTUATED), 0.0005)
        following = sim.mechanical_energy(robot, state)
        assert following - energy <= 1e-6 * abs(energy)
        energy = following


def test_invalid_steps(robot, standing):
    with pytest.raises(ValueError):
        sim.step_dynamics(robot, standing, np.zeros(kin.N_ACTUATED), 0.0)
    with pytest.raises(exceptions.NonFiniteError):
        sim.step_dynamics(robot, standing, np.array([0.0, math.nan, 0.0, 0.0]), 0.0005)
    with pytest.raises(exceptions.NonFiniteError):
        sim.step_dynamics(robot, standing.with_velocity(np.full(kin.N_Q, math.inf)), np.zeros(4), 0.0005)
    with pytest.raises(exceptions.SimulationDivergedError):
        sim.step_dynamics(robot, lifted(standing), np.zeros(kin.N_ACTUATED), 0.0005, max_speed=1e-6)


def test_time_advances(robot, standing):
    out = sim.step_dynamics(robot, standing, np.zeros(kin.N_ACTUATED), 0.0005)
    assert out.time == pytest.approx(0.0005)


def test_delay_buffer(standing):
    buffer = sim.DelayBuffer(0.0005, 0.0025, standing)
    assert len(buffer) == 1
    for n in range(1, 10):
        q = standing.q.copy()
        q[kin.BASE_PITCH] = n
        buffer.push(SimState(q=q, qd=standing.qd, time=n * 0.0005))
    assert len(buffer) == 6
    assert buffer.delayed(0.0)[0] == 9
    assert buffer.delayed(0.0015)[0] == 6
    assert buffer.delayed(1.0)[0] == 4
    assert buffer.latest_time() == pytest.approx(9 * 0.0005)


def test_observe_adds_bias(config, standing):
    sensor = config.sensor.copy()
    sensor.motor_pos_std = sensor.motor_vel_std = sensor.gyro_std = sensor.linvel_std = 0.0
    sensor.gyro_noise_mean = 0.01
    sensor.motor_pos_noise_mean = np.full(kin.N_ACTUATED, 0.002)
    buffer = sim.DelayBuffer(0.0005, 0.0, standing)
    obs = sim.observe(standing, sensor, buffer, np.random.default_rng(0))
    expected = sim.raw_observation(standing) + sensor.bias
    np.testing.assert_allclose(obs, expected)
    assert obs.shape == (sim.OBSERVATION_SIZE,)
    assert len(buffer) == 1


def test_penalty_contact_law(robot):
    model = robot.copy()
    model.ground_stiffness = 1e5
    _, tangential, normal = sim.point_contact(model, Terrain.flat(), np.array([0.0, -0.001]), np.zeros(2))
    assert normal == pytest.approx(100.0)
    assert tangential == 0.0
    world, _, normal = sim.point_contact(model, Terrain.flat(), np.array([0.0, 0.05]), np.array([1.0, -1.0]))
    assert normal == 0.0 and np.all(world == 0.0)


def test_friction_is_clamped_to_the_cone(robot):
    model = robot.copy()
    model.ground_friction = 0.8
    model.ground_tangential_damping = 500.0
    assert sim.friction_force(model, -1.0, 200.0) == pytest.approx(160.0)
    assert sim.friction_force(model, 1.0, 200.0) == pytest.approx(-160.0)
    assert sim.friction_force(model, 0.1, 200.0) == pytest.approx(-50.0)
