"""
The goal-conditioned jumping task as an episodic environment.

The policy runs at the policy rate (``simulation.substeps`` low-level steps) and outputs desired
motor positions, which pass through a first-order low-pass filter and a joint PD loop running at
the simulation rate. Stage 1 jumps in place once at t = 0. Stages 2 and 3 alternate random
standing intervals with jumps to freshly sampled goals, re-anchoring the local goal frame at the
start of every jump.
"""
import copy
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from . import exceptions
from . import kinematics as kin
from . import sim
from .config import Config
from .files import TraceColumns
from .incidents import IncidentLog
from .models.episode import EpisodeConfig
from .models.goal import Goal, GoalAttributes, GoalMode
from .models.randomization import DynamicsSample
from .models.reward import N_COMPONENTS
from .models.robot import RobotModel, SimState
from .randomization import PerturbationSchedule, WrenchPulse, sample_dynamics
from .reference import ReferenceMotion, build_jump_in_place, sample_preview
from .reward import RewardInputs, compute_reward
from .terrain import Terrain

ACTION_SIZE = kin.N_ACTUATED
ENTRY_SIZE = sim.OBSERVATION_SIZE + ACTION_SIZE
GOAL_SIZE = 4
CLOCK_SIZE = 2


class Termination:
    """Why an episode ended. ``none`` while it is running."""
    none = "continue"
    fall = "fall"
    foot_bound = "foot_bound"
    task_bound = "task_bound"
    timeout = "timeout"
    diverged = "diverged"
    reasons = (fall, foot_bound, task_bound, timeout)
    # episodes cut short for reasons other than the task; their last value is bootstrapped
    truncations = (timeout, diverged)


class ObservationDims(NamedTuple):
    goal: int
    preview: int
    entry: int
    short: int
    long: int
    privileged: int
    critic: int


def observation_dims(config: Config) -> ObservationDims:
    """Sizes of every observation block for a configuration."""
    env = config.env
    preview = 1 + kin.N_ACTUATED * len(env.preview_steps)
    critic = kin.N_Q + kin.N_Q + GOAL_SIZE + preview + CLOCK_SIZE + DynamicsSample.SIZE
    return ObservationDims(GOAL_SIZE, preview, ENTRY_SIZE, env.short_history, env.long_history,
                           DynamicsSample.SIZE, critic)


@dataclass(frozen=True)
class Observation:
    """
    What the networks see at one policy step.

    :ivar np.ndarray goal: (4,) the command.
    :ivar np.ndarray preview: Reference preview, q_z^r then future q_m^r samples.
    :ivar np.ndarray short_history: (short, 15) newest last; each entry is (q^o, a).
    :ivar np.ndarray long_history: (long, 15) newest last.
    :ivar np.ndarray privileged: The episode's dynamics parameters, normalized to [-1, 1].
    :ivar np.ndarray critic: Ground-truth state, goal, preview, clock and privileged parameters.
    """
    goal: np.ndarray
    preview: np.ndarray
    short_history: np.ndarray
    long_history: np.ndarray
    privileged: np.ndarray
    critic: np.ndarray

    @property
    def current(self) -> np.ndarray:
        """The newest (q^o, a) entry."""
        return self.short_history[-1]


class IoHistory:
    """
    A fixed-length window of (observation, action) pairs, pre-filled with padding.
    """

    def __init__(self, length: int, observation: np.ndarray):
        self.length = length
        pad = np.concatenate([observation, np.zeros(ACTION_SIZE)])
        self.entries = deque([pad] * length, maxlen=length)
        self.real = 0

    def push(self, observation: np.ndarray, action: np.ndarray):
        self.entries.append(np.concatenate([observation, action]))
        self.real = min(self.real + 1, self.length)

    def array(self) -> np.ndarray:
        return np.array(self.entries)


@dataclass(frozen=True)
class Measurement:
    """
    Task-relevant quantities of a state, in the local goal frame.

    :ivar np.ndarray position: (x, z) of the base relative to the frame origin (m).
    :ivar float height: Base height above the terrain directly under it (m).
    :ivar np.ndarray foot_heights: (2,) sole heights relative to the frame origin (m).
    :ivar float pitch: Base pitch (rad).
    :ivar bool strike: A knee, ankle, hip or the pelvis top is below the terrain.
    """
    position: np.ndarray
    height: float
    foot_heights: np.ndarray
    pitch: float
    strike: bool


def measure(model: RobotModel, state: SimState, anchor: Tuple[float, float], terrain: Terrain) -> Measurement:
    k = sim.forward_kinematics(model, state.q)
    x, z = state.q[kin.BASE_X], state.q[kin.BASE_Z]
    strike = any(p[1] < terrain.height(p[0]) for p in k.strikes)
    return Measurement(position=np.array([x - anchor[0], z - anchor[1]]), height=float(z - terrain.height(x)),
                       foot_heights=k.soles[:, 1] - anchor[1], pitch=float(state.q[kin.BASE_PITCH]),
                       strike=bool(strike))


def task_error(m: Measurement, goal: Goal) -> Tuple[float, float]:
    """
    (position error, orientation error) against the goal.

    The planar body has no heading, so the orientation error is the deviation from level.
    """
    position = float(np.hypot(m.position[0] - goal.c_x, goal.c_y))
    return position, abs(m.pitch)


def sample_goal(cfg: EpisodeConfig, mode: str, rng: np.random.Generator) -> Goal:
    """
    Draw the next jump command.

    :param cfg: The stage's episode settings.
    :type cfg: :class:`EpisodeConfig <goaljump.models.episode.EpisodeConfig>`
    :param mode: ``flat`` or ``terrain``.
    :type mode: str
    :param rng: Episode generator.
    :type rng: np.random.Generator
    :return: The zero goal in Stage 1 and for single-goal runs, a uniform draw otherwise.
    :rtype: :class:`Goal <goaljump.models.goal.Goal>`
    """
    if mode not in GoalMode.all:
        raise ValueError(f"mode must be one of {', '.join(GoalMode.all)}, got {mode!r}")
    if cfg.stage == 1 or cfg.single_goal:
        return Goal()
    r = cfg.goal_ranges
    goal = Goal(float(rng.uniform(*r.c_x)), float(rng.uniform(*r.c_y)), float(rng.uniform(*r.c_z)),
                float(rng.uniform(*r.c_phi))).pinned(mode, cfg.planar)
    if mode == GoalMode.terrain and abs(goal.c_x) < r.min_step_run:
        goal = replace(goal, c_z=0.0)
    return goal


def check_termination(m: Measurement, goal: Goal, ref: ReferenceMotion, t: float, cfg: EpisodeConfig,
                      steps: int, since_touchdown: float, max_steps: Optional[int] = None,
                      evaluation: bool = False) -> str:
    """
    The termination flag after a policy step, checked in order: fall, foot bound, task bound, timeout.

    :param m: The measured state.
    :param t: Reference clock (s).
    :param steps: Policy steps taken in the episode.
    :param since_touchdown: Seconds since the last touchdown (or the episode start).
    :param max_steps: Override of ``cfg.max_steps``.
    :param evaluation: Only falls and timeouts end evaluation episodes.
    :return: One of :class:`Termination`.
    """
    if m.height < cfg.fall_height or m.strike:
        return Termination.fall
    if not evaluation:
        if t <= cfg.duration:
            k = int(round(t / ref.dt))
            target = ref.foot_height_at(k) + goal.c_z * ref.goal_ramp(t)
            if np.any(np.abs(m.foot_heights - target) > cfg.foot_bound):
                return Termination.foot_bound
        elif since_touchdown >= cfg.task_grace:
            position, orientation = task_error(m, goal)
            if position > cfg.task_bound[0] or orientation > cfg.task_bound[1]:
                return Termination.task_bound
    if steps >= (cfg.max_steps if max_steps is None else max_steps):
        return Termination.timeout
    return Termination.none


class Transition(NamedTuple):
    observation: Observation
    reward: float
    termination: str
    components: np.ndarray

    @property
    def done(self) -> bool:
        return self.termination != Termination.none

    @property
    def truncated(self) -> bool:
        return self.termination in Termination.truncations


class JumpEnv:
    """
    One environment instance. Instances share nothing mutable.

    :param config: The complete configuration.
    :type config: :class:`Config <goaljump.config.Config>`
    :param stage: Training stage 1, 2 or 3.
    :type stage: int
    :param mode: Goal mode, ``flat`` or ``terrain``.
    :type mode: str
    :param seed: Master seed.
    :type seed: int
    :param worker: Worker index; episodes draw from ``default_rng([seed, worker, episode])``.
    :type worker: int
    :param single_goal: Pin the Stage 2/3 goals to zero.
    :type single_goal: bool
    :param perturb: Apply random base wrenches during the episode.
    :type perturb: bool
    :param reference: The reference jump, built from the configuration if omitted.
    :type reference: Optional[:class:`ReferenceMotion <goaljump.reference.ReferenceMotion>`]
    :param evaluation: End episodes on falls and timeouts only.
    :type evaluation: bool
    :param max_steps: Override of the stage's episode length.
    :type max_steps: Optional[int]
    :param record: Keep a trace row per policy step.
    :type record: bool
    :param logger: A custom logger to use, defaults to the ``goaljump`` logger.
    :type logger: :class:`logging.Logger`, optional
    :param incidents: Shared counter of diverged episodes.
    :type incidents: Optional[:class:`IncidentLog <goaljump.incidents.IncidentLog>`]
    """

    def __init__(self, config: Config, stage: int, mode: str = GoalMode.flat, seed: int = 0, worker: int = 0,
                 single_goal: bool = False, perturb: bool = False, reference: Optional[ReferenceMotion] = None,
                 evaluation: bool = False, max_steps: Optional[int] = None, record: bool = False,
                 logger: logging.Logger = logging.getLogger("goaljump"), incidents: Optional[IncidentLog] = None):
        if mode not in GoalMode.all:
            raise exceptions.ConfigError(f"goal mode must be one of {', '.join(GoalMode.all)}, got {mode!r}")
        self.config = config
        self.stage = stage
        self.mode = mode
        self.seed = seed
        self.worker = worker
        self.single_goal = single_goal
        self.perturb = perturb
        self.cfg = config.episode(stage, single_goal)
        self.simulation = config.simulation
        self.policy_dt = self.simulation.policy_dt
        self.reference = reference or build_jump_in_place(config.reference, config.robot, self.policy_dt)
        self.evaluation = evaluation
        self.max_steps = self.cfg.max_steps if max_steps is None else max_steps
        self.record = record
        self.logger = logger
        self.incidents = incidents or IncidentLog(logger)
        self.dims = observation_dims(config)

        self.episode = -1
        self.terminated = True
        self.trace: List[dict] = []

    @property
    def clock(self) -> float:
        """The reference clock (s), 0 at the start of the current jump."""
        return self.ref_step * self.policy_dt

    def reset(self, episode: Optional[int] = None, goal: Optional[Goal] = None, robot: Optional[RobotModel] = None,
              wrench: Optional[WrenchPulse] = None, perturbation=None) -> Observation:
        """
        Start an episode.

        :param episode: Episode counter, the next one by default.
        :type episode: Optional[int]
        :param goal: Command a single jump to this goal at t = 0 instead of the stage's schedule.
        :type goal: Optional[:class:`Goal <goaljump.models.goal.Goal>`]
        :param robot: Nominal robot override, eg. with shifted COMs.
        :type robot: Optional[:class:`RobotModel <goaljump.models.robot.RobotModel>`]
        :param wrench: An external wrench applied on top of everything else.
        :type wrench: Optional[:class:`WrenchPulse <goaljump.randomization.WrenchPulse>`]
        :param perturbation: Random wrench settings overriding the configured ones.
        :type perturbation: Optional[:class:`PerturbationConfig <goaljump.models.randomization.PerturbationConfig>`]
        :return: The first observation.
        :rtype: :class:`Observation`
        """
        self.episode = self.episode + 1 if episode is None else episode
        self.rng = np.random.default_rng([self.seed, self.worker, self.episode])
        dynamics = sample_dynamics(self.config.randomization, robot or self.config.robot, self.config.sensor,
                                   self.rng, self.stage)
        self.robot, self.sensor, self.dynamics = dynamics.robot, dynamics.sensor, dynamics.sample
        self.privileged = self.dynamics.normalized(self.config.randomization)

        if perturbation is None and self.perturb:
            perturbation = copy.copy(self.config.perturbation)
            perturbation.enabled = True
        self.schedule = PerturbationSchedule(perturbation, self.rng) if perturbation is not None else None
        self.external = wrench

        self.terrain = Terrain.flat()
        self.state = sim.standing_state(self.robot, terrain=self.terrain)
        self.anchor = (float(self.state.q[kin.BASE_X]), self.terrain.height(self.state.q[kin.BASE_X]))
        max_delay = max(self.config.randomization.delay[1], self.sensor.delay)
        self.delay_buffer = sim.DelayBuffer(self.simulation.dt, max_delay, self.state)

        self.cycle = False
        self.countdown = 0
        if goal is not None:
            self._start_jump(goal)
        elif self.cfg.jumps_at_start:
            self._start_jump(sample_goal(self.cfg, self.mode, self.rng))
        else:
            self.goal = Goal()
            self.ref_step = self.reference.n_samples
            self.cycle = True
            self.countdown = self._standing_steps()

        self.filtered = self.state.motor_positions.copy()
        self.prev_action = self.filtered.copy()
        self.torques = np.zeros(ACTION_SIZE)
        observation = sim.observe(self.state, self.sensor, self.delay_buffer, self.rng)
        self.short_history = IoHistory(self.config.env.short_history, observation)
        self.long_history = IoHistory(self.config.env.long_history, observation)

        self.steps = 0
        self.airborne = False
        self.flight_start = 0.0
        self.longest_flight = 0.0
        self.last_touchdown = 0.0
        self.touchdowns = 0
        self.measurement = measure(self.robot, self.state, self.anchor, self.terrain)
        self.termination = Termination.none
        self.terminated = False
        self.trace = []
        self.logger.debug(f"Reset stage {self.stage} worker {self.worker} episode {self.episode} goal {self.goal}")
        return self.observation()

    def _standing_steps(self) -> int:
        lo, hi = self.cfg.standing_interval
        return max(1, int(round(self.rng.uniform(lo, hi) / self.policy_dt)))

    def _start_jump(self, goal: Goal):
        """Re-anchor the goal frame under the robot, raise or lower the far ground and restart the clock."""
        x = float(self.state.q[kin.BASE_X])
        self.anchor = (x, self.terrain.height(x))
        if self.mode == GoalMode.terrain and goal.c_z != 0.0:
            direction = 1 if goal.c_x >= 0 else -1
            self.terrain = self.terrain.with_step(x + 0.5 * goal.c_x, self.anchor[1] + goal.c_z, direction)
        self.goal = goal
        self.ref_step = 0

    def _wrench(self, t: float) -> Optional[np.ndarray]:
        total = None
        if self.external is not None and self.external.active(t):
            total = self.external.wrench.copy()
        if self.schedule is not None:
            w = self.schedule.wrench(t)
            if w is not None:
                total = w.copy() if total is None else total + w
        return total

    def _track_contact(self, state: SimState):
        airborne = not bool(np.any(state.in_contact))
        if airborne and not self.airborne:
            self.flight_start = state.time
        elif self.airborne and not airborne:
            self.longest_flight = max(self.longest_flight, state.time - self.flight_start)
            self.last_touchdown = state.time
            self.touchdowns += 1
        self.airborne = airborne

    def step(self, action) -> Transition:
        """
        Apply desired motor positions for one policy step.

        :param action: (4,) desired motor positions q_m^d before filtering (rad).
        :return: :class:`Transition` with the next observation, r_t, the termination flag and the
            reward components.
        :raises exceptions.EpisodeTerminatedError: if the episode has ended.
        :raises exceptions.DimensionError: if the action has the wrong shape.
        :raises exceptions.NonFiniteError: if the action is not finite.
        """
        if self.terminated:
            raise exceptions.EpisodeTerminatedError(f"worker {self.worker} episode {self.episode}")
        a = np.asarray(action, dtype=float)
        if a.shape != (ACTION_SIZE,):
            raise exceptions.DimensionError(f"an action has {ACTION_SIZE} values, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise exceptions.NonFiniteError(f"action = {a.tolist()}")

        beta = self.config.env.lpf_beta
        self.filtered = beta * self.filtered + (1.0 - beta) * a
        start = self.state
        state = start
        diverged = False
        try:
            for _ in range(self.simulation.substeps):
                self.torques = sim.pd_torque(self.robot, state.motor_positions, state.motor_velocities, self.filtered)
                state = sim.step_dynamics(self.robot, state, self.torques, self.simulation.dt, self.terrain,
                                          self._wrench(state.time), self.simulation.max_joint_speed)
                self.delay_buffer.push(state)
                self._track_contact(state)
        except exceptions.SimulationDivergedError as e:
            diverged = True
            self.incidents.record("Diverged episodes", f"stage {self.stage} worker {self.worker} "
                                                       f"episode {self.episode}: {e.detail}")
        self.state = state
        self.steps += 1
        self.ref_step += 1
        t = self.clock

        observation = sim.observe(state, self.sensor, self.delay_buffer, self.rng)
        self.short_history.push(observation, a)
        self.long_history.push(observation, a)
        self.measurement = m = measure(self.robot, state, self.anchor, self.terrain)

        if diverged:
            reward, terms = 0.0, np.zeros(N_COMPONENTS)
            termination = Termination.diverged
        else:
            qd = state.qd
            inputs = RewardInputs(
                motor_positions=state.motor_positions,
                pelvis_height=float(m.position[1]),
                foot_heights=m.foot_heights,
                pelvis_position=np.array([m.position[0], 0.0]),
                pelvis_velocity=np.array([qd[kin.BASE_X], 0.0]),
                orientation=np.array([0.0, m.pitch, 0.0]),
                angular_rate=np.array([0.0, qd[kin.BASE_PITCH], 0.0]),
                vertical_force=state.vertical_force,
                torques=self.torques,
                motor_velocities=state.motor_velocities,
                joint_acceleration=(qd - start.qd) / self.policy_dt,
                action=a,
                prev_action=self.prev_action,
            )
            reward, terms = compute_reward(inputs, self.reference, self.goal, t, self.config.reward, self.stage)
            termination = check_termination(m, self.goal, self.reference, t, self.cfg, self.steps,
                                             state.time - self.last_touchdown, self.max_steps, self.evaluation)

        if self.record:
            self.trace.append(self._trace_row(a, reward, terms, termination))

        self.prev_action = a
        self.termination = termination
        self.terminated = termination != Termination.none
        if not self.terminated and self.cycle and t > self.reference.duration:
            self.countdown -= 1
            if self.countdown <= 0:
                self._start_jump(sample_goal(self.cfg, self.mode, self.rng))
                self.countdown = self._standing_steps()
        return Transition(self.observation(), reward, termination, terms)

    def _trace_row(self, action: np.ndarray, reward: float, terms: np.ndarray, termination: str) -> dict:
        c = TraceColumns
        row = {c.time: self.state.time, c.step: self.steps, c.clock: self.clock,
               c.vertical_force: self.state.vertical_force, c.reward: reward, c.termination: termination}
        row.update(zip(c.q, self.state.q))
        row.update(zip(c.qd, self.state.qd))
        row.update(zip(c.action, action))
        row.update(zip(c.torque, self.torques))
        row.update(zip(c.components, terms))
        row.update(zip(GoalAttributes.columns, self.goal.to_array()))
        return row

    def observation(self) -> Observation:
        preview = sample_preview(self.reference, self.ref_step, self.config.env.preview_steps)
        t = self.clock
        q_local = self.state.q.copy()
        q_local[kin.BASE_X] -= self.anchor[0]
        q_local[kin.BASE_Z] -= self.anchor[1]
        clock = [min(t, self.reference.duration) / self.reference.duration, float(t <= self.reference.duration)]
        goal = self.goal.to_array()
        critic = np.concatenate([q_local, self.state.qd, goal, preview, clock, self.privileged])
        return Observation(goal=goal, preview=preview, short_history=self.short_history.array(),
                           long_history=self.long_history.array(), privileged=self.privileged.copy(), critic=critic)

    def meta(self) -> dict:
        """What :meth:`reset` needs to reproduce the current episode."""
        return {"stage": self.stage, "mode": self.mode, "seed": self.seed, "worker": self.worker,
                "episode": self.episode, "single_goal": self.single_goal, "perturb": self.perturb,
                "evaluation": self.evaluation, "max_steps": self.max_steps}
