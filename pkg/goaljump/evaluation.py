"""
Landing-accuracy evaluation and robustness scenarios.

Every trial commands one jump from standing and runs until the post-settle instant: a fixed time
after the latest touchdown, or the end of the episode if the robot never landed. The pose at that
instant is compared against the goal in the frame of the starting pose. Trials use the Stage 2
setting (nominal dynamics) so that any disturbance comes from the scenario alone.
"""
import copy
import logging
import math
from concurrent.futures import Executor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import files
from .arch import Policy, action_postprocess
from .config import Config
from .env import JumpEnv, Termination, task_error
from .layout import RunLayout
from .models.goal import Goal, GoalMode
from .models.randomization import PerturbationConfig
from .models.robot import RobotModel
from .models.scenario import EvalReport, RobustnessScenario, ScenarioKind
from .ppo import gather_jobs
from .randomization import WrenchPulse, apply_perturbation, offset_all_coms
from .reference import ReferenceMotion

EVAL_STAGE = 2


def make_scenario(config: Config, kind: str, magnitude: Optional[float] = None,
                  goal: Optional[Goal] = None) -> RobustnessScenario:
    """
    A scenario with its out-of-distribution flag worked out from the training ranges.

    :param magnitude: Defaults to ``harness.scenarios`` for the kind.
    :raises ValueError: On an unknown kind or a non-finite magnitude.
    """
    if kind not in ScenarioKind.all:
        raise ValueError(f"scenario must be one of {', '.join(ScenarioKind.all)}, got {kind!r}")
    if magnitude is None:
        magnitude = config.harness.default_magnitudes[kind]
    if not math.isfinite(magnitude):
        raise ValueError(f"scenario magnitude must be finite, got {magnitude}")
    if kind == ScenarioKind.com_offset:
        limit = max(abs(v) for v in config.randomization.link_com_offset)
    else:
        # training wrenches are bounded by the perturbation settings, and are absent without --perturb
        limit = config.perturbation.force
    return RobustnessScenario(kind, float(magnitude), goal or Goal(), abs(magnitude) > limit)


def scenario_inputs(config: Config, scenario: Optional[RobustnessScenario]) \
        -> Tuple[Optional[RobotModel], Optional[WrenchPulse], Optional[PerturbationConfig]]:
    """(robot override, external wrench, random perturbation settings) of a scenario; all None at zero magnitude."""
    if scenario is None or scenario.magnitude == 0.0:
        return None, None, None
    if scenario.kind == ScenarioKind.constant_force:
        return None, apply_perturbation([scenario.magnitude, 0.0, 0.0], math.inf), None
    if scenario.kind == ScenarioKind.com_offset:
        return offset_all_coms(config.robot, scenario.magnitude), None, None
    perturbation = copy.copy(config.perturbation)
    ratio = perturbation.moment / perturbation.force if perturbation.force > 0 else 0.0
    perturbation.enabled = True
    perturbation.force = abs(scenario.magnitude)
    perturbation.moment = abs(scenario.magnitude) * ratio
    return None, None, perturbation


def goal_mode(goal: Goal) -> str:
    return GoalMode.terrain if goal.c_z != 0.0 else GoalMode.flat


def run_trial(config: Config, policy: Policy, goal: Goal, seed: int, reference: Optional[ReferenceMotion] = None,
              scenario: Optional[RobustnessScenario] = None, trace: Optional[Path] = None,
              logger: logging.Logger = logging.getLogger("goaljump")) -> EvalReport:
    """
    Run one commanded jump with the mean action and report the landing.

    :param config: The complete configuration.
    :param policy: Any architecture.
    :param goal: The command.
    :param seed: Episode seed.
    :param scenario: A disturbance, none if omitted.
    :param trace: Write the trace and its sidecar here.
    :return: :class:`EvalReport <goaljump.models.scenario.EvalReport>`
    """
    robot, wrench, perturbation = scenario_inputs(config, scenario)
    env = JumpEnv(config, EVAL_STAGE, goal_mode(goal), seed, evaluation=True, max_steps=config.harness.eval_max_steps,
                  record=trace is not None, reference=reference, logger=logger)
    observation = env.reset(episode=0, goal=goal, robot=robot, wrench=wrench, perturbation=perturbation)
    settle = config.harness.post_settle
    while True:
        action, _ = policy.act(observation)
        transition = env.step(action_postprocess(policy.kind, action, env.reference, env.ref_step))
        observation = transition.observation
        if transition.done:
            break
        if env.touchdowns > 0 and env.state.time >= env.last_touchdown + settle:
            break

    survived = env.termination not in (Termination.fall, Termination.diverged)
    position, orientation = task_error(env.measurement, goal)
    bound = env.cfg.task_bound
    report = EvalReport(
        goal=goal, seed=seed, position_error=position, orientation_error=orientation,
        success=survived and position <= bound[0] and orientation <= bound[1], survived=survived,
        landing_displacement=position, recovered_by_retargeting=survived and position > bound[0],
        flight_time_s=env.longest_flight, steps=env.steps, trace=str(trace) if trace is not None else None)
    if trace is not None:
        meta = env.meta()
        meta.update(kind=policy.kind, goal=goal.to_row(), config=config.to_dict(), anchor=list(env.anchor),
                    scenario={"kind": scenario.kind, "magnitude": scenario.magnitude} if scenario else None,
                    position_error=position, orientation_error=orientation, success=report.success,
                    survived=survived)
        files.write_trace(trace, env.trace, meta)
    logger.debug(f"Trial goal {goal} seed {seed}: position error {position:.3f} m, "
                 f"orientation error {orientation:.3f} rad, survived {survived}")
    return report


async def eval_landing(config: Config, policy: Policy, goals: Sequence[Goal], seeds: Sequence[int],
                       out_dir=None, reference: Optional[ReferenceMotion] = None, executor: Optional[Executor] = None,
                       logger: logging.Logger = logging.getLogger("goaljump")) -> List[EvalReport]:
    """
    One trial per (goal, seed), goals outermost. Traces go under ``out_dir/traces`` if given.
    """
    policy.clear_cache()
    jobs = []
    for i, goal in enumerate(goals):
        for seed in seeds:
            trace = Path(out_dir) / RunLayout.TRACE_DIR / f"eval-goal{i:03d}-seed{seed}.csv" if out_dir else None
            jobs.append((config, policy, goal, seed, reference, None, trace, logger))
    return await gather_jobs(executor, run_trial, jobs)


async def run_robustness(config: Config, policy: Policy, scenario: RobustnessScenario, trials: int,
                         out_dir=None, reference: Optional[ReferenceMotion] = None,
                         executor: Optional[Executor] = None,
                         logger: logging.Logger = logging.getLogger("goaljump")) -> dict:
    """
    Command the scenario's goal under the disturbance for seeds ``0 .. trials - 1``.

    :return: Survival and retargeting counts, with a report per trial.
    """
    policy.clear_cache()
    jobs = []
    for seed in range(trials):
        trace = (Path(out_dir) / RunLayout.TRACE_DIR / f"robustness-{scenario.kind}-seed{seed}.csv"
                 if out_dir else None)
        jobs.append((config, policy, scenario.goal, seed, reference, scenario, trace, logger))
    reports: List[EvalReport] = await gather_jobs(executor, run_trial, jobs)
    survived = sum(r.survived for r in reports)
    return {
        "kind": policy.kind,
        "scenario": {"kind": scenario.kind, "magnitude": scenario.magnitude, "goal": scenario.goal.to_row(),
                     "out_of_distribution": scenario.out_of_distribution},
        "trials": trials,
        "survived": survived,
        "survival_rate": survived / trials if trials else None,
        "recovered_by_retargeting": sum(r.recovered_by_retargeting for r in reports),
        "note": "rates over repeated seeded trials",
        "reports": [r.to_dict() for r in reports],
    }


def summarize(reports: Sequence[EvalReport], min_flight: float) -> dict:
    n = len(reports)
    successes = sum(r.success for r in reports)
    return {
        "trials": n,
        "successes": successes,
        "success_rate": successes / n if n else None,
        "survived": sum(r.survived for r in reports),
        "mean_position_error": float(np.mean([r.position_error for r in reports])) if n else None,
        "mean_orientation_error": float(np.mean([r.orientation_error for r in reports])) if n else None,
        "flight_fraction": sum(r.flight_time_s >= min_flight for r in reports) / n if n else None,
    }


def episode_return(config: Config, policy: Policy, stage: int, mode: str, seed: int, worker: int,
                   single_goal: bool = False, reference: Optional[ReferenceMotion] = None) -> float:
    """Normalized return of one training-setting episode driven by the mean action."""
    env = JumpEnv(config, stage, mode, seed, worker, single_goal=single_goal, reference=reference)
    observation = env.reset(episode=0)
    total = 0.0
    while True:
        action, _ = policy.act(observation)
        transition = env.step(action_postprocess(policy.kind, action, env.reference, env.ref_step))
        total += transition.reward
        observation = transition.observation
        if transition.done:
            return total / env.max_steps


async def policy_return(config: Config, policy: Policy, stage: int, mode: str, seed: int, episodes: int,
                        single_goal: bool = False, reference: Optional[ReferenceMotion] = None,
                        executor: Optional[Executor] = None) -> float:
    """
    Mean normalized return over ``episodes`` deterministic episodes.

    Worker indices start after the training environments so none of these episodes was trained on.
    """
    policy.clear_cache()
    first = config.ppo.n_envs
    jobs = [(config, policy, stage, mode, seed, first + i, single_goal, reference) for i in range(episodes)]
    return float(np.mean(await gather_jobs(executor, episode_return, jobs)))
