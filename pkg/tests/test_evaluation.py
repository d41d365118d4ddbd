import asyncio
import math

import numpy as np
import pytest

from goaljump.arch import build_policy
from goaljump.evaluation import (eval_landing, goal_mode, make_scenario, policy_return, run_robustness, run_trial,
                                 scenario_inputs, summarize)
from goaljump.files import read_trace
from goaljump.models.goal import Goal, GoalMode
from goaljump.models.scenario import EvalReport, ScenarioKind


@pytest.fixture(scope="module")
def policy(small_config, dims):
    return build_policy("ours", dims, small_config.network, seed=3)


def report(success=True, survived=True, position=0.1, orientation=0.05, flight=0.2) -> EvalReport:
    return EvalReport(goal=Goal(), seed=0, position_error=position, orientation_error=orientation, success=success,
                      survived=survived, flight_time_s=flight)


def test_default_scenarios_and_their_flags(config):
    force = make_scenario(config, ScenarioKind.constant_force)
    assert force.magnitude == 30.0
    assert force.out_of_distribution
    assert make_scenario(config, ScenarioKind.com_offset).out_of_distribution
    assert not make_scenario(config, ScenarioKind.com_offset, 0.03).out_of_distribution
    assert not make_scenario(config, ScenarioKind.wrench_pulse).out_of_distribution
    assert make_scenario(config, ScenarioKind.wrench_pulse, -25.0).out_of_distribution
    assert make_scenario(config, ScenarioKind.com_offset, goal=Goal(c_x=0.5)).goal == Goal(c_x=0.5)


def test_bad_scenarios(config):
    with pytest.raises(ValueError, match="scenario must be one of"):
        make_scenario(config, "earthquake")
    with pytest.raises(ValueError, match="finite"):
        make_scenario(config, ScenarioKind.constant_force, math.nan)


def test_scenario_inputs(config):
    assert scenario_inputs(config, None) == (None, None, None)
    assert scenario_inputs(config, make_scenario(config, ScenarioKind.com_offset, 0.0)) == (None, None, None)

    robot, wrench, perturbation = scenario_inputs(config, make_scenario(config, ScenarioKind.constant_force, 30.0))
    assert robot is None and perturbation is None
    assert wrench.active(0.0) and wrench.active(1e6)

    robot, wrench, perturbation = scenario_inputs(config, make_scenario(config, ScenarioKind.com_offset, 0.02))
    assert wrench is None and perturbation is None
    assert not np.array_equal(robot.link_com_offsets, config.robot.link_com_offsets)

    robot, wrench, perturbation = scenario_inputs(config, make_scenario(config, ScenarioKind.wrench_pulse, 40.0))
    assert perturbation.enabled
    assert perturbation.force == 40.0
    assert perturbation.moment == pytest.approx(40.0 * config.perturbation.moment / config.perturbation.force)
    assert not config.perturbation.enabled


def test_goal_mode():
    assert goal_mode(Goal(c_x=1.0)) == GoalMode.flat
    assert goal_mode(Goal(c_x=1.0, c_z=0.2)) == GoalMode.terrain


def test_trial_report_and_trace(tmp_path, small_config, policy):
    trace = tmp_path / "trial.csv"
    result = run_trial(small_config, policy, Goal(c_x=0.3), seed=1, trace=trace)
    assert 1 <= result.steps <= small_config.harness.eval_max_steps
    assert result.position_error >= 0.0 and result.orientation_error >= 0.0
    assert result.landing_displacement == result.position_error
    assert not (result.success and not result.survived)
    assert result.trace == str(trace)
    meta, rows = read_trace(trace)
    assert len(rows) == result.steps
    assert meta["kind"] == "ours"
    assert meta["goal"] == Goal(c_x=0.3).to_row()
    assert meta["position_error"] == result.position_error
    assert meta["scenario"] is None


def test_trials_are_deterministic(small_config, policy):
    a = run_trial(small_config, policy, Goal(), seed=4)
    b = run_trial(small_config, policy, Goal(), seed=4)
    assert a.to_dict() == b.to_dict()


def test_eval_landing_orders_goals_outermost(tmp_path, small_config, policy):
    goals = [Goal(), Goal(c_x=0.4)]
    reports = asyncio.run(eval_landing(small_config, policy, goals, [0, 1], out_dir=tmp_path))
    assert [(r.goal, r.seed) for r in reports] == [(goals[0], 0), (goals[0], 1), (goals[1], 0), (goals[1], 1)]
    assert (tmp_path / "traces" / "eval-goal001-seed1.csv").exists()


def test_robustness_counts(small_config, policy):
    scenario = make_scenario(small_config, ScenarioKind.constant_force, 10.0)
    result = asyncio.run(run_robustness(small_config, policy, scenario, trials=2))
    assert result["trials"] == 2
    assert len(result["reports"]) == 2
    assert result["survival_rate"] == result["survived"] / 2
    assert result["scenario"]["kind"] == ScenarioKind.constant_force
    assert not result["scenario"]["out_of_distribution"]
    assert result["recovered_by_retargeting"] <= result["survived"]


def test_summarize():
    reports = [report(), report(success=False, position=0.5, flight=0.05),
               report(success=False, survived=False, position=0.3)]
    summary = summarize(reports, min_flight=0.1)
    assert summary["trials"] == 3
    assert summary["successes"] == 1
    assert summary["success_rate"] == pytest.approx(1 / 3)
    assert summary["survived"] == 2
    assert summary["mean_position_error"] == pytest.approx(0.3)
    assert summary["flight_fraction"] == pytest.approx(2 / 3)
    assert summarize([], 0.1)["success_rate"] is None


def test_success_requires_survival():
    with pytest.raises(ValueError):
        report(success=True, survived=False)


def test_policy_return_is_normalized(small_config, policy):
    value = asyncio.run(policy_return(small_config, policy, 1, GoalMode.flat, seed=0, episodes=2))
    assert 0.0 <= value <= 1.0
