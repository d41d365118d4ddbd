import json

import pytest

from goaljump import exceptions
from goaljump.env import JumpEnv
from goaljump.files import (MetricsColumns, read_goals, read_json, read_metrics, read_trace, trace_sidecar,
                            write_goals, write_json, write_metrics, write_trace)
from goaljump.models.goal import Goal


def test_metrics_keep_exact_floats(tmp_path):
    path = tmp_path / "metrics.csv"
    value = 0.1 + 0.2
    write_metrics(path, [{MetricsColumns.iteration: 0, MetricsColumns.mean_return: value,
                          MetricsColumns.wall_clock: None}])
    rows = read_metrics(path)
    assert float(rows[0][MetricsColumns.mean_return]) == value
    assert rows[0][MetricsColumns.wall_clock] == ""
    assert rows[0][MetricsColumns.arch] == ""
    header = path.read_text(encoding="UTF-8").splitlines()[0]
    assert header.split(",") == list(MetricsColumns.all)


def test_missing_columns(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("iteration\n0\n", encoding="UTF-8")
    with pytest.raises(exceptions.ConfigError, match="missing columns"):
        read_metrics(path)
    with pytest.raises(exceptions.ConfigError, match="cannot read"):
        read_metrics(tmp_path / "none.csv")


def test_goals(tmp_path):
    path = tmp_path / "goals.csv"
    goals = [Goal(0.5), Goal(1.0, 0.0, 0.2, 0.0)]
    write_goals(path, goals)
    assert read_goals(path) == goals


def test_bad_goal_cell(tmp_path):
    path = tmp_path / "goals.csv"
    path.write_text("c_x_m,c_y_m,c_z_m,c_phi_rad\n0.5,0,0,0\nfar,0,0,0\n", encoding="UTF-8")
    with pytest.raises(exceptions.ConfigError, match="line 3"):
        read_goals(path)


def test_trace_sidecar(tmp_path, small_config):
    env = JumpEnv(small_config, 1, record=True)
    env.reset()
    for _ in range(2):
        env.step(env.reference.motors_at(env.ref_step))
    path = tmp_path / "traces" / "episode.csv"
    write_trace(path, env.trace, {"env": env.meta()})
    assert trace_sidecar(path).exists()
    meta, rows = read_trace(path)
    assert meta == {"env": env.meta()}
    assert [r["step"] for r in rows] == [1, 2]
    assert rows[1]["t_s"] == env.trace[1]["t_s"]
    assert rows[1]["termination"] == "continue"


def test_json(tmp_path):
    path = tmp_path / "a" / "eval.json"
    write_json(path, {"b": 1, "a": [1.5]})
    assert read_json(path) == {"a": [1.5], "b": 1}
    assert json.loads(path.read_text(encoding="UTF-8")) == {"a": [1.5], "b": 1}
    path.write_text("{", encoding="UTF-8")
    with pytest.raises(exceptions.ConfigError, match="not valid JSON"):
        read_json(path)
