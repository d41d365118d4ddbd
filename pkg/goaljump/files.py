"""
Reading and writing the CSV and JSON files a run produces.

Floats are written with ``repr`` so that reading a file back gives the exact values.
"""
import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from . import exceptions
from . import kinematics as kin
from .models.goal import Goal, GoalAttributes
from .models.reward import COMPONENTS

PathLike = Union[str, Path]


class TraceColumns:
    time = "t_s"
    step = "step"
    clock = "ref_t_s"
    q = tuple(f"q_{name}" for name in kin.Q_NAMES)
    qd = tuple(f"qd_{name}" for name in kin.Q_NAMES)
    action = tuple(f"action_{kin.JOINTS[j]}_rad" for j in kin.ACTUATED)
    torque = tuple(f"tau_{kin.JOINTS[j]}_nm" for j in kin.ACTUATED)
    vertical_force = "f_z_n"
    reward = "reward"
    components = tuple(f"r_{name}" for name in COMPONENTS)
    goal = GoalAttributes.columns
    termination = "termination"
    all = ((time, step, clock) + q + qd + action + torque + (vertical_force, reward) + components + goal
           + (termination,))


class MetricsColumns:
    iteration = "iteration"
    stage = "stage"
    arch = "arch"
    seed = "seed"
    mean_return = "mean_return"
    normalized_return = "normalized_return"
    mean_episode_len = "mean_episode_len"
    fraction_terminated_by = ("fraction_terminated_by_fall", "fraction_terminated_by_foot_bound",
                              "fraction_terminated_by_task_bound", "fraction_terminated_by_timeout")
    wall_clock = "wall_clock_s"
    all = ((iteration, stage, arch, seed, mean_return, normalized_return, mean_episode_len)
           + fraction_terminated_by + (wall_clock,))


class DistillColumns:
    iteration = "iteration"
    train_mse = "train_mse"
    holdout_mse = "holdout_mse"
    best_holdout_mse = "best_holdout_mse"
    all = (iteration, train_mse, holdout_mse, best_holdout_mse)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path: PathLike, columns: Tuple[str, ...], rows: Iterable[Mapping]):
    """Write dict rows under a fixed header. Missing cells are left empty."""
    with open(path, "w", encoding="UTF-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def read_rows(path: PathLike, columns: Tuple[str, ...]) -> List[Dict[str, str]]:
    try:
        with open(path, "r", encoding="UTF-8", newline="") as f:
            reader = csv.DictReader(f)
            missing = [c for c in columns if c not in (reader.fieldnames or ())]
            if missing:
                raise exceptions.ConfigError(f"{path} is missing columns {', '.join(missing)}")
            return list(reader)
    except OSError as e:
        raise exceptions.ConfigError(f"cannot read {path}: {e.strerror}")


def trace_sidecar(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_trace(path: PathLike, rows: List[Mapping], meta: dict):
    """
    Write an episode trace and its JSON sidecar (config, seeds, scenario) next to it.

    :param path: The CSV file.
    :param rows: One mapping per policy step, keyed by :class:`TraceColumns`.
    :param meta: Everything needed to re-simulate the episode.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_rows(path, TraceColumns.all, rows)
    with open(trace_sidecar(path), "w", encoding="UTF-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def read_trace(path: PathLike) -> Tuple[dict, List[dict]]:
    """
    Read a trace written by :func:`write_trace`.

    :return: (meta, rows) with numeric cells parsed to float and ``step`` to int.
    """
    rows = read_rows(path, TraceColumns.all)
    try:
        with open(trace_sidecar(path), "r", encoding="UTF-8") as f:
            meta = json.load(f)
    except OSError as e:
        raise exceptions.ConfigError(f"cannot read the sidecar of {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise exceptions.ConfigError(f"the sidecar of {path} is not valid JSON: {e}")
    parsed = []
    for row in rows:
        p = {}
        for c in TraceColumns.all:
            if c == TraceColumns.termination:
                p[c] = row[c]
            elif c == TraceColumns.step:
                p[c] = int(row[c])
            else:
                p[c] = float(row[c])
        parsed.append(p)
    return meta, parsed


def write_metrics(path: PathLike, rows: Iterable[Mapping]):
    write_rows(path, MetricsColumns.all, rows)


def read_metrics(path: PathLike) -> List[Dict[str, str]]:
    return read_rows(path, MetricsColumns.all)


def write_json(path: PathLike, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="UTF-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)


def read_json(path: PathLike):
    try:
        with open(path, "r", encoding="UTF-8") as f:
            return json.load(f)
    except OSError as e:
        raise exceptions.ConfigError(f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise exceptions.ConfigError(f"{path} is not valid JSON: {e}")


def read_goals(path: PathLike) -> List[Goal]:
    """
    Read a goals file, one goal per row with the columns c_x_m, c_y_m, c_z_m and c_phi_rad.

    :raises exceptions.ConfigError: naming the row and field of a bad cell.
    """
    goals = []
    for i, row in enumerate(read_rows(path, GoalAttributes.columns), start=2):
        try:
            values = {c: float(row[c]) for c in GoalAttributes.columns}
        except (TypeError, ValueError):
            raise exceptions.ConfigError(f"{path} line {i}: every goal field must be a number")
        goals.append(Goal.from_row(values))
    return goals


def write_goals(path: PathLike, goals: Iterable[Goal]):
    write_rows(path, GoalAttributes.columns, (g.to_row() for g in goals))
