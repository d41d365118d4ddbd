import argparse
import json

import pytest

from goaljump.cli import arch_list, build_parser, int_list, main
from goaljump.files import write_goals
from goaljump.layout import RunLayout
from goaljump.models.goal import Goal


def test_int_list():
    assert int_list("0,1, 2") == [0, 1, 2]
    with pytest.raises(argparse.ArgumentTypeError):
        int_list("1,x")
    with pytest.raises(argparse.ArgumentTypeError):
        int_list(",")


def test_arch_list():
    assert arch_list("ours,long,rma") == ["ours", "long", "rma"]
    with pytest.raises(argparse.ArgumentTypeError, match="transformer"):
        arch_list("ours,transformer")


def test_parser_defaults():
    args = build_parser().parse_args(["train", "--stage", "2"])
    assert (args.arch, args.mode, args.seed, args.out, args.workers) == ("ours", "flat", 0, ".", None)
    assert not args.single_goal and not args.perturb
    args = build_parser().parse_args(["ablation"])
    assert args.arch == ["ours", "long", "short", "residual"]
    assert args.seeds == [0, 1, 2]
    assert args.stages == 2


@pytest.mark.parametrize("argv", [
    [],
    ["train"],
    ["train", "--stage", "4"],
    ["train", "--stage", "1", "--arch", "transformer"],
    ["robustness", "--checkpoint", "a.jgck", "--scenario", "earthquake"],
    ["eval", "--checkpoint", "a.jgck", "--goals", "g.csv", "--seeds", "x"],
])
def test_usage_errors_exit_with_2(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 2


def test_errors_are_one_line_on_stderr(tmp_path, small_config_file, capsys):
    code = main(["train", "--stage", "2", "--config", str(small_config_file), "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("goaljump: error: ")
    assert "stage 1" in err[-1]


def test_bad_config_file(tmp_path, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("ppo: {gama: 0.9}\n", encoding="UTF-8")
    assert main(["export-ref", "--config", str(path)]) == 2
    assert "ppo.gama" in capsys.readouterr().err


def test_export_ref(tmp_path, capsys):
    path = tmp_path / "ref.csv"
    assert main(["export-ref", "--out", str(path)]) == 0
    assert path.exists()
    assert capsys.readouterr().out.strip() == str(path)


def test_train_eval_replay(tmp_path, small_config_file, capsys):
    common = ["--config", str(small_config_file), "--out", str(tmp_path), "--log-level", "WARNING"]
    assert main(["train", "--stage", "1", "--iterations", "1"] + common) == 0
    final = capsys.readouterr().out.strip()
    assert final == str(RunLayout(tmp_path).stage_dir("ours", "flat", 0, 1) / RunLayout.FINAL_CHECKPOINT)

    goals = tmp_path / "goals.csv"
    write_goals(goals, [Goal(), Goal(c_x=0.2)])
    assert main(["eval", "--checkpoint", final, "--goals", str(goals), "--seeds", "0,1"] + common) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 4

    trace = tmp_path / RunLayout.TRACE_DIR / "eval-goal001-seed1.csv"
    assert main(["replay", "--trace", str(trace)] + common) == 0
    assert json.loads(capsys.readouterr().out)["steps_verified"] > 0
