"""
The ``goaljump`` command.

Every subcommand writes its CSV/JSON output under ``--out``. Errors raised by goaljump are
printed as one line on stderr with exit status 2, the status argparse uses for usage errors.
"""
import argparse
import asyncio
import json
import logging
import sys
from typing import List, Optional

from . import exceptions
from .arch import PolicyKind
from .base import GoalJump
from .config import load_config
from .files import read_goals
from .models.goal import GoalMode
from .models.scenario import ScenarioKind
from .models.training import EncoderVariant

ARCH_CHOICES = (PolicyKind.ours, PolicyKind.residual, "long", "short", PolicyKind.expert, "rma", PolicyKind.arma,
                PolicyKind.long_only, PolicyKind.short_only, PolicyKind.rma_student)


def int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def arch_list(text: str) -> List[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    for name in names:
        if name not in ARCH_CHOICES:
            raise argparse.ArgumentTypeError(f"unknown architecture {name!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file merged over the default configuration")
    common.add_argument("--out", default=".", help="output directory (default: the working directory)")
    common.add_argument("--workers", type=int, help="worker processes, 0 runs in-process (default: from config)")
    common.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))

    parser = argparse.ArgumentParser(prog="goaljump", description="Goal-conditioned jumping for a planar biped.")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", parents=[common], help="train one curriculum stage")
    train.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    train.add_argument("--arch", choices=ARCH_CHOICES, default=PolicyKind.ours)
    train.add_argument("--mode", choices=GoalMode.all, default=GoalMode.flat)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--single-goal", action="store_true", help="pin Stage 2/3 goals to jumping in place")
    train.add_argument("--perturb", action="store_true", help="apply random base wrenches during training")
    train.add_argument("--encoder", choices=EncoderVariant.all, help="long-history encoder geometry")
    train.add_argument("--iterations", type=int, help="override the configured iteration count")

    evaluate = commands.add_parser("eval", parents=[common], help="landing accuracy of a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--goals", required=True, help="CSV with columns c_x_m, c_y_m, c_z_m, c_phi_rad")
    evaluate.add_argument("--seeds", type=int_list, default=[0], help="comma-separated, eg. 0,1,2")

    robustness = commands.add_parser("robustness", parents=[common], help="survival under a disturbance")
    robustness.add_argument("--checkpoint", required=True)
    robustness.add_argument("--scenario", choices=ScenarioKind.all, required=True)
    robustness.add_argument("--magnitude", type=float, help="default: harness.scenarios in the config")
    robustness.add_argument("--trials", type=int, default=20)

    replay = commands.add_parser("replay", parents=[common], help="re-simulate a trace and verify it exactly")
    replay.add_argument("--trace", required=True)

    export = commands.add_parser("export-ref", parents=[common], help="write the reference jump as CSV")
    export.set_defaults(out=None)

    ablation = commands.add_parser("ablation", parents=[common], help="train and compare architectures")
    ablation.add_argument("--arch", type=arch_list, default=[PolicyKind.ours, "long", "short", PolicyKind.residual],
                          help="comma-separated architectures")
    ablation.add_argument("--seeds", type=int_list, default=[0, 1, 2])
    ablation.add_argument("--stages", type=int, choices=(1, 2, 3), default=2)
    ablation.add_argument("--mode", choices=GoalMode.all, default=GoalMode.flat)
    ablation.add_argument("--iterations", type=int, help="override the configured iteration counts")
    return parser


async def run(args: argparse.Namespace, jump: GoalJump):
    if args.command == "train":
        return str(await jump.train(args.stage, args.arch, args.mode, args.seed, args.single_goal, args.perturb,
                                    args.encoder, args.iterations))
    if args.command == "eval":
        return (await jump.eval(args.checkpoint, read_goals(args.goals), args.seeds))["summary"]
    if args.command == "robustness":
        result = await jump.robustness(args.checkpoint, args.scenario, args.magnitude, args.trials)
        return {k: result[k] for k in ("scenario", "trials", "survived", "recovered_by_retargeting")}
    if args.command == "replay":
        return {"steps_verified": jump.replay(args.trace)}
    if args.command == "export-ref":
        return str(jump.export_reference(args.out))
    if args.command == "ablation":
        result = await jump.run_ablation(args.arch, args.seeds, args.stages, args.mode, args.iterations)
        return {"mean_normalized_returns": result["mean_normalized_returns"], "checks": result["checks"]}
    raise ValueError(args.command)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger = logging.getLogger("goaljump")
    try:
        config = load_config(args.config)
        out = args.out if args.command != "export-ref" else "."
        jump = GoalJump(config, out, args.workers, logger)
        try:
            result = asyncio.run(run(args, jump))
        finally:
            jump.close()
    except exceptions.Error as e:
        print(f"goaljump: error: {e}", file=sys.stderr)
        return 2
    print(result if isinstance(result, str) else json.dumps(result, indent=2, sort_keys=True))
    return 0
