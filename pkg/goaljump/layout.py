from pathlib import Path
from typing import Union


class RunLayout:
    """File and directory names used under an output directory."""
    CHECKPOINT_SUFFIX = ".jgck"
    FINAL_CHECKPOINT = f"checkpoint_final{CHECKPOINT_SUFFIX}"
    METRICS = "metrics.csv"
    DISTILL_METRICS = "distill.csv"
    RUN_INFO = "run.json"
    TRACE_DIR = "traces"
    EVAL_REPORT = "eval.json"
    ROBUSTNESS_REPORT = "robustness.json"
    ABLATION_REPORT = "ablation.json"
    REFERENCE_CSV = "reference.csv"

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    @staticmethod
    def run_name(kind: str, mode: str, seed: int, single_goal: bool = False, perturb: bool = False) -> str:
        name = f"{kind}-{mode}-seed{seed}"
        if single_goal:
            name += "-single"
        if perturb:
            name += "-perturb"
        return name

    def run_dir(self, kind: str, mode: str, seed: int, single_goal: bool = False, perturb: bool = False) -> Path:
        return self.out_dir / self.run_name(kind, mode, seed, single_goal, perturb)

    def stage_dir(self, kind: str, mode: str, seed: int, stage: int,
                  single_goal: bool = False, perturb: bool = False) -> Path:
        return self.run_dir(kind, mode, seed, single_goal, perturb) / f"stage{stage}"

    @classmethod
    def checkpoint_name(cls, iteration: int) -> str:
        return f"checkpoint_{iteration:06d}{cls.CHECKPOINT_SUFFIX}"
