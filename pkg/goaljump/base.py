import copy
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import checkpoint
from . import exceptions
from . import files
from .arch import Part, Policy, PolicyKind, ValueNetwork, checkpoint_tensors, distill_student, restore
from .cache import Cache
from .config import Config, ConfigAttributes, config_from_dict, load_config
from .env import JumpEnv, observation_dims
from .evaluation import eval_landing, make_scenario, policy_return, run_robustness, scenario_inputs, summarize
from .files import DistillColumns, TraceColumns
from .incidents import IncidentLog
from .layout import RunLayout
from .models.goal import Goal, GoalMode
from .models.scenario import RobustnessScenario
from .ppo import RolloutWorker, collect_observations, finetune_arma, train_stage
from .reference import ReferenceMotion, build_jump_in_place, to_csv


class GoalJump:
    """
    The main class: trains, evaluates and replays goal-conditioned jumping policies. Everything it
    writes goes under ``out_dir``, laid out by :class:`RunLayout <goaljump.layout.RunLayout>`.

    Use it as an async context manager, or call :meth:`close` when done, to shut the worker
    processes down.

    :param config: The configuration, the packaged default if omitted.
    :type config: Optional[:class:`Config <goaljump.config.Config>`]
    :param out_dir: Output directory, defaults to the working directory.
    :type out_dir: Union[str, pathlib.Path], optional
    :param workers: Worker processes for rollouts and trials, defaults to ``harness.workers``. 0 runs
        everything in-process.
    :type workers: Optional[int]
    :param logger: A custom logger to use, defaults to the ``goaljump`` logger.
    :type logger: :class:`logging.Logger`, optional
    :param log_freq: How frequently to log repeated incident warnings, defaults to
        ``harness.incident_log_freq_s``.
    :type log_freq: Optional[Union[int (as seconds), float]]
    :param min_count_for_log: The number of incidents of one kind required before warning,
        defaults to ``harness.incident_min_count``.
    :type min_count_for_log: Optional[int]
    :param cache_max_size: The maximum number of reference motions and checkpoints kept in memory,
        defaults to ``harness.cache_max_size``.
    :type cache_max_size: Optional[int]
    """

    def __init__(self,
                 config: Optional[Config] = None,
                 out_dir: Union[str, Path] = ".",
                 workers: Optional[int] = None,
                 logger: logging.Logger = logging.getLogger("goaljump"),
                 log_freq: Optional[Union[int, float]] = None,
                 min_count_for_log: Optional[int] = None,
                 cache_max_size: Optional[int] = None
                 ):
        self.config = config or load_config()
        harness = self.config.harness
        self.layout = RunLayout(out_dir)
        self.workers = harness.workers if workers is None else workers
        if self.workers < 0:
            raise exceptions.ConfigError(f"workers must be >= 0, got {self.workers}")
        self.logger = logger
        self.incidents = IncidentLog(logger, harness.incident_log_freq if log_freq is None else log_freq,
                                     harness.incident_min_count if min_count_for_log is None else min_count_for_log)
        max_size = harness.cache_max_size if cache_max_size is None else cache_max_size
        self.references = Cache(name="goaljump-references", max_size=max_size)
        self.checkpoints = Cache(name="goaljump-checkpoints", max_size=max_size)
        self.dims = observation_dims(self.config)
        self._executor: Optional[Executor] = None

    async def __aenter__(self) -> "GoalJump":
        return self

    async def __aexit__(self, *exc):
        self.close()

    @property
    def executor(self) -> Optional[Executor]:
        if self.workers and self._executor is None:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self._executor

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def reference(self, config: Optional[Config] = None) -> ReferenceMotion:
        """The reference jump of a configuration, built once per distinct robot and reference settings."""
        config = config or self.config
        data = config.to_dict()
        key = [data[ConfigAttributes.reference], data[ConfigAttributes.robot], config.simulation.policy_dt]
        return self.references.execute(build_jump_in_place, key, config.reference, config.robot,
                                       config.simulation.policy_dt)

    def load_policy(self, path: Union[str, Path], kind: Optional[str] = None) -> Tuple[Policy, Optional[ValueNetwork]]:
        """
        Load a policy checkpoint.

        :param path: A ``.jgck`` file.
        :param kind: The expected architecture, whatever the checkpoint holds if omitted.
        :raises exceptions.CheckpointError: If the file is unreadable or malformed.
        :raises exceptions.ArchitectureError: If it holds another architecture.
        """
        path = Path(path)
        if not path.is_file():
            raise exceptions.CheckpointError(f"{path} does not exist")
        key = [str(path.resolve()), path.stat().st_mtime_ns]
        tensors = self.checkpoints.execute(checkpoint.load, key, path)
        return restore(tensors, self.dims, self.config.network, kind)

    def _final(self, kind: str, mode: str, seed: int, stage: int, single_goal: bool, perturb: bool) -> Path:
        return self.layout.stage_dir(kind, mode, seed, stage, single_goal, perturb) / RunLayout.FINAL_CHECKPOINT

    def _require(self, path: Path, what: str):
        if not path.exists():
            raise exceptions.PrerequisiteError(f"{what} needs {path}, which does not exist")

    async def train(self, stage: int, kind: str, mode: str = GoalMode.flat, seed: int = 0, single_goal: bool = False,
                    perturb: bool = False, encoder: Optional[str] = None,
                    iterations: Optional[int] = None) -> Path:
        """
        Train one stage of one architecture.

        The RMA student is distilled from the expert's Stage 3 checkpoint, and A-RMA finetunes the
        student's Stage 3 checkpoint; both exist on Stage 3 only.

        :param stage: 1, 2 or 3.
        :type stage: int
        :param kind: Architecture or its command-line alias.
        :type kind: str
        :param mode: Goal mode, ``flat`` or ``terrain``.
        :type mode: str
        :param seed: Master seed.
        :type seed: int
        :param iterations: Override of the configured iteration (or distillation round) count.
        :type iterations: Optional[int]
        :return: The final checkpoint.
        :rtype: pathlib.Path
        :raises exceptions.PrerequisiteError: If the stage this one builds on was not trained.
        """
        kind = PolicyKind.parse(kind)
        if stage not in self.config.training.iterations:
            raise exceptions.ConfigError(f"stage must be 1, 2 or 3, got {stage}")
        if mode not in GoalMode.all:
            raise exceptions.ConfigError(f"mode must be one of {', '.join(GoalMode.all)}, got {mode!r}")
        if kind in PolicyKind.students and stage != 3:
            raise exceptions.ArchitectureError(f"{kind} is derived from a Stage 3 expert, train it with stage 3")
        if kind == PolicyKind.rma_student:
            return await self.distill(mode, seed, single_goal, perturb, encoder, iterations)
        if kind == PolicyKind.arma:
            return await self.finetune(mode, seed, single_goal, perturb, iterations)
        final, _ = await train_stage(self.config, stage, kind, self.layout.out_dir, mode, seed, single_goal, perturb,
                                     encoder, iterations, self.reference(), self.executor, logger=self.logger,
                                     incidents=self.incidents)
        return final

    async def distill(self, mode: str = GoalMode.flat, seed: int = 0, single_goal: bool = False,
                      perturb: bool = False, encoder: Optional[str] = None, rounds: Optional[int] = None) -> Path:
        """
        Distill an RMA student from the Stage 3 expert of the same run settings.

        Writes the student checkpoint (with the expert's critic, for finetuning) and the
        per-round regression errors.
        """
        source = self._final(PolicyKind.expert, mode, seed, 3, single_goal, perturb)
        self._require(source, "distilling an RMA student")
        expert, value = self.load_policy(source, PolicyKind.expert)
        cfg = copy.copy(self.config.training.distill)
        if rounds is not None:
            cfg.iterations = rounds
        reference = self.reference()
        workers = [RolloutWorker(JumpEnv(self.config, 3, mode, seed, worker=i, single_goal=single_goal,
                                         perturb=perturb, reference=reference, logger=self.logger))
                   for i in range(self.config.ppo.n_envs)]

        def collect(policy: Policy, n: int, round_: int):
            nonlocal workers
            batch, workers = collect_observations(workers, policy, value, n, round_ + 1, self.config.ppo,
                                                  self.executor)
            return batch

        student, rows = distill_student(expert, collect, cfg, self.config.network, seed, encoder, self.logger)
        stage_dir = self.layout.stage_dir(PolicyKind.rma_student, mode, seed, 3, single_goal, perturb)
        stage_dir.mkdir(parents=True, exist_ok=True)
        final = stage_dir / RunLayout.FINAL_CHECKPOINT
        checkpoint.save(final, checkpoint_tensors(student, value))
        files.write_rows(stage_dir / RunLayout.DISTILL_METRICS, DistillColumns.all, rows)
        files.write_json(stage_dir / RunLayout.RUN_INFO, {
            "kind": PolicyKind.rma_student, "stage": 3, "mode": mode, "seed": seed, "single_goal": single_goal,
            "perturb": perturb, "encoder": student.variant, "rounds": cfg.iterations, "expert": str(source),
            "base_checksum": checkpoint.checksum(expert.state_dict(), f"{PolicyKind.expert}/{Part.base}/"),
            "config": self.config.to_dict(),
        })
        return final

    async def finetune(self, mode: str = GoalMode.flat, seed: int = 0, single_goal: bool = False,
                       perturb: bool = False, iterations: Optional[int] = None) -> Path:
        """Finetune the distilled student's base MLP with PPO, its encoder frozen (A-RMA)."""
        source = self._final(PolicyKind.rma_student, mode, seed, 3, single_goal, perturb)
        self._require(source, "A-RMA finetuning")
        student, value = self.load_policy(source, PolicyKind.rma_student)
        if value is None:
            raise exceptions.CheckpointError(f"{source} has no critic to finetune with")
        _, final = await finetune_arma(self.config, student, value, self.layout.out_dir, mode, seed, iterations,
                                       single_goal=single_goal, perturb=perturb, reference=self.reference(),
                                       executor=self.executor, logger=self.logger, incidents=self.incidents)
        return final

    async def eval(self, checkpoint_path: Union[str, Path], goals: Sequence[Goal], seeds: Sequence[int],
                   kind: Optional[str] = None) -> dict:
        """
        Landing accuracy of a checkpoint on every (goal, seed) pair. Writes ``eval.json`` and one
        trace per trial.

        :return: The summary and the per-trial reports.
        :rtype: dict
        """
        policy, _ = self.load_policy(checkpoint_path, kind)
        reports = await eval_landing(self.config, policy, goals, seeds, self.layout.out_dir, self.reference(),
                                     self.executor, self.logger)
        result = {"checkpoint": str(checkpoint_path), "kind": policy.kind,
                  "summary": summarize(reports, self.config.harness.min_flight),
                  "reports": [r.to_dict() for r in reports]}
        files.write_json(self.layout.out_dir / RunLayout.EVAL_REPORT, result)
        s = result["summary"]
        self.logger.info(f"Evaluated {policy.kind}: {s['successes']}/{s['trials']} successes")
        return result

    async def robustness(self, checkpoint_path: Union[str, Path], scenario: Union[str, RobustnessScenario],
                         magnitude: Optional[float] = None, trials: int = 20, kind: Optional[str] = None) -> dict:
        """
        Survival of a checkpoint under a disturbance. Writes ``robustness.json`` and the traces.

        :param scenario: A scenario, or the name of one with ``magnitude`` (the configured default if omitted).
        """
        if isinstance(scenario, str):
            try:
                scenario = make_scenario(self.config, scenario, magnitude)
            except ValueError as e:
                raise exceptions.ConfigError(str(e))
        policy, _ = self.load_policy(checkpoint_path, kind)
        result = await run_robustness(self.config, policy, scenario, trials, self.layout.out_dir, self.reference(),
                                      self.executor, self.logger)
        result["checkpoint"] = str(checkpoint_path)
        files.write_json(self.layout.out_dir / RunLayout.ROBUSTNESS_REPORT, result)
        self.logger.info(f"{scenario.kind} {scenario.magnitude}: {result['survived']}/{trials} survived, "
                         f"{result['recovered_by_retargeting']} recovered by retargeting")
        return result

    def replay(self, trace_path: Union[str, Path]) -> int:
        """
        Re-simulate a recorded trace from its sidecar and check every recorded state, reward and
        termination flag bit for bit.

        :return: The number of steps verified.
        :raises exceptions.ReplayMismatchError: At the first differing value.
        """
        meta, rows = files.read_trace(trace_path)
        try:
            config = config_from_dict(meta["config"])
            scenario = RobustnessScenario(**meta["scenario"]) if meta.get("scenario") else None
            goal = Goal.from_row(meta["goal"]) if meta.get("goal") else None
            env = JumpEnv(config, meta["stage"], meta["mode"], meta["seed"], meta["worker"], meta["single_goal"],
                          meta["perturb"], reference=self.reference(config), evaluation=meta["evaluation"],
                          max_steps=meta["max_steps"], record=True, logger=self.logger)
            episode = meta["episode"]
        except (KeyError, TypeError) as e:
            raise exceptions.ConfigError(f"the sidecar of {trace_path} is incomplete: {e}")
        robot, wrench, perturbation = scenario_inputs(config, scenario)
        env.reset(episode=episode, goal=goal, robot=robot, wrench=wrench, perturbation=perturbation)
        c = TraceColumns
        checked = c.q + c.qd + (c.reward, c.termination)
        for row in rows:
            env.step(np.array([row[name] for name in c.action]))
            replayed = env.trace[-1]
            for name in checked:
                if replayed[name] != row[name]:
                    raise exceptions.ReplayMismatchError(f"step {row[c.step]} {name}: trace {row[name]!r}, "
                                                         f"replay {replayed[name]!r}")
        self.logger.info(f"Replayed {len(rows)} steps of {trace_path} exactly")
        return len(rows)

    def export_reference(self, path: Optional[Union[str, Path]] = None) -> Path:
        """Write the reference jump as CSV, ``reference.csv`` under the output directory by default."""
        path = Path(path) if path is not None else self.layout.out_dir / RunLayout.REFERENCE_CSV
        path.parent.mkdir(parents=True, exist_ok=True)
        to_csv(self.reference(), path)
        return path

    async def curriculum(self, kind: str, mode: str = GoalMode.flat, seed: int = 0, stages: int = 3,
                         single_goal: bool = False, perturb: bool = False, encoder: Optional[str] = None,
                         iterations: Optional[int] = None) -> Path:
        """
        Train Stages 1 to ``stages`` in order, skipping stages whose final checkpoint exists.
        Students are produced from an expert trained through Stage 3 first.
        """
        kind = PolicyKind.parse(kind)
        if kind in PolicyKind.students:
            if stages != 3:
                raise exceptions.ArchitectureError(f"{kind} needs all three stages")
            await self.curriculum(PolicyKind.expert, mode, seed, 3, single_goal, perturb, encoder, iterations)
            if kind == PolicyKind.arma:
                await self.curriculum(PolicyKind.rma_student, mode, seed, 3, single_goal, perturb, encoder, iterations)
            final = self._final(kind, mode, seed, 3, single_goal, perturb)
            if final.exists():
                return final
            return await self.train(3, kind, mode, seed, single_goal, perturb, encoder, iterations)
        final = None
        for stage in range(1, stages + 1):
            final = self._final(kind, mode, seed, stage, single_goal, perturb)
            if not final.exists():
                await self.train(stage, kind, mode, seed, single_goal, perturb, encoder, iterations)
        return final

    async def run_ablation(self, kinds: Sequence[str], seeds: Sequence[int], stages: int = 2,
                           mode: str = GoalMode.flat, iterations: Optional[int] = None) -> dict:
        """
        Train every (kind, seed) through ``stages`` and compare their final normalized returns.

        The orderings are reported as flags, never raised: ``ours`` at least as good as the
        long-only and short-only kinds, ``residual`` the worst of those four, and A-RMA at least as
        good as the RMA student. Writes ``ablation.json``.
        """
        kinds = sorted({PolicyKind.parse(k) for k in kinds}, key=PolicyKind.all.index)
        episodes = self.config.harness.return_episodes
        returns: Dict[str, Dict[int, float]] = {}
        for kind in kinds:
            returns[kind] = {}
            for seed in seeds:
                final = await self.curriculum(kind, mode, seed, stages, iterations=iterations)
                policy, _ = self.load_policy(final, kind)
                returns[kind][seed] = await policy_return(self.config, policy, stages, mode, seed, episodes,
                                                          reference=self.reference(), executor=self.executor)
                self.logger.info(f"Ablation {kind} seed {seed}: normalized return {returns[kind][seed]:.4f}")
        means = {kind: float(np.mean(list(r.values()))) for kind, r in returns.items()}
        result = {"stages": stages, "mode": mode, "seeds": list(seeds), "episodes": episodes,
                  "normalized_returns": {k: {str(s): v for s, v in r.items()} for k, r in returns.items()},
                  "mean_normalized_returns": means, "checks": ablation_checks(means, returns)}
        files.write_json(self.layout.out_dir / RunLayout.ABLATION_REPORT, result)
        for name, check in result["checks"].items():
            if not check["holds"]:
                self.logger.warning(f"Ablation ordering {name} does not hold: {check['detail']}")
        return result


def ablation_checks(means: Dict[str, float], returns: Dict[str, Dict[int, float]]) -> Dict[str, dict]:
    """The expected orderings that can be evaluated from the kinds present."""
    k = PolicyKind
    checks = {}

    def seed_detail(kinds: List[str]) -> str:
        return "; ".join(f"{kind}: " + ", ".join(f"seed {s} {v:.4f}" for s, v in sorted(returns[kind].items()))
                         for kind in kinds)

    if k.ours in means and (k.long_only in means or k.short_only in means):
        others = [x for x in (k.long_only, k.short_only) if x in means]
        checks["ours_at_least_single_history"] = {
            "holds": means[k.ours] >= max(means[x] for x in others), "detail": seed_detail([k.ours] + others)}
    group = [x for x in (k.ours, k.long_only, k.short_only, k.residual) if x in means]
    if k.residual in means and len(group) > 1:
        checks["residual_lowest"] = {
            "holds": means[k.residual] <= min(means[x] for x in group), "detail": seed_detail(group)}
    if k.arma in means and k.rma_student in means:
        checks["arma_at_least_rma"] = {
            "holds": means[k.arma] >= means[k.rma_student], "detail": seed_detail([k.rma_student, k.arma])}
    return checks
