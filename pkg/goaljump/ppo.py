"""
Synchronous PPO with GAE, and the stage-by-stage curriculum.

Collection and update phases alternate. During collection every worker steps its own
environment with a read-only copy of the networks; results are concatenated in worker order,
so a run is reproducible for a fixed seed and worker count regardless of scheduling.
"""
import asyncio
import logging
import sys
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint
from . import exceptions
from . import files
from .arch import (ObservationBatch, Policy, PolicyKind, ValueNetwork, action_postprocess, build_policy,
                   build_value, checkpoint_tensors, restore, to_arma)
from .config import Config
from .env import JumpEnv, Termination, observation_dims
from .files import MetricsColumns
from .incidents import IncidentLog
from .layout import RunLayout
from .models.goal import GoalMode
from .models.training import PpoConfig
from .nn import Adam, clip_grad_norm
from .reference import ReferenceMotion


async def gather_jobs(executor: Optional[Executor], func: Callable, jobs: Sequence[tuple]) -> list:
    """
    Run ``func(*job)`` for every job, on ``executor`` if given, else in-process one after another.
    Results come back in job order.
    """
    if executor is None:
        return [func(*job) for job in jobs]
    loop = asyncio.get_running_loop()
    return list(await asyncio.gather(*(loop.run_in_executor(executor, func, *job) for job in jobs)))


def map_jobs(executor: Optional[Executor], func: Callable, jobs: Sequence[tuple]) -> list:
    """The blocking counterpart of :func:`gather_jobs`."""
    if executor is None:
        return [func(*job) for job in jobs]
    return list(executor.map(func, *zip(*jobs)))


@dataclass
class RolloutBatch:
    """
    One iteration's samples, in worker order.

    :ivar ObservationBatch observations: Observation before each action.
    :ivar np.ndarray actions: (N, 4) raw network actions.
    :ivar np.ndarray log_probs: (N,) log-probabilities under the collecting policy.
    :ivar np.ndarray rewards: (N,)
    :ivar np.ndarray values: (N,) critic predictions.
    :ivar np.ndarray dones: (N,) the episode ended after this step.
    :ivar np.ndarray truncated: (N,) it ended for a reason other than the task (timeout, divergence).
    :ivar np.ndarray advantages: (N,)
    :ivar np.ndarray returns: (N,) advantages + values.
    :ivar List[float] episode_returns: Returns of the episodes that ended during collection.
    :ivar List[int] episode_lengths: Their lengths.
    :ivar List[str] terminations: Their termination flags.
    :ivar Dict[str, int] incidents: Incident counts from the workers.
    """
    observations: ObservationBatch
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    truncated: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    episode_returns: List[float] = field(default_factory=list)
    episode_lengths: List[int] = field(default_factory=list)
    terminations: List[str] = field(default_factory=list)
    incidents: Dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.rewards)

    @classmethod
    def concatenate(cls, batches: Sequence["RolloutBatch"]) -> "RolloutBatch":
        arrays = {name: np.concatenate([getattr(b, name) for b in batches])
                  for name in ("actions", "log_probs", "rewards", "values", "dones", "truncated", "advantages",
                               "returns")}
        incidents: Dict[str, int] = {}
        for b in batches:
            for kind, count in b.incidents.items():
                incidents[kind] = incidents.get(kind, 0) + count
        return cls(observations=ObservationBatch.concatenate([b.observations for b in batches]),
                   episode_returns=[r for b in batches for r in b.episode_returns],
                   episode_lengths=[n for b in batches for n in b.episode_lengths],
                   terminations=[t for b in batches for t in b.terminations],
                   incidents=incidents, **arrays)


def gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0,
        bootstrap: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over one worker's segment.

    ``delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t`` and
    ``A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}``. When an episode is cut short, the
    value of the state it was cut at is passed in ``bootstrap`` and added as
    ``gamma * bootstrap_t * done_t``.

    :param rewards: (T,)
    :param values: (T,) V(s_t).
    :param dones: (T,) the episode ended after step t.
    :param last_value: V of the state after the final step, used when that step is not done.
    :param bootstrap: (T,) values of truncated next states, 0 on true terminations.
    :return: (advantages, returns)
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    advantages = np.zeros(n)
    next_value = float(last_value)
    next_advantage = 0.0
    for t in reversed(range(n)):
        if dones[t]:
            end = 0.0 if bootstrap is None else float(bootstrap[t])
            advantages[t] = rewards[t] + gamma * end - values[t]
        else:
            delta = rewards[t] + gamma * next_value - values[t]
            advantages[t] = delta + gamma * lam * next_advantage
        next_advantage = advantages[t]
        next_value = values[t]
    return advantages, advantages + values


def normalized_return(returns, max_steps: int) -> np.ndarray:
    """Episode returns divided by the maximum episode length."""
    if max_steps <= 0:
        raise ValueError(f"max_steps must be > 0, got {max_steps}")
    return np.asarray(returns, dtype=np.float64) / max_steps


def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray, clip: float) -> np.ndarray:
    """Per-sample ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``."""
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


@dataclass
class RolloutWorker:
    """An environment plus the running totals of its unfinished episode."""
    env: JumpEnv
    episode_return: float = 0.0
    episode_length: int = 0


def collect_segment(worker: RolloutWorker, policy: Policy, value: ValueNetwork, steps: int, iteration: int,
                    gamma: float, lam: float) -> Tuple[RolloutBatch, RolloutWorker]:
    """
    Step one environment ``steps`` times with a sampled policy and compute its advantages.

    Runs in a worker process when collection is parallel, so everything it needs is passed in and
    the worker (with its environment) is handed back.
    """
    env = worker.env
    # counts only; the trainer merges them and does the warning
    env.incidents = IncidentLog(env.logger, min_count_for_log=sys.maxsize)
    rng = np.random.default_rng([env.seed, env.worker, iteration, 1])
    observation = env.reset() if env.terminated else env.observation()

    observations, next_observations = [], {}
    actions = np.zeros((steps, policy.head.size))
    log_probs = np.zeros(steps)
    rewards = np.zeros(steps)
    dones = np.zeros(steps, dtype=bool)
    truncated = np.zeros(steps, dtype=bool)
    episode_returns, episode_lengths, terminations = [], [], []
    for t in range(steps):
        observations.append(observation)
        action, mean = policy.act(observation, rng)
        actions[t] = action
        log_probs[t] = policy.head.log_prob(mean, action)
        transition = env.step(action_postprocess(policy.kind, action, env.reference, env.ref_step))
        rewards[t] = transition.reward
        worker.episode_return += transition.reward
        worker.episode_length += 1
        if transition.done:
            dones[t] = True
            truncated[t] = transition.truncated
            if transition.truncated:
                next_observations[t] = transition.observation
            episode_returns.append(worker.episode_return)
            episode_lengths.append(worker.episode_length)
            terminations.append(transition.termination)
            worker.episode_return, worker.episode_length = 0.0, 0
            observation = env.reset()
        else:
            observation = transition.observation

    batch = ObservationBatch.stack(observations)
    values = value.predict(batch)
    last_value = float(value.predict(ObservationBatch.stack([observation]))[0])
    bootstrap = np.zeros(steps)
    if next_observations:
        index = sorted(next_observations)
        bootstrap[index] = value.predict(ObservationBatch.stack([next_observations[i] for i in index]))
    advantages, returns = gae(rewards, values, dones, gamma, lam, last_value, bootstrap)
    segment = RolloutBatch(batch, actions, log_probs, rewards, values, dones, truncated, advantages, returns,
                           episode_returns, episode_lengths, terminations, dict(env.incidents.counts))
    return segment, worker


def collect_observations(workers: List[RolloutWorker], policy: Policy, value: ValueNetwork, n_samples: int,
                         iteration: int, cfg: PpoConfig,
                         executor: Optional[Executor] = None) -> Tuple[ObservationBatch, List[RolloutWorker]]:
    """
    At least ``n_samples`` observations from rollouts of ``policy`` split evenly over ``workers``,
    truncated to ``n_samples``.

    :return: (observations, the workers to pass to the next call)
    """
    steps = -(-n_samples // len(workers))
    jobs = [(w, policy, value, steps, iteration, cfg.gamma, cfg.lam) for w in workers]
    policy.clear_cache()
    results = map_jobs(executor, collect_segment, jobs)
    batch = ObservationBatch.concatenate([segment.observations for segment, _ in results])
    return batch[:n_samples], [worker for _, worker in results]


def ppo_update(policy: Policy, value: ValueNetwork, batch: RolloutBatch, cfg: PpoConfig, optimizer: Adam,
               rng: np.random.Generator, incidents: Optional[IncidentLog] = None) -> Dict[str, float]:
    """
    Run ``cfg.epochs`` passes of clipped-surrogate and value-regression steps over a batch.

    Only the policy's unfrozen parts and the critic are updated. A minibatch whose loss is not
    finite is skipped and counted as an incident.

    :return: Mean policy loss, value loss, approximate KL, clip fraction and gradient norm over
        the applied steps, and the number of skipped steps.
    """
    n = len(batch)
    advantages = batch.advantages
    if cfg.normalize_advantages and n > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    tensors = policy.trainable() + list(value.named_tensors(policy.kind))
    stats = {"policy_loss": [], "value_loss": [], "approx_kl": [], "clip_fraction": [], "grad_norm": []}
    skipped = 0
    entropy = policy.head.entropy()
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            index = order[start:start + cfg.minibatch_size]
            m = len(index)
            observations = batch.observations[index]
            actions = batch.actions[index]
            adv = advantages[index]

            mean = policy.forward(observations)
            log_prob = policy.head.log_prob(mean, actions)
            ratio = np.exp(log_prob - batch.log_probs[index])
            surrogate = clipped_surrogate(ratio, adv, cfg.clip)
            policy_loss = -float(np.mean(surrogate))
            v = value.forward(observations)
            value_loss = float(np.mean((v - batch.returns[index]) ** 2))
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not np.isfinite(loss):
                policy.clear_cache()
                value.net.clear_cache()
                skipped += 1
                if incidents is not None:
                    incidents.record("Skipped updates", f"{policy.kind} loss {loss}")
                continue

            # the min picks the unclipped term, which carries the gradient, unless clipping lowered it
            unclipped = ratio * adv <= np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
            d_log_prob = -adv * ratio * unclipped / m
            policy.zero_grad()
            value.net.zero_grad()
            policy.backward(d_log_prob[:, None] * policy.head.log_prob_grad(mean, actions))
            value.backward(cfg.value_coef * 2.0 * (v - batch.returns[index]) / m)
            norm = clip_grad_norm(tensors, cfg.max_grad_norm)
            optimizer.step()

            stats["policy_loss"].append(policy_loss)
            stats["value_loss"].append(value_loss)
            stats["approx_kl"].append(float(np.mean(batch.log_probs[index] - log_prob)))
            stats["clip_fraction"].append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip)))
            stats["grad_norm"].append(norm)
    result = {k: float(np.mean(v)) if v else float("nan") for k, v in stats.items()}
    result["skipped"] = skipped
    return result


def metrics_row(batch: RolloutBatch, iteration: int, stage: int, kind: str, seed: int, max_steps: int,
                wall_clock: Optional[float] = None) -> dict:
    """
    One metrics line. Return and length cells are empty if no episode ended during the iteration.
    Divergences count towards none of the termination fractions.
    """
    c = MetricsColumns
    row = {c.iteration: iteration, c.stage: stage, c.arch: kind, c.seed: seed, c.wall_clock: wall_clock}
    if batch.episode_returns:
        mean_return = float(np.mean(batch.episode_returns))
        row[c.mean_return] = mean_return
        row[c.normalized_return] = float(normalized_return(mean_return, max_steps))
        row[c.mean_episode_len] = float(np.mean(batch.episode_lengths))
        total = len(batch.terminations)
        for column, reason in zip(c.fraction_terminated_by, Termination.reasons):
            row[column] = batch.terminations.count(reason) / total
    return row


class PpoTrainer:
    """
    Trains one policy on one stage.

    :param config: The complete configuration.
    :type config: :class:`Config <goaljump.config.Config>`
    :param policy: The policy to train; its frozen parts stay untouched.
    :type policy: :class:`Policy <goaljump.arch.Policy>`
    :param value: Its critic.
    :type value: :class:`ValueNetwork <goaljump.arch.ValueNetwork>`
    :param stage: Curriculum stage of the environments.
    :type stage: int
    :param mode: Goal mode.
    :type mode: str
    :param seed: Master seed.
    :type seed: int
    :param single_goal: Pin Stage 2/3 goals to zero.
    :type single_goal: bool
    :param perturb: Random base wrenches during training.
    :type perturb: bool
    :param reference: The reference jump shared by every environment.
    :type reference: Optional[:class:`ReferenceMotion <goaljump.reference.ReferenceMotion>`]
    :param executor: Process pool for collection, in-process if None.
    :type executor: Optional[:class:`concurrent.futures.Executor`]
    :param logger: A custom logger to use, defaults to the ``goaljump`` logger.
    :type logger: :class:`logging.Logger`, optional
    :param incidents: Where divergences and skipped updates are counted.
    :type incidents: Optional[:class:`IncidentLog <goaljump.incidents.IncidentLog>`]
    """

    def __init__(self, config: Config, policy: Policy, value: ValueNetwork, stage: int, mode: str = GoalMode.flat,
                 seed: int = 0, single_goal: bool = False, perturb: bool = False,
                 reference: Optional[ReferenceMotion] = None, executor: Optional[Executor] = None,
                 logger: logging.Logger = logging.getLogger("goaljump"), incidents: Optional[IncidentLog] = None):
        self.config = config
        self.cfg = config.ppo
        self.policy = policy
        self.value = value
        self.stage = stage
        self.seed = seed
        self.executor = executor
        self.logger = logger
        self.incidents = incidents or IncidentLog(logger)
        self.workers = [RolloutWorker(JumpEnv(config, stage, mode, seed, worker=i, single_goal=single_goal,
                                              perturb=perturb, reference=reference, logger=logger))
                        for i in range(self.cfg.n_envs)]
        self.max_steps = self.workers[0].env.max_steps
        self.optimizer = Adam(policy.trainable() + list(value.named_tensors(policy.kind)), self.cfg.learning_rate)

    async def collect(self, iteration: int) -> RolloutBatch:
        """Collect ``batch_size`` samples, ``steps_per_env`` from every environment."""
        self.policy.clear_cache()
        self.value.net.clear_cache()
        jobs = [(w, self.policy, self.value, self.cfg.steps_per_env, iteration, self.cfg.gamma, self.cfg.lam)
                for w in self.workers]
        results = await gather_jobs(self.executor, collect_segment, jobs)
        self.workers = [worker for _, worker in results]
        batch = RolloutBatch.concatenate([segment for segment, _ in results])
        self.incidents.merge(batch.incidents)
        return batch

    def update(self, batch: RolloutBatch, iteration: int) -> Dict[str, float]:
        rng = np.random.default_rng([self.seed, self.stage, iteration, 2])
        return ppo_update(self.policy, self.value, batch, self.cfg, self.optimizer, rng, self.incidents)

    async def train(self, iterations: int, out: Optional[Path] = None, checkpoint_every: Optional[int] = None,
                    record_wall_clock: bool = False) -> List[dict]:
        """
        Alternate collection and updates.

        :param iterations: Number of iterations.
        :param out: Directory for intermediate checkpoints, none are written if omitted.
        :param checkpoint_every: Iterations between intermediate checkpoints.
        :param record_wall_clock: Put the elapsed seconds into the metrics rows.
        :return: One metrics row per iteration.
        """
        rows = []
        start = time.perf_counter()
        for it in range(iterations):
            batch = await self.collect(it)
            stats = self.update(batch, it)
            row = metrics_row(batch, it, self.stage, self.policy.kind, self.seed, self.max_steps,
                              time.perf_counter() - start if record_wall_clock else None)
            rows.append(row)
            self.logger.info(f"Stage {self.stage} {self.policy.kind} iteration {it}: "
                             f"normalized return {row.get(MetricsColumns.normalized_return)}, "
                             f"value loss {stats['value_loss']:.4g}, kl {stats['approx_kl']:.3g}")
            if out is not None and checkpoint_every and (it + 1) % checkpoint_every == 0:
                checkpoint.save(out / RunLayout.checkpoint_name(it + 1), self.tensors())
        return rows

    def tensors(self) -> Dict[str, np.ndarray]:
        return checkpoint_tensors(self.policy, self.value)


def initial_networks(config: Config, layout: RunLayout, kind: str, stage: int, mode: str, seed: int,
                     single_goal: bool = False, perturb: bool = False,
                     encoder: Optional[str] = None) -> Tuple[Policy, ValueNetwork]:
    """
    Fresh networks for Stage 1, the previous stage's final checkpoint otherwise.

    :raises exceptions.PrerequisiteError: If the previous stage has no final checkpoint.
    """
    dims = observation_dims(config)
    if stage == 1:
        return build_policy(kind, dims, config.network, seed, encoder), build_value(dims, config.network, seed)
    previous = layout.stage_dir(kind, mode, seed, stage - 1, single_goal, perturb) / RunLayout.FINAL_CHECKPOINT
    if not previous.exists():
        raise exceptions.PrerequisiteError(f"stage {stage} of {kind} starts from {previous}, which does not exist; "
                                           f"train stage {stage - 1} first")
    policy, value = restore(checkpoint.load(previous), dims, config.network, kind, encoder)
    return policy, value or build_value(dims, config.network, seed)


async def train_stage(config: Config, stage: int, kind: str, out_dir, mode: str = GoalMode.flat, seed: int = 0,
                      single_goal: bool = False, perturb: bool = False, encoder: Optional[str] = None,
                      iterations: Optional[int] = None, reference: Optional[ReferenceMotion] = None,
                      executor: Optional[Executor] = None, initial: Optional[Tuple[Policy, ValueNetwork]] = None,
                      logger: logging.Logger = logging.getLogger("goaljump"),
                      incidents: Optional[IncidentLog] = None) -> Tuple[Path, List[dict]]:
    """
    Train one curriculum stage and write its checkpoints, metrics and run description.

    :param config: The complete configuration.
    :param stage: 1, 2 or 3.
    :param kind: Architecture.
    :param out_dir: Output root, laid out by :class:`RunLayout <goaljump.layout.RunLayout>`.
    :param iterations: Override of the configured iteration count.
    :param initial: Start from these networks instead of the previous stage's checkpoint.
    :return: (final checkpoint path, metrics rows)
    :raises exceptions.PrerequisiteError: If stage > 1 and the previous stage was not trained.
    """
    layout = RunLayout(out_dir)
    kind = PolicyKind.parse(kind)
    policy, value = initial or initial_networks(config, layout, kind, stage, mode, seed, single_goal, perturb,
                                                encoder)
    stage_dir = layout.stage_dir(kind, mode, seed, stage, single_goal, perturb)
    stage_dir.mkdir(parents=True, exist_ok=True)
    n = config.training.iterations[stage] if iterations is None else iterations
    logger.info(f"Training {kind} stage {stage} ({mode}, seed {seed}) for {n} iterations into {stage_dir}")

    trainer = PpoTrainer(config, policy, value, stage, mode, seed, single_goal, perturb, reference, executor,
                         logger, incidents)
    rows = await trainer.train(n, stage_dir, config.training.checkpoint_every, config.harness.record_wall_clock)
    final = stage_dir / RunLayout.FINAL_CHECKPOINT
    checkpoint.save(final, trainer.tensors())
    files.write_metrics(stage_dir / RunLayout.METRICS, rows)
    files.write_json(stage_dir / RunLayout.RUN_INFO, {
        "kind": kind, "stage": stage, "mode": mode, "seed": seed, "single_goal": single_goal, "perturb": perturb,
        "encoder": policy.variant, "iterations": n, "n_envs": config.ppo.n_envs, "frozen": sorted(policy.frozen),
        "incidents": dict(sorted(trainer.incidents.counts.items())), "config": config.to_dict(),
    })
    return final, rows


async def finetune_arma(config: Config, student: Policy, value: ValueNetwork, out_dir, mode: str = GoalMode.flat,
                        seed: int = 0, iterations: Optional[int] = None, **kwargs) -> Tuple[Policy, Path]:
    """
    Resume PPO on a distilled student's base MLP with its encoder frozen, on Stage 3.

    :return: (the A-RMA policy, its final checkpoint)
    """
    arma = to_arma(student)
    n = config.training.finetune_iterations if iterations is None else iterations
    final, _ = await train_stage(config, 3, PolicyKind.arma, out_dir, mode, seed, iterations=n, initial=(arma, value),
                                 **kwargs)
    return arma, final
