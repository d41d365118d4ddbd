import math
from typing import Dict

from .. import exceptions
from .goal import GoalRanges
from .section import Section

STAGES = (1, 2, 3)


class EpisodeConfigAttributes:
    max_steps = "max_steps"
    foot_bound = "foot_bound_m"

    class TaskBound:
        section = "task_bound"
        position = "position_m"
        heading = "heading_deg"


class EnvConfigAttributes:
    lpf_beta = "lpf_beta"
    short_history = "short_history_steps"
    long_history = "long_history_steps"
    preview_steps = "preview_steps"
    fall_height = "fall_height_m"
    task_grace = "task_grace_s"
    standing_interval = "standing_interval_s"
    planar = "planar"
    goals = "goals"
    stages = "stages"


class EpisodeConfig:
    """
    Episode lifecycle settings of one training stage.

    :ivar int stage: 1, 2 or 3.
    :ivar int max_steps: Policy steps before timeout.
    :ivar float duration: T_J (s).
    :ivar float fall_height: Pelvis height above the terrain that counts as a fall (m).
    :ivar float foot_bound: E_e (m).
    :ivar Tuple[float, float] task_bound: E_t as (m, rad).
    :ivar float task_grace: Time after a touchdown before the task bound applies (s).
    :ivar Tuple[float, float] standing_interval: (lo, hi) s.
    :ivar GoalRanges goal_ranges: Stage 2/3 goal ranges.
    :ivar bool single_goal: Pin Stage 2/3 goals to zero.
    :ivar bool planar: Pin c_y and c_phi to zero.
    """

    def __init__(self, stage: int, stage_section: Section, env: "EnvConfig", duration: float,
                 single_goal: bool = False):
        a = EpisodeConfigAttributes
        self.stage = stage
        self.max_steps = stage_section.integer(a.max_steps, positive=True)
        self.foot_bound = stage_section.number(a.foot_bound, positive=True)
        t = stage_section.sub(a.TaskBound.section)
        self.task_bound = (t.number(a.TaskBound.position, positive=True),
                           math.radians(t.number(a.TaskBound.heading, positive=True)))
        self.duration = duration
        self.fall_height = env.fall_height
        self.task_grace = env.task_grace
        self.standing_interval = env.standing_interval
        self.goal_ranges = env.goal_ranges
        self.planar = env.planar
        self.single_goal = single_goal

    @property
    def jumps_at_start(self) -> bool:
        """Stage 1 jumps at t = 0; later stages start with a standing interval."""
        return self.stage == 1

    @property
    def randomized(self) -> bool:
        return self.stage == 3


class EnvConfig:
    """
    Environment settings shared by every stage.

    :ivar float lpf_beta: Action low-pass filter coefficient.
    :ivar int short_history: Policy steps in the short I/O history.
    :ivar int long_history: Policy steps in the long I/O history.
    :ivar Tuple[int, ...] preview_steps: Future reference samples in the preview.
    """

    def __init__(self, env):
        a = EnvConfigAttributes
        e = env if isinstance(env, Section) else Section(env, "env")
        self.lpf_beta = e.number(a.lpf_beta, nonneg=True)
        if self.lpf_beta >= 1.0:
            raise exceptions.ConfigError(f"{e.where(a.lpf_beta)} must be < 1, got {self.lpf_beta}")
        self.short_history = e.integer(a.short_history, positive=True)
        self.long_history = e.integer(a.long_history, positive=True)
        self.preview_steps = tuple(e.integers(a.preview_steps))
        self.fall_height = e.number(a.fall_height, positive=True)
        self.task_grace = e.number(a.task_grace, nonneg=True)
        self.standing_interval = e.pair(a.standing_interval)
        if self.standing_interval[0] <= 0:
            raise exceptions.ConfigError(f"{e.where(a.standing_interval)} must be positive")
        self.planar = e.flag(a.planar)
        self.goal_ranges = GoalRanges(e.sub(a.goals))

        stages = e.sub(a.stages)
        self._stage_sections: Dict[int, Section] = {s: stages.sub(f"stage{s}") for s in STAGES}

    def episode(self, stage: int, duration: float, single_goal: bool = False) -> EpisodeConfig:
        if stage not in STAGES:
            raise exceptions.ConfigError(f"stage must be one of 1, 2, 3, got {stage}")
        return EpisodeConfig(stage, self._stage_sections[stage], self, duration, single_goal)
