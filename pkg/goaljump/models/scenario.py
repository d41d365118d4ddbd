from dataclasses import asdict, dataclass, field
from typing import Optional

from .. import exceptions
from .goal import Goal
from .section import Section


class ScenarioKind:
    constant_force = "constant_force"
    com_offset = "com_offset"
    wrench_pulse = "wrench_pulse"
    all = (constant_force, com_offset, wrench_pulse)


@dataclass(frozen=True)
class RobustnessScenario:
    """
    A disturbance applied for a whole evaluation episode.

    :ivar str kind: One of :class:`ScenarioKind`.
    :ivar float magnitude: N for ``constant_force`` (horizontal), m for ``com_offset`` (added to
        every link COM in x and z), and the force bound in N for ``wrench_pulse`` (moment bound
        scaled by the training ratio).
    :ivar Goal goal: Commanded goal, jump in place by default.
    :ivar bool out_of_distribution: Whether the magnitude lies outside the training ranges.
    """
    kind: str
    magnitude: float
    goal: Goal = field(default_factory=Goal)
    out_of_distribution: bool = False


@dataclass
class EvalReport:
    """
    The outcome of one evaluation trial.

    :ivar Goal goal: Commanded goal.
    :ivar int seed: Episode seed.
    :ivar float position_error: Landing position error against the goal (m).
    :ivar float orientation_error: Landing orientation error (rad).
    :ivar bool success: Within E_t (closed bound).
    :ivar bool survived: Did not fall.
    :ivar float landing_displacement: Distance from the commanded target at the measurement instant (m).
    :ivar bool recovered_by_retargeting: Survived, but landed beyond E_t.
    :ivar float flight_time_s: Longest interval with both feet force-free.
    :ivar int steps: Policy steps run.
    :ivar Optional[str] trace: Path of the recorded trace.
    """
    goal: Goal
    seed: int
    position_error: float
    orientation_error: float
    success: bool
    survived: bool
    landing_displacement: float = 0.0
    recovered_by_retargeting: bool = False
    flight_time_s: float = 0.0
    steps: int = 0
    trace: Optional[str] = None

    def __post_init__(self):
        if self.success and not self.survived:
            raise ValueError("a trial cannot succeed without surviving")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["goal"] = self.goal.to_row()
        return d


class HarnessConfigAttributes:
    workers = "workers"
    record_wall_clock = "record_wall_clock"
    post_settle = "post_settle_s"
    eval_max_steps = "eval_max_steps"
    incident_log_freq = "incident_log_freq_s"
    incident_min_count = "incident_min_count"
    cache_max_size = "cache_max_size"
    min_flight = "min_flight_s"
    return_episodes = "return_episodes"

    class Scenarios:
        section = "scenarios"
        constant_force = "constant_force_n"
        com_offset = "com_offset_m"
        wrench_pulse = "wrench_pulse_n"


class HarnessConfig:
    """
    Orchestration settings.

    :ivar int workers: Worker processes, 0 runs everything in-process.
    :ivar bool record_wall_clock: Write wall-clock seconds into metrics files.
    :ivar float post_settle: Seconds after the last touchdown at which landing error is measured.
    :ivar int eval_max_steps: Policy steps of an evaluation episode.
    :ivar float min_flight: Shortest interval with both feet force-free that counts as a flight phase (s).
    :ivar int return_episodes: Deterministic episodes behind a final normalized return in ablation reports.
    """

    def __init__(self, harness):
        a = HarnessConfigAttributes
        h = harness if isinstance(harness, Section) else Section(harness, "harness")
        self.workers = h.integer(a.workers)
        if self.workers < 0:
            raise exceptions.ConfigError(f"{h.where(a.workers)} must be >= 0, got {self.workers}")
        self.record_wall_clock = h.flag(a.record_wall_clock)
        self.post_settle = h.number(a.post_settle, positive=True)
        self.eval_max_steps = h.integer(a.eval_max_steps, positive=True)
        self.incident_log_freq = h.number(a.incident_log_freq, nonneg=True)
        self.incident_min_count = h.integer(a.incident_min_count, positive=True)
        self.cache_max_size = h.integer(a.cache_max_size, positive=True)
        self.min_flight = h.number(a.min_flight, positive=True)
        self.return_episodes = h.integer(a.return_episodes, positive=True)
        s = h.sub(a.Scenarios.section)
        self.default_magnitudes = {
            ScenarioKind.constant_force: s.number(a.Scenarios.constant_force),
            ScenarioKind.com_offset: s.number(a.Scenarios.com_offset),
            ScenarioKind.wrench_pulse: s.number(a.Scenarios.wrench_pulse, nonneg=True),
        }
