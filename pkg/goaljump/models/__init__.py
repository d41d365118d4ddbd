from .section import Section
from .robot import RobotModel, SensorModel, SimState, SimulationConfig
from .motion import ReferenceConfig
from .goal import Goal, GoalMode, GoalRanges
from .episode import EnvConfig, EpisodeConfig, STAGES
from .reward import COMPONENTS, RewardWeights
from .randomization import DynamicsSample, PerturbationConfig, RandomizationRanges
from .training import ConvSpec, DistillConfig, EncoderVariant, NetworkConfig, PpoConfig, TrainingSchedule
from .scenario import EvalReport, HarnessConfig, RobustnessScenario, ScenarioKind
