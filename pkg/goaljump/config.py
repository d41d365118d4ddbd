import copy
from pathlib import Path
from typing import Optional, Union

import yaml

from . import exceptions
from .models.episode import EnvConfig, EpisodeConfig
from .models.motion import ReferenceConfig
from .models.randomization import PerturbationConfig, RandomizationRanges
from .models.reward import RewardWeights
from .models.robot import RobotModel, SensorModel, SimulationConfig
from .models.scenario import HarnessConfig
from .models.section import Section
from .models.training import NetworkConfig, PpoConfig, TrainingSchedule

CONFIG_DIR = Path(__file__).parent / "config"
DEFAULT_CONFIG = CONFIG_DIR / "default.yaml"
FULL_SCALE_CONFIG = CONFIG_DIR / "full_scale.yaml"


class ConfigAttributes:
    robot = "robot"
    sensor = "sensor"
    simulation = "simulation"
    reference = "reference"
    env = "env"
    reward = "reward"
    randomization = "randomization"
    perturbation = "perturbation"
    network = "network"
    ppo = "ppo"
    training = "training"
    harness = "harness"


def deep_merge(base: dict, override: dict, path: str = "") -> dict:
    """
    Merge ``override`` into a copy of ``base``. Mappings merge key by key, anything else replaces.

    :raises exceptions.ConfigError: if ``override`` names a key ``base`` does not have, or replaces a
        mapping with a scalar.
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in merged:
            raise exceptions.ConfigError(f"unknown field {where}")
        if isinstance(merged[key], dict):
            if not isinstance(value, dict):
                raise exceptions.ConfigError(f"{where} must be a mapping, got {value!r}")
            merged[key] = deep_merge(merged[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def read_yaml(path: Union[str, Path]) -> dict:
    try:
        with open(path, "r", encoding="UTF-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise exceptions.ConfigError(f"cannot read {path}: {e.strerror}")
    except yaml.YAMLError as e:
        raise exceptions.ConfigError(f"{path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise exceptions.ConfigError(f"{path} must contain a mapping at the top level")
    return data


class Config:
    """
    The complete typed configuration.

    :ivar RobotModel robot: Nominal robot.
    :ivar SensorModel sensor: Nominal sensor (zero biases, zero delay).
    :ivar SimulationConfig simulation: Integration settings.
    :ivar ReferenceConfig reference: Reference jump shape.
    :ivar EnvConfig env: Environment settings shared by every stage.
    :ivar RewardWeights reward: Weight schedules and kernel scales.
    :ivar RandomizationRanges randomization: Stage 3 dynamics ranges.
    :ivar PerturbationConfig perturbation: Random base wrenches.
    :ivar NetworkConfig network: Network sizes.
    :ivar PpoConfig ppo: Optimization hyperparameters.
    :ivar TrainingSchedule training: Iteration counts.
    :ivar HarnessConfig harness: Orchestration settings.
    """

    def __init__(self, data: dict):
        a = ConfigAttributes
        c = Section(data)
        self._data = copy.deepcopy(data)
        self.robot = RobotModel(c.sub(a.robot))
        self.sensor = SensorModel(c.sub(a.sensor))
        self.simulation = SimulationConfig(c.sub(a.simulation))
        self.reference = ReferenceConfig(c.sub(a.reference))
        self.env = EnvConfig(c.sub(a.env))
        self.reward = RewardWeights(c.sub(a.reward))
        self.randomization = RandomizationRanges(c.sub(a.randomization))
        self.perturbation = PerturbationConfig(c.sub(a.perturbation))
        self.network = NetworkConfig(c.sub(a.network))
        self.ppo = PpoConfig(c.sub(a.ppo))
        self.training = TrainingSchedule(c.sub(a.training))
        self.harness = HarnessConfig(c.sub(a.harness))

    def episode(self, stage: int, single_goal: bool = False) -> EpisodeConfig:
        return self.env.episode(stage, self.reference.duration, single_goal)

    def to_dict(self) -> dict:
        """The merged configuration as plain data."""
        return copy.deepcopy(self._data)

    def with_overrides(self, overrides: dict) -> "Config":
        return Config(deep_merge(self._data, overrides))


def load_config(path: Optional[Union[str, Path]] = None) -> Config:
    """
    Load the default configuration, merged with the file at ``path`` if given.

    :param path: A YAML file holding the fields to change.
    :type path: Optional[Union[str, pathlib.Path]]
    :return: :class:`Config`
    :rtype: :class:`Config`
    :raises exceptions.ConfigError: naming the offending field.
    """
    data = read_yaml(DEFAULT_CONFIG)
    if path is not None:
        data = deep_merge(data, read_yaml(path))
    return Config(data)


def config_from_dict(data: dict) -> Config:
    """Build a configuration from a complete dict, eg. the one stored with a trace."""
    return Config(deep_merge(read_yaml(DEFAULT_CONFIG), data))
