import numpy as np
import pytest
import yaml

from goaljump import load_config
from goaljump.arch import ObservationBatch
from goaljump.env import observation_dims
from goaljump.reference import build_jump_in_place
from goaljump.sim import standing_state

# Keeps environments, networks and training iterations tiny; the simulator itself is unchanged.
SMALL = {
    "env": {"stages": {"stage1": {"max_steps": 8}, "stage2": {"max_steps": 8}, "stage3": {"max_steps": 8}}},
    "network": {"hidden_units": [16, 16], "value_hidden_units": [16], "expert_encoder_hidden_units": 8},
    "ppo": {"batch_size": 16, "minibatch_size": 8, "n_envs": 2, "epochs": 1},
    "training": {
        "iterations": {"stage1": 1, "stage2": 1, "stage3": 1},
        "checkpoint_every": 1,
        "finetune_iterations": 1,
        "distill": {"iterations": 2, "batch_size": 8, "holdout_size": 8, "epochs": 1, "minibatch_size": 4},
    },
    "harness": {"eval_max_steps": 6, "post_settle_s": 0.05, "return_episodes": 2},
}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long statistical experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical experiment, only run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def small_config(config):
    return config.with_overrides(SMALL)


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL), encoding="UTF-8")
    return path


@pytest.fixture(scope="session")
def robot(config):
    return config.robot


@pytest.fixture
def standing(robot):
    return standing_state(robot)


@pytest.fixture(scope="session")
def reference(config):
    return build_jump_in_place(config.reference, config.robot, config.simulation.policy_dt)


@pytest.fixture(scope="session")
def dims(config):
    return observation_dims(config)


def random_batch(dims, n, seed=0) -> ObservationBatch:
    """Observations with the right shapes and values of the right order of magnitude."""
    rng = np.random.default_rng(seed)
    return ObservationBatch(
        goal=rng.uniform(-0.5, 0.5, (n, dims.goal)),
        preview=rng.uniform(-1.0, 1.0, (n, dims.preview)),
        short_history=rng.uniform(-1.0, 1.0, (n, dims.short, dims.entry)),
        long_history=rng.uniform(-1.0, 1.0, (n, dims.long, dims.entry)),
        privileged=rng.uniform(-1.0, 1.0, (n, dims.privileged)),
        critic=rng.uniform(-1.0, 1.0, (n, dims.critic)),
    )


@pytest.fixture(scope="session")
def make_batch():
    return random_batch
