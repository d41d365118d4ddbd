import pytest

from goaljump import exceptions

ALL = [
    exceptions.ConfigError, exceptions.NonFiniteError, exceptions.SimulationDivergedError,
    exceptions.ReferenceMotionError, exceptions.DimensionError, exceptions.BackwardError,
    exceptions.EpisodeTerminatedError, exceptions.ArchitectureError, exceptions.PrerequisiteError,
    exceptions.CheckpointError, exceptions.ReplayMismatchError,
]


@pytest.mark.parametrize("cls", ALL)
def test_every_error_is_a_goaljump_error(cls):
    assert issubclass(cls, exceptions.Error)
    assert str(cls()) == cls.message


def test_detail_is_appended():
    e = exceptions.CheckpointError("bad magic bytes")
    assert e.detail == "bad magic bytes"
    assert str(e) == "The checkpoint is not in the correct format: bad magic bytes"
    assert exceptions.CheckpointError.message == "The checkpoint is not in the correct format"
