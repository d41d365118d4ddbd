class Error(Exception):
    """Base class for every error raised by goaljump."""
    message = "An error occurred"

    def __init__(self, detail: str = ""):
        self.detail = detail
        if detail:
            self.message = f"{self.message}: {detail}"
        super().__init__(self.message)

    def __str__(self) -> str:
        return self.message


class ConfigError(Error):
    """Raised when the configuration file is missing a field, has the wrong type or breaks an invariant."""
    message = "The configuration is invalid"


class NonFiniteError(Error):
    """Raised when a state, torque or action handed to the simulator contains NaN or infinity."""
    message = "A non-finite value was passed to the simulator"


class SimulationDivergedError(Error):
    """
    Raised when a generalized velocity exceeds the configured hard bound.
    This should never happen for a sane model and time step; it usually means a contact blew up.
    """
    message = "The simulation diverged"


class ReferenceMotionError(Error):
    """Raised when the reference jump cannot be built, such as an apex height the legs cannot reach."""
    message = "The reference motion cannot be constructed"


class DimensionError(Error):
    """Raised when arrays handed to a reward kernel or a network layer have incompatible shapes."""
    message = "The input dimensions do not match"


class BackwardError(Error):
    """Raised when backward() is called on a layer that has no recorded forward pass."""
    message = "Backward was called without a recorded forward pass"


class EpisodeTerminatedError(Error):
    """Raised when stepping an episode that has already terminated. Call reset() first."""
    message = "The episode has terminated"


class ArchitectureError(Error):
    """Raised for an unknown policy kind or a checkpoint that does not match the requested kind."""
    message = "The policy architecture is invalid"


class PrerequisiteError(Error):
    """Raised when a training stage is started without the checkpoint of the stage it builds on."""
    message = "A prerequisite checkpoint is missing"


class CheckpointError(Error):
    """Raised when a checkpoint file is not in the expected format (eg. wrong magic bytes or truncated)."""
    message = "The checkpoint is not in the correct format"


class ReplayMismatchError(Error):
    """Raised when a replayed trajectory differs from the recorded trace."""
    message = "The replayed trajectory does not match the trace"
