"""Exception hierarchy shared across the package."""


class GensclError(Exception):
    """Base class for all package-specific errors."""


class SamplingError(GensclError):
    """A generative sampler failed; carries the stage that failed."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"sampling failed at stage '{stage}': {message}")


class DegenerateDensityError(GensclError):
    """Monte-Carlo denominator vanished (marginal likelihood estimate is zero)."""


class ConstructionFailureError(GensclError):
    """Geometric construction could not satisfy its constraints within the retry budget."""


class StaleCacheError(GensclError):
    """A backward pass was handed a cache from a different forward pass."""


class CheckpointError(GensclError):
    """Checkpoint file is malformed or belongs to a different network spec."""


class NumericError(GensclError):
    """Non-finite values encountered during optimization."""


class TrainingAbortedError(NumericError):
    """Training stopped on a non-finite loss; the last good parameters are retained."""

    def __init__(self, epoch: int, message: str, last_params=None):
        self.epoch = epoch
        self.last_params = last_params
        super().__init__(f"training aborted in epoch {epoch}: {message}")


class ConfigError(GensclError):
    """Experiment configuration is malformed, names an unknown key, or fails validation."""
