"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class ConfigError(ValueError):
    """Raised for malformed, unknown or out-of-range configuration keys."""


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read, written or verified."""


class ProviderError(RuntimeError):
    """Raised when an injected provider (pose, landmarks, features...) fails."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces NaN or a runaway loss."""
