class ConfigurationError(ValueError):
    """Invalid or inconsistent configuration."""


class CorruptFileError(IOError):
    """A dataset or weights file is truncated, oversized or malformed."""


class HeaderMismatchError(ValueError):
    """A file header disagrees with the caller's expected dimensions or profile."""


class NonPSDError(ValueError):
    """A covariance that must be positive semidefinite is not."""


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


class SamplerDivergedError(RuntimeError):
    """The sampler state became non-finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class MissingArtifactError(FileNotFoundError):
    """A required dataset / weights file is absent; the message names the command that produces it."""
