"""Shared exception types."""


class ConfigError(ValueError):
    """Input incompatible with a model's architecture config."""


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered; a diagnostic checkpoint was written."""
