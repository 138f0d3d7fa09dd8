"""Error taxonomy for the trainer."""


class TrainerError(Exception):
    """Base class for all trainer failures."""


class ConfigError(TrainerError):
    """A configuration value violates its documented range."""


class DataError(TrainerError):
    """Manifest, tensor, or prediction data is malformed or missing."""
