"""Exception types, one per diagnostic category the CLI reports."""


class ConfigurationError(ValueError):
    """Invalid configuration value or malformed config/data file."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class TrainingDiverged(RuntimeError):
    """A parameter became non-finite during training.

    The message names the offending parameter family and index.
    """
