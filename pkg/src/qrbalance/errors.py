class ParameterError(ValueError):
    """Raised for physically meaningless model parameters."""


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InvariantViolation(RuntimeError):
    """Internal simulator state broke one of its invariants."""
