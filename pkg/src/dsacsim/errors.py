class ConfigError(ValueError):
    """Invalid timing, tracker, or experiment configuration."""


class PatternError(ValueError):
    """An attack pattern cannot be generated with the requested parameters."""


class TraceError(ValueError):
    """A trace file is malformed or violates the timing model."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RefreshBudgetWarning(RuntimeWarning):
    """tRFC cannot fit normal refresh plus TRR activations in one command."""
