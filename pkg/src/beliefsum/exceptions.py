"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A numeric parameter is outside its admissible range."""


class ConfigurationError(ValueError):
    """A model, detector or solver configuration is inconsistent."""


class DegenerateObservationError(ArithmeticError):
    """An observation has zero predictive probability under the model."""


class IngestError(ValueError):
    """A count-stream file could not be parsed.

    ``line`` carries the 1-based line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
