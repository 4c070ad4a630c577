"""Exception classes shared across the package."""


class SocialPecError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SocialPecError, ValueError):
    pass


class InvalidLengthError(SocialPecError, ValueError):
    pass


class ContractError(SocialPecError, ValueError):
    pass


class ParseError(SocialPecError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataError(SocialPecError, ValueError):
    pass


class ConfigError(SocialPecError, ValueError):
    pass


class CheckpointError(SocialPecError, ValueError):
    pass


class TrainingDivergedError(SocialPecError, FloatingPointError):
    pass
