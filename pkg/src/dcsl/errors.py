"""Exception types shared across the package."""


class DCSLError(Exception):
    """Base class for every error raised by dcsl."""


class RejectedInputError(DCSLError, ValueError):
    """Input has the wrong shape, contains non-finite values, or breaks a precondition."""


class TrainingDivergenceError(DCSLError, RuntimeError):
    """A loss or gradient became non-finite during optimization."""


class DegenerateSampleError(DCSLError, ValueError):
    """A statistic is undefined for the supplied sample (e.g. zero variance)."""


class UnsupportedConfigurationError(DCSLError, ValueError):
    pass


class ParseError(DCSLError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
