"""Exception hierarchy shared by all polarion modules."""


class PolarionError(Exception):
    """Base class for every error raised by polarion."""


class ConfigError(PolarionError):
    """Invalid user input (config file, CLI arguments, dataclass fields)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}" + (f", column {column}" if column is not None else "") + f": {message}"
        super().__init__(message)


class NumericalError(PolarionError):
    """A solver could not produce a trustworthy result."""


class PoleProximity(NumericalError):
    pass


class NoRootsFound(NumericalError):
    pass


class RootCountMismatch(NumericalError):
    pass


class ResolutionTooCoarse(NumericalError):
    pass


class ZeroNorm(NumericalError):
    pass


class GridMismatch(ConfigError):
    pass


class UnstableHamiltonian(NumericalError):
    pass


class LyapunovSingular(NumericalError):
    pass


class DimensionTooLarge(ConfigError):
    pass


class TruncationBreach(NumericalError):
    pass


class UnmatchedMode(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class NegativeStateBeyondTolerance(NumericalError):
    pass


class VacuousPopulation(NumericalError):
    pass


class DegenerateRapidities(UserWarning):
    """Two rapidities coincide; the block was re-orthogonalized."""


class LeakyModeWarning(UserWarning):
    """|Im w|/|Re w| > 0.1: energy normalization of the mode is only indicative."""
