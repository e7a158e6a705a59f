"""Exception types raised across the package."""


class IdvtError(Exception):
    """Base class for all package-specific failures."""


class ParseError(IdvtError, ValueError):
    """A data file line could not be parsed."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class EmptyDatasetError(IdvtError, ValueError):
    """No usable records remain (empty file or everything filtered away)."""


class ConfigError(IdvtError, ValueError):
    """An option value is outside its accepted domain."""


class UndefinedMetricError(IdvtError, ValueError):
    """A statistic has an empty set of qualifying pairs."""


class DegenerateGraphError(IdvtError, ValueError):
    """A graph violates a structural precondition (e.g. zero-degree node)."""


class DimensionError(IdvtError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(IdvtError, ValueError):
    """An operand value is outside the mathematical domain of an op."""


class ContractError(IdvtError, RuntimeError):
    """An API was called in a way its contract forbids."""


class TrainingDivergenceError(IdvtError, RuntimeError):
    """A gradient or parameter became non-finite during optimization."""


class SamplingImpossibleError(IdvtError, ValueError):
    """Negative sampling has no candidate items for some user."""


class GenerationError(IdvtError, ValueError):
    """Synthetic-data parameters cannot satisfy the generator's guarantees."""
