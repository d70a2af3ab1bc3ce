"""Exception hierarchy shared by every hfnoise module."""


class HfNoiseError(Exception):
    """Base class for all errors raised by hfnoise."""


class InsufficientData(HfNoiseError):
    """Too few observations for the requested computation."""


class MalformedInput(HfNoiseError, ValueError):
    """Input violates a structural invariant (ordering, finiteness, shape)."""


class DegenerateInput(HfNoiseError, ValueError):
    """Input is well formed but the quantity is undefined for it."""


class InvalidOptions(HfNoiseError, ValueError):
    """Option combination that has no meaningful result."""


class NumericalFailure(HfNoiseError, ArithmeticError):
    """Non-finite intermediate value during estimation."""


class SchemaError(HfNoiseError, ValueError):
    """File or table layout does not match the expected schema."""


class RankError(HfNoiseError, ValueError):
    """Design matrix is rank deficient."""

    def __init__(self, message, dependent_columns=()):
        super().__init__(message)
        self.dependent_columns = tuple(dependent_columns)


class DegenerateClustering(HfNoiseError, ValueError):
    """Cluster-robust covariance requested with fewer than two clusters."""


class CellFailed(HfNoiseError):
    """Every path in a Monte Carlo cell failed estimation."""

    def __init__(self, message, tally=None):
        super().__init__(message)
        self.tally = dict(tally or {})


class RowError(HfNoiseError):
    """A single unparseable row in a tick file."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class InsufficientPanel(HfNoiseError):
    """No entity in a panel had enough usable observations."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})
