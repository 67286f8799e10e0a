"""Exception and warning classes shared across the package."""


class TDMetricError(Exception):
    """Base class for all errors raised by tdmetric."""


class DimensionMismatch(TDMetricError, ValueError):
    pass


class NotHermitian(TDMetricError, ValueError):
    pass


class NotPositiveDefinite(TDMetricError, ValueError):
    pass


class EvaluationFailure(TDMetricError):
    """A Hamiltonian could not be evaluated at a requested time."""


class SingularPropagator(TDMetricError):
    pass


class SingularMap(TDMetricError):
    pass


class SingularEvolution(TDMetricError):
    pass


class DegenerateSpectrum(TDMetricError):
    pass


class BranchCrossing(TDMetricError):
    """Two eigenbranches came too close, or a branch lost continuity."""


class NonRealExpectation(TDMetricError):
    pass


class NotCyclic(TDMetricError):
    pass


class IncompleteBranchSet(TDMetricError):
    pass


class ConfigError(TDMetricError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class PositivityWarning(UserWarning):
    """A metric trajectory dropped below the positivity threshold."""


# Spelling used by the Lindblad integrator when positivity is lost.
PositivityLost = PositivityWarning
