"""Exception taxonomy shared across the package.

Every error raised by this package derives from :class:`TrajclustError`,
so callers can catch one base class. The CLI maps each subclass to a
stable machine-readable category string.
"""


class TrajclustError(Exception):
    """Base class for all package errors."""

    category = "error"


class SchemaError(TrajclustError):
    """Malformed tabular input: missing column, unparsable field, bad file magic."""

    category = "schema"


class ValidationError(TrajclustError):
    """Input parses but violates a domain rule (eligibility, ranges, enums)."""

    category = "validation"


class ConfigError(TrajclustError):
    """Invalid run configuration (k range, unknown policy, missing artifact)."""

    category = "config"


class UndefinedCoefficientError(TrajclustError):
    """A correlation coefficient is undefined because one vector has zero variance."""

    category = "undefined_coefficient"


class DegenerateTableError(TrajclustError):
    """A contingency table has an empty row or column margin."""

    category = "degenerate_table"


class FitError(TrajclustError):
    """A model fit could not be completed."""

    category = "fit"


class SeparationError(FitError):
    """Logistic fit shows (quasi-)complete separation: coefficients diverge."""

    category = "separation"


class ConvergenceError(FitError):
    """Iterative fit did not converge within the iteration budget."""

    category = "convergence"
