"""Exception types shared across the package."""


class SlrtError(Exception):
    """Base class for all package-specific errors."""


class DataError(SlrtError):
    """Invalid observation data: bad CSV cells, schema problems, broken invariants."""


class DegenerateDesignError(SlrtError):
    """Design matrix is rank deficient; the regression step has no unique solution."""


class FitFailureError(SlrtError):
    """Every optimisation attempt failed, or a simulation exceeded its failure budget."""


class UsageError(SlrtError):
    """Malformed command line or experiment configuration."""
