"""Exception types shared across the package.

The CLI maps these to exit codes: configuration-type errors exit 1,
numerical failures exit 2, and I/O failures (``OSError``) exit 3.
"""


class CrossDiffError(Exception):
    """Base class for all package errors."""


class ConfigError(CrossDiffError):
    """Invalid run configuration. ``errors`` lists every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DomainError(CrossDiffError, ValueError):
    """Argument outside the admissible domain of a function."""


class ModelError(CrossDiffError):
    """A coefficient function failed to evaluate."""


class IncompatibleSourceError(CrossDiffError):
    """Neumann Poisson right-hand side with nonzero integral."""

    def __init__(self, defect, tol):
        self.defect = defect
        self.tol = tol
        super().__init__(
            f"incompatible source: integral defect {defect:.17g} exceeds {tol:.3g}"
        )


class ExperimentSpecError(CrossDiffError):
    """Experiment parameters are inconsistent or infeasible."""


class NumericalError(CrossDiffError):
    """Non-finite values or a singular system during computation."""


class InversionError(NumericalError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class StateOutOfRangeError(NumericalError):
    """Aggregate concentration left the admissible interval [0, L]."""
