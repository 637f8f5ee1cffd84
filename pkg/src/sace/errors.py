"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`SaceError`
and carries an ``exit_code`` used by the command-line front end.
"""


class SaceError(Exception):
    """Base class for package errors."""

    exit_code = 4
    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class UsageError(SaceError, ValueError):
    """Invalid argument combination supplied by the caller."""

    exit_code = 2
    kind = "usage_error"


class DataError(SaceError, ValueError):
    """Malformed input data or missing information required by a method."""

    exit_code = 3
    kind = "data_error"


class EstimationError(SaceError, ArithmeticError):
    """A numerical procedure could not produce an estimate."""

    exit_code = 4
    kind = "estimation_error"


class NotIdentifiableError(UsageError):
    """The requested estimand is not identified under the requested regime."""

    kind = "not_identifiable"


class WeakSubstitutionError(EstimationError):
    """Survival probabilities barely differ across levels of the substitutional variable."""

    kind = "weak_substitution"

    def __init__(self, gap: float, tol: float):
        self.gap = float(gap)
        self.tol = float(tol)
        super().__init__(f"substitution gap {self.gap:.3g} is below tolerance {self.tol:.3g}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["gap"] = self.gap
        return d


class DegenerateError(EstimationError):
    """A denominator, variance or cell that must be nonzero is (numerically) zero."""

    kind = "degenerate"


class OrderingError(EstimationError):
    """Survival under treatment does not exceed survival under control in some cell."""

    kind = "ordering_violation"


class SeparationError(EstimationError):
    """Logistic coefficients diverge, usually because of perfect separation."""

    kind = "separation"

    def __init__(self, column: int, value: float):
        self.column = int(column)
        self.value = float(value)
        super().__init__(
            f"coefficient {self.column} reached {self.value:.3g}; "
            "the response is (quasi-)separated by this column"
        )

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["column"] = self.column
        return d


class ConvergenceError(EstimationError):
    """Iterative fitting did not converge."""

    kind = "non_convergence"


class RankDeficientError(EstimationError):
    """Design matrix does not have full column rank."""

    kind = "rank_deficient"


class ExtrapolationError(EstimationError):
    """All kernel weights vanish at a query point."""

    kind = "extrapolation"

    def __init__(self, x0):
        self.x0 = [float(t) for t in x0]
        super().__init__(f"all kernel weights are numerically zero at x0={self.x0}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["x0"] = self.x0
        return d


class BootstrapError(EstimationError):
    """Too few bootstrap replicates succeeded."""

    kind = "bootstrap_failure"
