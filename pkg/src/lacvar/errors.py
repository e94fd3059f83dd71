"""Exception hierarchy. The CLI maps each class to an exit code."""


class LacvarError(Exception):
    exit_code = 1
    kind = "error"

    def record(self):
        return {"kind": self.kind, "message": str(self)}


class ValidationError(LacvarError, ValueError):
    """Bad input: dimension mismatch, out-of-range parameter, malformed config."""

    kind = "validation"


class DomainError(ValidationError):
    """A precondition of the mathematical construction is violated."""

    kind = "domain"


class BudgetError(LacvarError):
    """A computation would exceed its declared size budget."""

    exit_code = 2
    kind = "budget"

    def __init__(self, message, *, requested=None, budget=None):
        super().__init__(message)
        self.requested = requested
        self.budget = budget

    def record(self):
        rec = super().record()
        rec.update(requested=self.requested, budget=self.budget)
        return rec


class ToleranceError(LacvarError):
    """A numerical check failed its stated tolerance."""

    exit_code = 3
    kind = "tolerance"
