"""Exception types shared by the solvers."""


class QuadratureError(RuntimeError):
    """A quadrature or derivative estimate did not reach its tolerance."""


class ConvergenceError(RuntimeError):
    """A self-consistent iteration hit its iteration limit."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConstraintViolation(RuntimeError):
    """A converged state fails one of its postconditions."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []
