"""Exception types raised by the simulator."""


class ConfigurationError(ValueError):
    """Invalid scenario, mesh or parameter configuration."""


class OutOfDomainError(ValueError):
    """A point lies outside the computational domain."""

    def __init__(self, point, message=None):
        self.point = tuple(float(c) for c in point)
        super().__init__(message or f"point {self.point} lies outside the domain")


class PoisonedStateError(FloatingPointError):
    """A field entering the solver contains NaN or inf values."""

    def __init__(self, field):
        self.field = field
        super().__init__(f"non-finite values in field '{field}'")


class CFLError(ValueError):
    """Advective CFL condition violated."""


class ConsistencyError(RuntimeError):
    """An internal invariant was violated (e.g. negative tracer mass)."""


class SolverError(RuntimeError):
    """The nonlinear momentum solve did not converge."""

    def __init__(self, message, report=None, step=None):
        self.report = report
        self.step = step
        super().__init__(message)
