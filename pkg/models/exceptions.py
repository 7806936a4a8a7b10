"""Error types raised by the projection toolkit"""


class ProjectionToolkitError(Exception):
    """Base class for all toolkit errors"""


class DimensionMismatchError(ProjectionToolkitError, ValueError):
    pass


class NonFiniteInputError(ProjectionToolkitError, ValueError):
    pass


class InvalidSetError(ProjectionToolkitError, ValueError):
    pass


class InvalidParameterError(ProjectionToolkitError, ValueError):
    pass


class IndexOutOfRangeError(ProjectionToolkitError, IndexError):
    pass


class SchedulerError(ProjectionToolkitError):
    """An amalgamator emitted by a scheduler failed validation"""

    def __init__(self, iteration, reasons):
        self.iteration = iteration
        self.reasons = list(reasons)
        super().__init__(f"Scheduler emitted an invalid amalgamator at iteration {iteration}: "
                         + "; ".join(self.reasons))


class NonFiniteIterateError(ProjectionToolkitError):
    """An iterate left the finite reals; the partial trace is attached"""

    def __init__(self, iteration, trace=None):
        self.iteration = iteration
        self.trace = trace
        super().__init__(f"Iterate became non-finite at iteration {iteration}")


class PreconditionError(ProjectionToolkitError):
    pass


class OracleError(ProjectionToolkitError):
    pass


class OracleConvergenceError(OracleError):
    """Dykstra's projector ran out of sweeps before reaching its tolerance"""

    def __init__(self, best_point, sweeps, proximity, tol):
        self.best_point = best_point
        self.sweeps = sweeps
        self.proximity = proximity
        self.tol = tol
        super().__init__(f"Intersection projector did not converge in {sweeps} sweeps "
                         f"(proximity {proximity:.3e} > tol {tol:.3e})")


class ProblemFileError(ProjectionToolkitError):
    """Problem file failed to parse or validate; carries every message"""

    def __init__(self, errors, line=None, column=None):
        self.errors = list(errors)
        self.line = line
        self.column = column
        super().__init__("; ".join(self.errors))


class ManifestMismatchError(ProjectionToolkitError):
    """Two run manifests do not describe the same problem"""
