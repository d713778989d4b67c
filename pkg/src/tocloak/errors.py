"""Exception hierarchy shared by the solvers and the command line."""


class CloakError(Exception):
    """Base class for every error raised by this package."""


class SingularPointError(CloakError, ValueError):
    """A coefficient or map was evaluated where it is undefined."""


class DomainMismatchError(CloakError, ValueError):
    pass


class SolverError(CloakError, RuntimeError):
    """A linear or ODE solve failed or was too ill-conditioned to trust."""


class ResonanceError(SolverError):
    """The requested frequency makes a (mode) problem singular."""

    def __init__(self, message, mode=None, omega=None):
        super().__init__(message)
        self.mode = mode
        self.omega = omega


class IncompatibleSourceError(SolverError):
    """Source violates the solvability condition of a singular interior problem."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class QuadratureError(CloakError, RuntimeError):
    pass


class MeshError(CloakError, ValueError):
    pass
