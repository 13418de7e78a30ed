"""Exception hierarchy shared by all gridsim modules."""


class GridSimError(Exception):
    """Base class for domain errors. ``component`` names the failing module."""

    component = "gridsim"


class LayoutConflictError(GridSimError):
    component = "phasor"


class UnknownVariableError(GridSimError, KeyError):
    component = "phasor"

    def __str__(self):
        return Exception.__str__(self)


class ModelParameterError(GridSimError, ValueError):
    component = "models"


class SingularInputError(GridSimError, ZeroDivisionError):
    """Raised by node models that divide by the voltage magnitude at u = 0."""

    component = "models"


class GridValidationError(GridSimError, ValueError):
    component = "grid"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class UnknownComponentError(GridSimError, KeyError):
    component = "grid"

    def __str__(self):
        return Exception.__str__(self)


class IntegrationError(GridSimError):
    """Integration stopped early. ``trajectory`` holds the accepted part."""

    component = "solver"

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class InconsistentStateError(GridSimError):
    component = "solver"


class ConvergenceError(GridSimError):
    """Newton iteration failed. ``state`` carries the best iterate."""

    component = "steady_state"

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SingularJacobianError(ConvergenceError):
    pass


class ScenarioError(GridSimError):
    component = "scenarios"

    def __init__(self, message, segments=None):
        super().__init__(message)
        self.segments = segments or []


class SchemaError(GridSimError, ValueError):
    component = "grid_io"
