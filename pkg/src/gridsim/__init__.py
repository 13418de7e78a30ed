"""Dynamic simulation of power grids as index-1 DAEs on a graph of nodes and lines."""

from .errors import (
    ConvergenceError,
    GridSimError,
    GridValidationError,
    InconsistentStateError,
    IntegrationError,
    LayoutConflictError,
    ModelParameterError,
    ScenarioError,
    SchemaError,
    SingularInputError,
    SingularJacobianError,
    UnknownComponentError,
    UnknownVariableError,
)
from .grid import Line, PowerGrid, Violation, build_rhs, validate
from .grid_io import (
    load_powergrid,
    read_powergrid,
    read_state,
    save_powergrid,
    write_powergrid,
    write_solution_csv,
    write_state,
)
from .lines import PiModelLine, RLLine, StaticLine, Transformer
from .nodes import FourthOrderEq, GridFollowingPLL, PQAlgebraic, SlackAlgebraic, VSIVoltagePT1
from .phasor import State, StateLayout, build_layout, complex_power
from .scenarios import (
    ChangeInitialConditions,
    LineFailure,
    NodeParameterChange,
    PowerGridSolution,
    PowerPerturbation,
    simulate,
)
from .solver import SolverOptions, Trajectory, integrate
from .steady_state import find_operationpoint, reinit_algebraic

__all__ = [name for name in dir() if not name.startswith("_") and name not in ['errors', 'grid', 'grid_io', 'lines', 'nodes', 'phasor', 'scenarios', 'solver', 'steady_state']]
