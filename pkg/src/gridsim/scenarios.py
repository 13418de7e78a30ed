"""Fault scenarios and the pre-fault / fault / post-fault simulation protocol."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ConvergenceError,
    IntegrationError,
    ScenarioError,
    UnknownComponentError,
    UnknownVariableError,
)
from .grid import PowerGrid, RHSFunction, build_rhs, check
from .nodes import field_param
from .phasor import State, build_layout, canonical_var
from .solver import SolverOptions, SolverStats, Trajectory, integrate
from .steady_state import REINIT_TOL, default_guess, reinit_algebraic

log = logging.getLogger(__name__)

DERIVED_NODE_VARS = ("u", "v", "φ", "p", "q")


class Perturbation:
    """Base class: a grid transformation active during ``tspan_fault``."""

    tspan_fault: tuple[float, float]

    def apply(self, grid: PowerGrid) -> PowerGrid:
        raise NotImplementedError

    def check(self, grid: PowerGrid, tspan) -> None:
        t_on, t_off = self.tspan_fault
        if not t_on < t_off:
            raise ScenarioError(f"fault window needs t_on < t_off, got {self.tspan_fault}")
        if t_on < tspan[0] or t_off > tspan[1]:
            raise ScenarioError(f"fault window {self.tspan_fault} is not inside the time span {tuple(tspan)}")
        self.apply(grid)


def _window(tspan_fault):
    t_on, t_off = tspan_fault
    return (float(t_on), float(t_off))


@dataclass(frozen=True)
class LineFailure(Perturbation):
    line_name: str
    tspan_fault: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "tspan_fault", _window(self.tspan_fault))

    def apply(self, grid):
        faulted = grid.without_line(self.line_name)
        check(faulted)  # logs a warning when the grid islands
        return faulted


@dataclass(frozen=True)
class NodeParameterChange(Perturbation):
    node_name: str
    parameter: str
    value: float
    tspan_fault: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "tspan_fault", _window(self.tspan_fault))

    def apply(self, grid):
        model = grid.node(self.node_name)
        attr = field_param(self.parameter)
        if attr not in {f.name for f in dataclasses.fields(model)}:
            raise UnknownComponentError(f"{model.type_name} at {self.node_name!r} has no parameter {self.parameter!r}")
        return grid.with_node(self.node_name, dataclasses.replace(model, **{attr: self.value}))


@dataclass(frozen=True)
class PowerPerturbation(Perturbation):
    """Step of the P (and optionally Q) set-point of a load or inverter node."""

    node_name: str
    P_fault: float | None
    tspan_fault: tuple[float, float]
    Q_fault: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "tspan_fault", _window(self.tspan_fault))
        if self.P_fault is None and self.Q_fault is None:
            raise ValueError("PowerPerturbation needs P_fault and/or Q_fault")

    def apply(self, grid):
        model = grid.node(self.node_name)
        names = {f.name for f in dataclasses.fields(model)}
        changes = {}
        for attr, value in (("P", self.P_fault), ("Q", self.Q_fault)):
            if value is None:
                continue
            if attr not in names:
                raise UnknownComponentError(f"{model.type_name} at {self.node_name!r} has no set-point {attr}")
            changes[attr] = float(value)
        return grid.with_node(self.node_name, dataclasses.replace(model, **changes))


@dataclass(frozen=True)
class ChangeInitialConditions:
    """Start the simulation from a modified state; the grid is never changed."""

    assignments: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(tuple(a) for a in self.assignments))

    def apply(self, grid):
        return grid

    def apply_to_state(self, state: State) -> State:
        out = state.copy()
        for owner, var, value in self.assignments:
            out[owner, var] = value
        return out

    def check(self, grid, tspan):
        layout = build_layout(grid)
        for owner, var, _ in self.assignments:
            if canonical_var(var) not in ("u", "v", "φ") and (owner, var) not in layout:
                raise UnknownVariableError(f"no state variable {owner}:{var}")


class Segment(NamedTuple):
    trajectory: Trajectory
    grid: PowerGrid
    rhs: RHSFunction


class PowerGridSolution:
    """Piecewise trajectory over one or more grids with named extraction.

    At a switching instant the left segment (the one ending there) is used.
    """

    def __init__(self, segments: list[Segment], grid: PowerGrid | None = None):
        if not segments:
            raise ValueError("solution needs at least one segment")
        self.segments = segments
        self.grid = grid if grid is not None else segments[0].grid

    @property
    def t0(self) -> float:
        return self.segments[0].trajectory.t0

    @property
    def t1(self) -> float:
        return self.segments[-1].trajectory.t1

    @property
    def stats(self) -> SolverStats:
        stats = SolverStats()
        for seg in self.segments:
            stats = stats.merge(seg.trajectory.stats)
        return stats

    @property
    def times(self) -> np.ndarray:
        return np.unique(np.concatenate([s.trajectory.times for s in self.segments]))

    def segment_index(self, t: float) -> int:
        if t < self.t0 or t > self.t1:
            raise ValueError(f"t={t} outside solution range [{self.t0}, {self.t1}]")
        for k, seg in enumerate(self.segments):
            if t <= seg.trajectory.t1:
                return k
        return len(self.segments) - 1

    def state(self, t: float) -> State:
        seg = self.segments[self.segment_index(t)]
        return State(seg.rhs.layout, seg.trajectory(t))

    @property
    def final_state(self) -> State:
        seg = self.segments[-1]
        return State(seg.rhs.layout, seg.trajectory.final)

    def has_variable(self, owner: str, var: str) -> bool:
        return any(_resolvable(seg, owner, canonical_var(var)) for seg in self.segments)

    def _values(self, seg: Segment, owner: str, var: str, xs: np.ndarray) -> np.ndarray:
        layout = seg.rhs.layout
        if (owner, var) in layout:
            return xs[:, layout.index(owner, var)].copy()
        grid = seg.grid
        if owner not in grid.nodes:
            return np.full(len(xs), np.nan)
        k = layout.index(owner, "u_re")
        u = xs[:, k] + 1j * xs[:, k + 1]
        if var == "v":
            return np.abs(u)
        if var == "φ":
            return np.angle(u)
        if var in ("p", "q", "ω"):
            pos = seg.rhs.node_names.index(owner)
            i = seg.rhs.node_currents_batch(xs)[:, pos]
            if var == "p":
                return (u * i.conj()).real
            if var == "q":
                return (u * i.conj()).imag
            model = grid.nodes[owner]
            if var in model.derived_names:
                m = k + 2
                n_int = len(model.internal_names)
                return np.array(
                    [model.derived(var, complex(uu), complex(ii), tuple(x[m : m + n_int])) for uu, ii, x in zip(u, i, xs)]
                )
        return np.full(len(xs), np.nan)

    def series(self, owner: str, var: str, t=None) -> np.ndarray:
        """Values of ``owner:var`` at times ``t`` (default: all sample times)."""
        var = canonical_var(var)
        if var == "u":
            raise UnknownVariableError("use 'v'/'φ' or 'u_re'/'u_im' for series extraction")
        if not self.has_variable(owner, var):
            raise UnknownVariableError(f"no series {owner}:{var}")
        t = self.times if t is None else np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(len(t))
        seg_idx = np.array([self.segment_index(tk) for tk in t], dtype=int)
        for k, seg in enumerate(self.segments):
            mask = seg_idx == k
            if mask.any():
                out[mask] = self._values(seg, owner, var, seg.trajectory(t[mask]))
        return out

    def raw_series(self, owner: str, var: str) -> tuple[np.ndarray, np.ndarray]:
        """Per-segment samples concatenated; switching times appear twice to show jumps."""
        var = canonical_var(var)
        if not self.has_variable(owner, var):
            raise UnknownVariableError(f"no series {owner}:{var}")
        ts, ys = [], []
        for seg in self.segments:
            ts.append(seg.trajectory.times)
            ys.append(self._values(seg, owner, var, seg.trajectory.values))
        return np.concatenate(ts), np.concatenate(ys)


def _resolvable(seg: Segment, owner: str, var: str) -> bool:
    if (owner, var) in seg.rhs.layout:
        return True
    model = seg.grid.nodes.get(owner)
    if model is None:
        return False
    return var in ("v", "φ", "p", "q") or var in model.derived_names


def apply(perturbation, grid: PowerGrid) -> PowerGrid:
    return perturbation.apply(grid)


def map_state(from_grid: PowerGrid, state: State, to_grid: PowerGrid) -> State:
    """Carry ``state`` over to ``to_grid`` by (owner, variable) name.

    Variables new in ``to_grid`` start from the model default guesses; the
    algebraic part is then re-solved, differential entries stay bit-identical.
    """
    if state.layout != build_layout(from_grid):
        raise ValueError("state layout does not match from_grid")
    target = default_guess(to_grid)
    old = state.layout
    fresh = []
    for e in target.layout.entries:
        if (e.owner, e.var) in old:
            target.values[e.index] = state.values[old.index(e.owner, e.var)]
        else:
            fresh.append(e)
    # fresh line currents: steady-state guess from the mapped terminal voltages
    for name, line in to_grid.lines.items():
        if line.model.internal_names and any(e.owner == name for e in fresh):
            guess = line.model.initial_guess(target.voltage(line.from_node), target.voltage(line.to_node))
            for var, value in zip(line.model.internal_names, guess):
                target[name, var] = value
    return reinit_algebraic(to_grid, target)


def _run_segment(grid, x0: State, t_a, t_b, opts, done):
    rhs = build_rhs(grid)
    try:
        traj = integrate(rhs, x0, (t_a, t_b), opts)
    except IntegrationError as exc:
        if exc.trajectory is not None and len(exc.trajectory) > 1:
            done.append(Segment(exc.trajectory, grid, rhs))
        raise ScenarioError(f"integration failed on [{t_a}, {t_b}]: {exc}", done) from None
    seg = Segment(traj, grid, rhs)
    done.append(seg)
    return seg


def simulate(perturbation, grid: PowerGrid, x0: State, tspan, opts: SolverOptions | None = None) -> PowerGridSolution:
    """Simulate a fault scenario starting from ``x0`` (usually the operation point)."""
    t0, t1 = float(tspan[0]), float(tspan[1])
    if not t1 > t0:
        raise ScenarioError(f"empty time span {tspan}")
    check(grid)
    if x0.layout != build_layout(grid):
        raise ScenarioError("initial state does not match the grid layout")
    perturbation.check(grid, (t0, t1))
    done: list[Segment] = []
    try:
        x0 = reinit_algebraic(grid, x0, REINIT_TOL)
        if isinstance(perturbation, ChangeInitialConditions):
            start = reinit_algebraic(grid, perturbation.apply_to_state(x0))
            _run_segment(grid, start, t0, t1, opts, done)
            return PowerGridSolution(done, grid)

        t_on, t_off = perturbation.tspan_fault
        faulted = perturbation.apply(grid)
        plan = [(grid, t0, t_on), (faulted, t_on, t_off), (grid, t_off, t1)]
        state, prev_grid = x0, grid
        for seg_grid, t_a, t_b in plan:
            if t_b <= t_a:
                continue
            if seg_grid is not prev_grid:
                state = map_state(prev_grid, state, seg_grid)
            seg = _run_segment(seg_grid, state, t_a, t_b, opts, done)
            state, prev_grid = State(seg.rhs.layout, seg.trajectory.final), seg_grid
    except ConvergenceError as exc:
        raise ScenarioError(f"state mapping failed: {exc}", done) from None
    return PowerGridSolution(done, grid)


def parse_perturbation(spec: str, window: tuple[float, float] | None):
    """Parse the CLI syntax ``line-failure:NAME``, ``power-perturbation:NODE:P=VALUE``,
    ``set-initial:OWNER:VAR=VALUE`` (several set-initial assignments separated by ``,``)."""
    kind, _, rest = spec.partition(":")
    if kind == "set-initial":
        assignments = []
        for item in rest.split(","):
            owner, sep, assign = item.partition(":")
            var, eq, value = assign.partition("=")
            if not (sep and eq and owner and var):
                raise ValueError(f"bad set-initial assignment {item!r}, expected OWNER:VAR=VALUE")
            assignments.append((owner, var, float(value)))
        return ChangeInitialConditions(tuple(assignments))
    if window is None:
        raise ValueError(f"fault {spec!r} needs --fault-window T_ON:T_OFF")
    if kind == "line-failure":
        if not rest:
            raise ValueError("line-failure needs a line name")
        return LineFailure(rest, window)
    if kind == "power-perturbation":
        node, sep, assigns = rest.partition(":")
        if not (node and sep):
            raise ValueError("power-perturbation needs NODE:P=VALUE")
        values = {}
        for item in assigns.split(","):
            key, eq, value = item.partition("=")
            if key not in ("P", "Q") or not eq:
                raise ValueError(f"bad power-perturbation assignment {item!r}, expected P=VALUE or Q=VALUE")
            values[key] = float(value)
        return PowerPerturbation(node, values.get("P"), window, values.get("Q"))
    raise ValueError(f"unknown fault kind {kind!r}")
