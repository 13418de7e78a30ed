"""Grid description and assembly of the global right-hand side."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import GridValidationError, SingularInputError, UnknownComponentError
from .lines import LineModel
from .nodes import NodeModel
from .phasor import StateLayout, build_layout, complex_power

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Line:
    model: LineModel
    from_node: str
    to_node: str


@dataclass(frozen=True)
class PowerGrid:
    """Ordered node and line maps. Treat as immutable; edits return new grids."""

    nodes: dict[str, NodeModel]
    lines: dict[str, Line] = field(default_factory=dict)
    nominal_hz: float = 50.0

    @property
    def omega_N(self) -> float:
        return 2 * np.pi * self.nominal_hz

    def node(self, name: str) -> NodeModel:
        try:
            return self.nodes[name]
        except KeyError:
            raise UnknownComponentError(f"unknown node {name!r}") from None

    def line(self, name: str) -> Line:
        try:
            return self.lines[name]
        except KeyError:
            raise UnknownComponentError(f"unknown line {name!r}") from None

    def without_line(self, name: str) -> "PowerGrid":
        self.line(name)
        lines = {k: v for k, v in self.lines.items() if k != name}
        return PowerGrid(dict(self.nodes), lines, self.nominal_hz)

    def with_node(self, name: str, model: NodeModel) -> "PowerGrid":
        self.node(name)
        nodes = dict(self.nodes)
        nodes[name] = model
        return PowerGrid(nodes, dict(self.lines), self.nominal_hz)

    def with_line(self, name: str, line: Line) -> "PowerGrid":
        lines = dict(self.lines)
        lines[name] = line
        return PowerGrid(dict(self.nodes), lines, self.nominal_hz)


class Violation(NamedTuple):
    path: str
    message: str
    severity: str = "error"

    def __str__(self):
        return f"{self.severity}: {self.path}: {self.message}"


def connected_components(grid: PowerGrid) -> list[list[str]]:
    adjacency = {name: [] for name in grid.nodes}
    for line in grid.lines.values():
        if line.from_node in adjacency and line.to_node in adjacency:
            adjacency[line.from_node].append(line.to_node)
            adjacency[line.to_node].append(line.from_node)
    seen: set[str] = set()
    components = []
    for start in grid.nodes:
        if start in seen:
            continue
        comp, queue = [], deque([start])
        seen.add(start)
        while queue:
            n = queue.popleft()
            comp.append(n)
            for m in adjacency[n]:
                if m not in seen:
                    seen.add(m)
                    queue.append(m)
        components.append(comp)
    return components


def validate(grid: PowerGrid) -> list[Violation]:
    """Structural checks. Errors make the grid unusable; warnings do not."""
    out: list[Violation] = []
    if not grid.nodes:
        out.append(Violation("nodes", "no nodes"))
    for name, model in grid.nodes.items():
        if not isinstance(model, NodeModel):
            out.append(Violation(f"nodes.{name}", f"not a node model: {type(model).__name__}"))
    for name, line in grid.lines.items():
        if not isinstance(line.model, LineModel):
            out.append(Violation(f"lines.{name}", f"not a line model: {type(line.model).__name__}"))
        for end in ("from_node", "to_node"):
            ref = getattr(line, end)
            if ref not in grid.nodes:
                out.append(Violation(f"lines.{name}.{end}", f"unknown endpoint {ref!r}"))
        if line.from_node == line.to_node:
            out.append(Violation(f"lines.{name}", "line connects a node to itself"))
    if not np.isfinite(grid.nominal_hz) or grid.nominal_hz <= 0:
        out.append(Violation("nominal_hz", "nominal frequency must be positive"))
    if any(v.severity == "error" for v in out):
        return out
    components = connected_components(grid)
    if len(components) > 1:
        sizes = ", ".join(str(len(c)) for c in components)
        out.append(Violation("lines", f"grid is disconnected ({len(components)} islands: {sizes} nodes)", "warning"))
    return out


def is_valid(violations: list[Violation]) -> bool:
    return not any(v.severity == "error" for v in violations)


def check(grid: PowerGrid) -> None:
    violations = validate(grid)
    if not is_valid(violations):
        raise GridValidationError([v for v in violations if v.severity == "error"])
    for v in violations:
        log.warning("%s", v)


def aggregate_currents(grid: PowerGrid, voltages: dict, line_states: dict | None = None) -> dict[str, complex]:
    """Sum of terminal currents leaving each node into its incident lines.

    ``voltages`` maps node name to complex voltage; ``line_states`` maps a
    dynamic line's name to its internal state tuple.
    """
    line_states = line_states or {}
    i = {name: 0j for name in grid.nodes}
    for name, line in grid.lines.items():
        I_from, I_to, _ = line.model.currents(
            voltages[line.from_node], voltages[line.to_node], tuple(line_states.get(name, ()))
        )
        i[line.from_node] += I_from
        i[line.to_node] += I_to
    return i


def line_power_losses(grid: PowerGrid, voltages: dict, line_states: dict | None = None) -> complex:
    """Total complex power absorbed by all lines, summed per terminal."""
    line_states = line_states or {}
    total = 0j
    for name, line in grid.lines.items():
        u_f, u_t = voltages[line.from_node], voltages[line.to_node]
        I_from, I_to, _ = line.model.currents(u_f, u_t, tuple(line_states.get(name, ())))
        total += complex_power(u_f, I_from) + complex_power(u_t, I_to)
    return total


class RHSFunction:
    """``f(t, x)`` of the mass-matrix system ``M dx/dt = f(t, x)``.

    Static lines are folded into one nodal admittance matrix built by
    probing each line's two-port; dynamic lines are evaluated per call.
    Any :class:`SingularInputError` raised by a node model turns the whole
    output into NaN, which the integrator treats as a rejected step.
    """

    def __init__(self, grid: PowerGrid):
        self.grid = grid
        self.layout: StateLayout = build_layout(grid)
        self.mass = self.layout.mass
        self.dim = self.layout.dim
        self.node_names = list(grid.nodes)
        pos = {n: k for k, n in enumerate(self.node_names)}
        self._node_pos = pos

        self._node_blocks = []
        for name, model in grid.nodes.items():
            start = self.layout.index(name, "u_re")
            n_int = len(model.internal_names)
            self._node_blocks.append((model, start, start + 2, start + 2 + n_int))
        self.v_index = np.array([b[1] for b in self._node_blocks], dtype=int)

        n = len(self.node_names)
        ybus = np.zeros((n, n), dtype=complex)
        self._dynamic_lines = []
        for name, line in grid.lines.items():
            a, b = pos[line.from_node], pos[line.to_node]
            model = line.model
            if model.is_static:
                # linear two-port: probe with unit voltages
                f1, t1 = model.two_port(1 + 0j, 0j)
                f2, t2 = model.two_port(0j, 1 + 0j)
                ybus[a, a] += f1
                ybus[a, b] += f2
                ybus[b, a] += t1
                ybus[b, b] += t2
            else:
                k = self.layout.index(name, model.internal_names[0])
                self._dynamic_lines.append((model, a, b, k, k + len(model.internal_names)))
        self.ybus = ybus

    def voltages(self, x: np.ndarray) -> np.ndarray:
        return x[self.v_index] + 1j * x[self.v_index + 1]

    def node_currents(self, x: np.ndarray) -> np.ndarray:
        return self._currents(x, self.voltages(x), None)

    def node_currents_batch(self, xs: np.ndarray) -> np.ndarray:
        """Node currents for a stack of states, shape (samples, nodes)."""
        xs = np.atleast_2d(xs)
        u = xs[:, self.v_index] + 1j * xs[:, self.v_index + 1]
        i = u @ self.ybus.T
        for model, a, b, s, e in self._dynamic_lines:
            for k in range(len(xs)):
                I_from, I_to, _ = model.currents(u[k, a], u[k, b], tuple(xs[k, s:e].tolist()))
                i[k, a] += I_from
                i[k, b] += I_to
        return i

    def _currents(self, x, u, out):
        i = self.ybus @ u
        for model, a, b, s, e in self._dynamic_lines:
            I_from, I_to, dx = model.currents(u[a], u[b], tuple(x[s:e].tolist()))
            i[a] += I_from
            i[b] += I_to
            if out is not None:
                out[s:e] = dx
        return i

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        u = self.voltages(x)
        i = self._currents(x, u, out)
        try:
            for k, (model, s, m, e) in enumerate(self._node_blocks):
                r_u, r_int = model.rhs(complex(u[k]), complex(i[k]), tuple(x[m:e].tolist()), t)
                out[s] = r_u.real
                out[s + 1] = r_u.imag
                if e > m:
                    out[m:e] = r_int
        except SingularInputError:
            out[:] = np.nan
        return out

    def algebraic_residual(self, t: float, x: np.ndarray) -> np.ndarray:
        return self(t, x)[~self.mass]


def build_rhs(grid: PowerGrid) -> RHSFunction:
    check(grid)
    return RHSFunction(grid)
