"""Complex dq phasors, the flat state layout and named state access.

Phasors are plain Python ``complex`` numbers: the real part is the
d-component and the imaginary part the q-component, both per-unit.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import LayoutConflictError, UnknownVariableError

VOLTAGE_VARS = ("u_re", "u_im")

# ASCII spellings accepted wherever a variable name is looked up
VAR_ALIASES = {
    "omega": "ω",
    "theta": "θ",
    "eps": "ε",
    "epsilon": "ε",
    "phi": "φ",
}


def canonical_var(name: str) -> str:
    return VAR_ALIASES.get(name, name)


def complex_power(u: complex, i: complex) -> complex:
    """Return ``s = p + jq = u * conj(i)``."""
    return u * i.conjugate()


class LayoutEntry(NamedTuple):
    owner: str
    var: str
    index: int
    differential: bool


@dataclass(frozen=True)
class StateLayout:
    """Ordered map (owner, variable) <-> position in the flat state vector."""

    entries: tuple[LayoutEntry, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for pos, e in enumerate(self.entries):
            if e.index != pos:
                raise LayoutConflictError(f"entry {e.owner}:{e.var} has index {e.index}, expected {pos}")
            key = (e.owner, e.var)
            if key in index:
                raise LayoutConflictError(f"duplicate state variable {e.owner}:{e.var}")
            index[key] = pos
        object.__setattr__(self, "_index", index)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def mass(self) -> np.ndarray:
        return np.array([e.differential for e in self.entries], dtype=bool)

    @property
    def names(self) -> list[str]:
        return [f"{e.owner}:{e.var}" for e in self.entries]

    def index(self, owner: str, var: str) -> int:
        try:
            return self._index[(owner, canonical_var(var))]
        except KeyError:
            raise UnknownVariableError(f"no state variable {owner}:{var}") from None

    def __contains__(self, key) -> bool:
        owner, var = key
        return (owner, canonical_var(var)) in self._index

    def entry(self, index: int) -> LayoutEntry:
        return self.entries[index]

    def owners(self) -> list[str]:
        seen = dict.fromkeys(e.owner for e in self.entries)
        return list(seen)

    def owner_slice(self, owner: str) -> slice:
        idx = [e.index for e in self.entries if e.owner == owner]
        if not idx:
            raise UnknownVariableError(f"no state variables for {owner!r}")
        return slice(idx[0], idx[-1] + 1)


def _entries_for(owner: str, names: Iterable[str], flags: Iterable[bool], start: int):
    names, flags = list(names), list(flags)
    if len(names) != len(flags):
        raise LayoutConflictError(f"{owner}: {len(names)} variables but {len(flags)} mass flags")
    return [LayoutEntry(owner, n, start + k, bool(f)) for k, (n, f) in enumerate(zip(names, flags))]


def build_layout(grid) -> StateLayout:
    """Layout of ``grid``: node blocks in insertion order, then line internals."""
    entries: list[LayoutEntry] = []
    for name, node in grid.nodes.items():
        names = VOLTAGE_VARS + tuple(node.internal_names)
        entries += _entries_for(name, names, node.mass_flags(), len(entries))
    for name, line in grid.lines.items():
        model = line.model
        if model.internal_names:
            entries += _entries_for(name, model.internal_names, model.mass_flags(), len(entries))
    return StateLayout(tuple(entries))


class State:
    """Flat real state vector bound to a layout."""

    __slots__ = ("layout", "values")

    def __init__(self, layout: StateLayout, values=None):
        self.layout = layout
        if values is None:
            values = np.zeros(layout.dim)
        values = np.array(values, dtype=float)
        if values.shape != (layout.dim,):
            raise ValueError(f"state has {values.shape} entries, layout needs ({layout.dim},)")
        if not np.all(np.isfinite(values)):
            raise ValueError("state contains non-finite values")
        self.values = values

    def copy(self) -> "State":
        return State(self.layout, self.values.copy())

    def __getitem__(self, key):
        owner, var = key
        return get_variable(self, owner, var)

    def __setitem__(self, key, value):
        owner, var = key
        set_variable(self, owner, var, value)

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"State(dim={self.layout.dim})"

    def voltage(self, owner: str) -> complex:
        k = self.layout.index(owner, "u_re")
        return complex(self.values[k], self.values[k + 1])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.layout.names, self.values)}


def get_variable(state: State, owner: str, var: str):
    """Read a state entry; "u", "v" and "φ" are derived from the voltage pair."""
    var = canonical_var(var)
    if var in ("u", "v", "φ"):
        u = state.voltage(owner)
        if var == "u":
            return u
        return abs(u) if var == "v" else cmath.phase(u)
    return float(state.values[state.layout.index(owner, var)])


def set_variable(state: State, owner: str, var: str, value) -> None:
    var = canonical_var(var)
    if var in ("u", "v", "φ"):
        u = state.voltage(owner)
        if var == "u":
            u = complex(value)
        elif var == "v":
            u = cmath.rect(float(value), cmath.phase(u))
        else:
            u = cmath.rect(abs(u), float(value))
        k = state.layout.index(owner, "u_re")
        state.values[k], state.values[k + 1] = u.real, u.imag
        return
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{owner}:{var} must be finite, got {value}")
    state.values[state.layout.index(owner, var)] = value
