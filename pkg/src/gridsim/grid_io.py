"""JSON grid and state files, CSV export of solutions.

Grid file layout (UTF-8 JSON)::

    {"version": "1",
     "omega_nominal_hz": 50.0,
     "nodes": [{"name": "bus1", "type": "SlackAlgebraic", "params": {"U_re": 1.0, "U_im": 0.0}}, ...],
     "lines": [{"name": "branch1", "type": "PiModelLine", "from": "bus1", "to": "bus2",
                "params": {"y_re": ..., "y_im": ..., ...}}, ...]}

Complex parameters are split into ``NAME_re`` / ``NAME_im``. Node and line
order in the file is the state layout order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np

from .errors import ModelParameterError, SchemaError, UnknownVariableError
from .grid import Line, PowerGrid
from .lines import LINE_TYPES
from .nodes import NODE_TYPES, canonical_param, field_param
from .phasor import State, build_layout

FORMAT_VERSION = "1"


def _complex_fields(cls) -> set[str]:
    out = set()
    for f in dataclasses.fields(cls):
        default = f.default
        if f.type in ("complex", complex) or isinstance(default, complex):
            out.add(f.name)
    return out


def _encode_params(model) -> dict:
    out = {}
    cfields = _complex_fields(type(model))
    for f in dataclasses.fields(model):
        value = getattr(model, f.name)
        key = canonical_param(f.name)
        if f.name in cfields:
            value = complex(value)
            out[f"{key}_re"] = value.real
            out[f"{key}_im"] = value.imag
        else:
            out[key] = float(value)
    return out


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{path} must be finite, got {value!r}")
    return value


def _decode_params(cls, params, path):
    if not isinstance(params, dict):
        raise SchemaError(f"{path} must be an object")
    cfields = _complex_fields(cls)
    kwargs, used = {}, set()
    for f in dataclasses.fields(cls):
        key = canonical_param(f.name)
        has_default = f.default is not dataclasses.MISSING
        if f.name in cfields:
            parts = []
            for suffix in ("_re", "_im"):
                k = key + suffix
                if k in params:
                    used.add(k)
                    parts.append(_number(params[k], f"{path}.{k}"))
                elif has_default:
                    parts.append(None)
                else:
                    raise SchemaError(f"{path}.{k} missing")
            if parts != [None, None]:
                if None in parts:
                    missing = key + ("_re" if parts[0] is None else "_im")
                    raise SchemaError(f"{path}.{missing} missing")
                kwargs[f.name] = complex(parts[0], parts[1])
        else:
            if key in params:
                used.add(key)
                kwargs[f.name] = _number(params[key], f"{path}.{key}")
            elif not has_default:
                raise SchemaError(f"{path}.{key} missing")
    unknown = [k for k in params if k not in used]
    if unknown:
        raise SchemaError(f"{path}: unknown parameter(s) {', '.join(map(repr, unknown))} for {cls.__name__}")
    try:
        return cls(**kwargs)
    except ModelParameterError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _reject_constant(name):
    raise SchemaError(f"non-finite number {name} is not allowed")


def _load_json(text: str):
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from None


def _expect(obj, key, kind, path):
    if key not in obj:
        raise SchemaError(f"{path}.{key} missing" if path else f"{key} missing")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(f"{path + '.' if path else ''}{key} has wrong type {type(value).__name__}")
    return value


def read_powergrid(text: str) -> PowerGrid:
    doc = _load_json(text)
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    version = _expect(doc, "version", str, "")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported version {version!r} (expected {FORMAT_VERSION!r})")
    hz = _number(doc.get("omega_nominal_hz", 50.0), "omega_nominal_hz")
    nodes = {}
    for k, entry in enumerate(_expect(doc, "nodes", list, "")):
        path = f"nodes[{k}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{path} must be an object")
        name = _expect(entry, "name", str, path)
        type_name = _expect(entry, "type", str, path)
        if type_name not in NODE_TYPES:
            raise SchemaError(f"{path}.type: unknown node type {type_name!r}")
        if name in nodes:
            raise SchemaError(f"{path}.name: duplicate node name {name!r}")
        nodes[name] = _decode_params(NODE_TYPES[type_name], entry.get("params", {}), f"{path}.params")
    lines = {}
    for k, entry in enumerate(doc.get("lines", [])):
        path = f"lines[{k}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{path} must be an object")
        name = _expect(entry, "name", str, path)
        type_name = _expect(entry, "type", str, path)
        if type_name not in LINE_TYPES:
            raise SchemaError(f"{path}.type: unknown line type {type_name!r}")
        if name in lines:
            raise SchemaError(f"{path}.name: duplicate line name {name!r}")
        src = _expect(entry, "from", str, path)
        dst = _expect(entry, "to", str, path)
        model = _decode_params(LINE_TYPES[type_name], entry.get("params", {}), f"{path}.params")
        lines[name] = Line(model, src, dst)
    return PowerGrid(nodes, lines, hz)


def write_powergrid(grid: PowerGrid) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "omega_nominal_hz": float(grid.nominal_hz),
        "nodes": [
            {"name": name, "type": model.type_name, "params": _encode_params(model)}
            for name, model in grid.nodes.items()
        ],
        "lines": [
            {
                "name": name,
                "type": line.model.type_name,
                "from": line.from_node,
                "to": line.to_node,
                "params": _encode_params(line.model),
            }
            for name, line in grid.lines.items()
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def load_powergrid(path) -> PowerGrid:
    with open(path, encoding="utf-8") as fh:
        return read_powergrid(fh.read())


def save_powergrid(grid: PowerGrid, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(write_powergrid(grid))


def write_state(state: State) -> str:
    return json.dumps({"version": FORMAT_VERSION, "values": state.as_dict()}, indent=2, ensure_ascii=False) + "\n"


def read_state(text: str, grid: PowerGrid) -> State:
    doc = _load_json(text)
    if not isinstance(doc, dict) or not isinstance(doc.get("values"), dict):
        raise SchemaError("state file needs a 'values' object")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported state version {doc.get('version')!r}")
    layout = build_layout(grid)
    values = doc["values"]
    x = np.empty(layout.dim)
    for k, name in enumerate(layout.names):
        if name not in values:
            raise SchemaError(f"values.{name} missing")
        x[k] = _number(values[name], f"values.{name}")
    extra = set(values) - set(layout.names)
    if extra:
        raise SchemaError(f"values: unknown variable(s) {', '.join(sorted(extra))}")
    return State(layout, x)


def sample_times(t0: float, t1: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("sample step must be > 0")
    n = int(math.floor((t1 - t0) / step + 1e-9))
    times = t0 + step * np.arange(n + 1)
    times = times[times <= t1]
    if t1 - times[-1] > 1e-9 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    else:
        times[-1] = t1
    return times


def solution_columns(solution) -> list[tuple[str, str]]:
    layout = build_layout(solution.grid)
    cols = [(e.owner, e.var) for e in layout.entries]
    for name in solution.grid.nodes:
        cols += [(name, "v"), (name, "p"), (name, "q")]
    return cols


def write_solution_csv(solution, step: float) -> str:
    """Header ``t`` + ``OWNER:VAR`` per layout entry + ``OWNER:v/p/q`` per node."""
    times = sample_times(solution.t0, solution.t1, step)
    cols = solution_columns(solution)
    data = [times]
    for owner, var in cols:
        try:
            data.append(solution.series(owner, var, times))
        except UnknownVariableError:
            data.append(np.full(len(times), np.nan))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"{o}:{v}" for o, v in cols])
    for row in np.column_stack(data):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_solution_csv(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    return header, np.array([[float(v) for v in row] for row in rows[1:]])


__all__ = [
    "read_powergrid",
    "write_powergrid",
    "load_powergrid",
    "save_powergrid",
    "read_state",
    "write_state",
    "write_solution_csv",
    "read_solution_csv",
    "sample_times",
    "field_param",
]
