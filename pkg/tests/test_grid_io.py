import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsim import cases
from gridsim.errors import SchemaError
from gridsim.grid import Line, PowerGrid, is_valid, validate
from gridsim.grid_io import (
    load_powergrid,
    read_powergrid,
    read_solution_csv,
    read_state,
    sample_times,
    save_powergrid,
    write_powergrid,
    write_solution_csv,
    write_state,
)
from gridsim.lines import PiModelLine
from gridsim.nodes import PQAlgebraic, SlackAlgebraic
from gridsim.scenarios import ChangeInitialConditions, simulate
from gridsim.steady_state import find_operationpoint

MINIMAL = '{"version": "1", "omega_nominal_hz": 50.0, "nodes": [{"name": "bus1", "type": "SlackAlgebraic", "params": {"U_re": 1.0, "U_im": 0.0}}], "lines": []}'


def doc(**changes):
    d = json.loads(cases.data_path("two_bus").read_text(encoding="utf-8"))
    d.update(changes)
    return d


def test_minimal_document():
    grid = read_powergrid(MINIMAL)
    assert list(grid.nodes) == ["bus1"] and grid.nodes["bus1"] == SlackAlgebraic(U=1 + 0j)
    assert grid.lines == {} and grid.nominal_hz == 50.0


@pytest.mark.parametrize("name", cases.SHIPPED)
def test_shipped_round_trips(name):
    text = cases.data_path(name).read_text(encoding="utf-8")
    grid = read_powergrid(text)
    assert write_powergrid(grid) == text
    assert read_powergrid(write_powergrid(grid)) == grid
    assert write_powergrid(grid) == write_powergrid(read_powergrid(text))
    assert grid == cases.BUILDERS[name]()


def test_ieee14_file_counts():
    grid = cases.load("ieee14")
    assert (len(grid.nodes), len(grid.lines)) == (16, 20)
    assert is_valid(validate(grid))
    kinds = [type(line.model).__name__ for line in grid.lines.values()]
    assert kinds.count("PiModelLine") == 17 and kinds.count("Transformer") == 3


@settings(max_examples=30, deadline=None)
@given(
    values=st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False), min_size=6, max_size=6),
    p=st.floats(-10, 10, allow_nan=False),
)
def test_exact_numeric_round_trip(values, p):
    a, b, c, d, e, f = values
    a = a if a != 0 else 1.0  # a zero series admittance is invalid
    model = PiModelLine(y=complex(a, b), y_shunt_from=complex(c, d), y_shunt_to=complex(e, f))
    grid = PowerGrid(
        {"bus1": SlackAlgebraic(U=1 + 0j), "bus2": PQAlgebraic(P=p, Q=0.0)},
        {"l": Line(model, "bus1", "bus2")},
    )
    back = read_powergrid(write_powergrid(grid))
    assert back == grid
    assert write_powergrid(back) == write_powergrid(grid)


def test_save_and_load(tmp_path, validation_grid):
    path = tmp_path / "grid.json"
    save_powergrid(validation_grid, path)
    assert load_powergrid(path) == validation_grid


@pytest.mark.parametrize("bad", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_parameters_rejected(bad):
    text = MINIMAL.replace('"U_re": 1.0', f'"U_re": {bad}')
    with pytest.raises(SchemaError, match="non-finite"):
        read_powergrid(text)


def test_missing_parameter_has_path():
    d = doc()
    del d["lines"][0]["params"]["Y_im"]
    with pytest.raises(SchemaError, match=r"lines\[0\]\.params\.Y_im missing"):
        read_powergrid(json.dumps(d))


def test_unknown_types_and_parameters():
    d = doc()
    d["nodes"][1]["type"] = "Flywheel"
    with pytest.raises(SchemaError, match="Flywheel"):
        read_powergrid(json.dumps(d))
    d = doc()
    d["nodes"][1]["params"]["K"] = 1.0
    with pytest.raises(SchemaError, match="unknown parameter"):
        read_powergrid(json.dumps(d))


@pytest.mark.parametrize(
    "changes, message",
    [({"version": "2"}, "version"), ({"nodes": {}}, "nodes"), ({"lines": [42]}, r"lines\[0\]")],
)
def test_schema_errors(changes, message):
    with pytest.raises(SchemaError, match=message):
        read_powergrid(json.dumps(doc(**changes)))


def test_malformed_json_and_duplicates():
    with pytest.raises(SchemaError, match="malformed"):
        read_powergrid("{")
    d = doc()
    d["nodes"][1]["name"] = "bus1"
    with pytest.raises(SchemaError, match="duplicate"):
        read_powergrid(json.dumps(d))


def test_state_round_trip(validation_grid):
    op = find_operationpoint(validation_grid)
    back = read_state(write_state(op), validation_grid)
    assert np.array_equal(back.values, op.values) and back.layout == op.layout
    with pytest.raises(SchemaError):
        read_state(write_state(op), cases.load("two_bus"))


def test_sample_times():
    assert np.array_equal(sample_times(0.0, 1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0])
    t = sample_times(0.0, 1.0, 0.3)
    assert t[-1] == 1.0 and len(t) == 5
    assert sample_times(0.0, 5.0, 0.01)[-1] == 5.0 and len(sample_times(0.0, 5.0, 0.01)) == 501
    with pytest.raises(ValueError):
        sample_times(0.0, 1.0, 0.0)


def test_csv_columns_for_slack_vsi(slack_vsi):
    op = find_operationpoint(slack_vsi)
    sol = simulate(ChangeInitialConditions(()), slack_vsi, op, (0.0, 1.0))
    header, data = read_solution_csv(write_solution_csv(sol, 0.1))
    assert len(header) == 13
    assert header[:3] == ["t", "bus1:u_re", "bus1:u_im"]
    assert header[-3:] == ["bus2:v", "bus2:p", "bus2:q"]
    assert data.shape == (11, 13)
    # a solution started at its operation point is constant
    assert np.max(np.abs(data[:, 1:] - data[0, 1:])) < 1e-9


def test_csv_constant_solution_rows_identical(two_bus):
    grid = cases.load("slack_only")
    sol = simulate(ChangeInitialConditions(()), grid, find_operationpoint(grid), (0.0, 2.0))
    _, data = read_solution_csv(write_solution_csv(sol, 0.5))
    assert len(data) == 5
    assert all(np.array_equal(row[1:], data[0, 1:]) for row in data)
    # Newton re-solves the algebraic rows every step, so only rounding noise remains
    sol = simulate(ChangeInitialConditions(()), two_bus, find_operationpoint(two_bus), (0.0, 2.0))
    _, data = read_solution_csv(write_solution_csv(sol, 0.5))
    assert np.max(np.abs(data[:, 1:] - data[0, 1:])) < 1e-12


def test_csv_matches_series(validation_grid):
    op = find_operationpoint(validation_grid)
    sol = simulate(ChangeInitialConditions((("bus3", "ω", 0.05),)), validation_grid, op, (0.0, 1.0))
    text = write_solution_csv(sol, 0.05)
    header, data = read_solution_csv(text)
    t = data[:, 0]
    for k, col in enumerate(header[1:], start=1):
        owner, var = col.split(":")
        assert np.array_equal(data[:, k], sol.series(owner, var, t))
    assert write_solution_csv(sol, 0.05) == text
