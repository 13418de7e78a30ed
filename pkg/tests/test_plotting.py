import re

import pytest

from gridsim import cases
from gridsim.errors import UnknownVariableError
from gridsim.plotting import render_plot_svg, resolve_selections
from gridsim.scenarios import ChangeInitialConditions, LineFailure, simulate
from gridsim.steady_state import find_operationpoint


def run(grid, fault=None, tspan=(0.0, 1.0)):
    fault = fault or ChangeInitialConditions(())
    return simulate(fault, grid, find_operationpoint(grid), tspan)


def series_path(svg, owner, var):
    m = re.search(rf'<g id="series-{owner}-{var}">\s*<path d="([^"]*)"', svg)
    assert m, f"no series {owner}-{var}"
    return [tuple(map(float, p.split())) for p in re.findall(r"[ML] ([-\d. ]+)", m.group(1))]


@pytest.fixture(scope="module")
def line_failure(ieee14):
    return run(ieee14, LineFailure("branch13", (0.5, 2.0)), (0.0, 2.0))


def test_default_panels_for_line_failure(line_failure):
    svg = render_plot_svg(line_failure)
    panels = re.findall(r'<g id="panel-([^"]+)">', svg)
    assert panels == ["v", "p", "ω"]
    assert svg.count('<g id="series-') == 16 + 16 + 4


def test_output_is_deterministic(line_failure):
    assert render_plot_svg(line_failure) == render_plot_svg(line_failure)
    assert "<dc:date>" not in render_plot_svg(line_failure)


def test_constant_series_is_horizontal(two_bus):
    svg = render_plot_svg(run(two_bus))
    pts = series_path(svg, "bus1", "v")
    assert len(pts) > 2
    assert pts[0][1] == pts[-1][1]
    assert pts[-1][0] > pts[0][0]


def test_panels_without_providers_are_skipped(two_bus):
    svg = render_plot_svg(run(two_bus))
    assert re.findall(r'<g id="panel-([^"]+)">', svg) == ["v", "p"]


def test_explicit_selection(validation_grid):
    sol = run(validation_grid)
    panels = resolve_selections(sol, ["bus4:ω", "v", "bus3:ω"])
    assert list(panels.items()) == [("ω", ["bus4", "bus3"]), ("v", ["bus1", "bus2", "bus3", "bus4"])]
    svg = render_plot_svg(sol, ["bus4:ω"], title="PLL")
    assert re.findall(r'<g id="(series-[^"]+)">', svg) == ["series-bus4-ω"]


@pytest.mark.parametrize("selection", [["bus2:ω"], ["nowhere:v"], ["ω"]])
def test_unresolvable_selection(two_bus, selection):
    with pytest.raises(UnknownVariableError):
        render_plot_svg(run(two_bus), selection)


def test_empty_time_range_rejected(two_bus):
    sol = run(two_bus)
    traj = sol.segments[0].trajectory
    traj.times = traj.times[:1]
    traj.values = traj.values[:1]
    with pytest.raises(ValueError, match="empty time range"):
        render_plot_svg(sol)


def test_shipped_slack_only_has_voltage_panel():
    svg = render_plot_svg(run(cases.load("slack_only")))
    assert re.findall(r'<g id="panel-([^"]+)">', svg) == ["v", "p"]
