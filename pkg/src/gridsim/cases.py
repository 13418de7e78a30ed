"""Builders for the example grids shipped in ``gridsim/data``.

``ieee14`` follows the IEEE 14-bus branch data (17 lines, 3 transformers)
with bus 1 as the slack reference, fourth-order machines at the other four
generator sites and constant-power loads. Buses 2 and 3 carry a generator
and a load as separate nodes, bus 7 is a zero-power junction and the small
bus 6 load is netted into its machine, which gives 5 generators and 11
loads on 16 nodes. Machine field voltages and mechanical powers are
back-calculated from a power flow so the flat-start Newton lands on a
realistic operating point.
"""

from __future__ import annotations

import cmath
import math
from importlib import resources

import numpy as np
from scipy import optimize

from .grid import Line, PowerGrid, build_rhs
from .grid_io import read_powergrid, write_powergrid
from .lines import PiModelLine, StaticLine, Transformer
from .nodes import TWO_PI_50, FourthOrderEq, GridFollowingPLL, PQAlgebraic, SlackAlgebraic, VSIVoltagePT1
from .steady_state import default_guess

SHIPPED = ("slack_only", "two_bus", "validation", "ieee14")

# (from bus, to bus, r, x, b_total, tap or None); IEEE 14-bus branch table
IEEE14_BRANCHES = [
    (1, 2, 0.01938, 0.05917, 0.0528, None),
    (1, 5, 0.05403, 0.22304, 0.0492, None),
    (2, 3, 0.04699, 0.19797, 0.0438, None),
    (2, 4, 0.05811, 0.17632, 0.0340, None),
    (2, 5, 0.05695, 0.17388, 0.0346, None),
    (3, 4, 0.06701, 0.17103, 0.0128, None),
    (4, 5, 0.01335, 0.04211, 0.0, None),
    (4, 7, 0.0, 0.20912, 0.0, 0.978),
    (4, 9, 0.0, 0.55618, 0.0, 0.969),
    (5, 6, 0.0, 0.25202, 0.0, 0.932),
    (6, 11, 0.09498, 0.19890, 0.0, None),
    (6, 12, 0.12291, 0.25581, 0.0, None),
    (6, 13, 0.06615, 0.13027, 0.0, None),
    (7, 8, 0.0, 0.17615, 0.0, None),
    (7, 9, 0.0, 0.11001, 0.0, None),
    (9, 10, 0.03181, 0.08450, 0.0, None),
    (9, 14, 0.12711, 0.27038, 0.0, None),
    (10, 11, 0.08205, 0.19207, 0.0, None),
    (12, 13, 0.22092, 0.19988, 0.0, None),
    (13, 14, 0.17093, 0.34802, 0.0, None),
]

# load P, Q in pu on 100 MVA
IEEE14_LOADS = {
    2: (0.217, 0.127), 3: (0.942, 0.190), 4: (0.478, -0.039), 5: (0.076, 0.016),
    6: (0.112, 0.075), 7: (0.0, 0.0), 9: (0.295, 0.166), 10: (0.090, 0.058),
    11: (0.035, 0.018), 12: (0.061, 0.016), 13: (0.135, 0.058), 14: (0.149, 0.050),
}

# generator dispatch (P, |u|) used for the back-calculation power flow
IEEE14_DISPATCH = {2: (0.40, 1.045), 3: (0.0, 1.01), 6: (0.0, 1.07), 8: (0.0, 1.09)}

# damping of 2 pu on per-unit speed, rescaled because ω is in rad/s here
_D = 2.0 / TWO_PI_50

MACHINE_DATA = {
    2: dict(H=6.54, D=_D, T_d_dash=6.1, T_q_dash=0.3, X_d=1.05, X_q=0.98, X_d_dash=0.185, X_q_dash=0.36),
    3: dict(H=5.06, D=_D, T_d_dash=4.75, T_q_dash=1.5, X_d=1.25, X_q=1.22, X_d_dash=0.232, X_q_dash=0.715),
    6: dict(H=5.06, D=_D, T_d_dash=4.75, T_q_dash=1.5, X_d=1.25, X_q=1.22, X_d_dash=0.232, X_q_dash=0.715),
    8: dict(H=5.06, D=_D, T_d_dash=4.75, T_q_dash=1.5, X_d=1.25, X_q=1.22, X_d_dash=0.232, X_q_dash=0.715),
}

# terminal of each IEEE branch end: generator node where the bus is split
_SPLIT_TERMINALS = {(2, 1): "gen2", (2, 3): "gen2", (2, 4): "gen2", (3, 4): "gen3"}


def _terminal(bus: int, other: int) -> str:
    if (bus, other) in _SPLIT_TERMINALS:
        return _SPLIT_TERMINALS[(bus, other)]
    if bus in (1,):
        return "bus1"
    if bus in (6, 8):
        return f"gen{bus}"
    return f"bus{bus}"


def slack_only() -> PowerGrid:
    return PowerGrid({"bus1": SlackAlgebraic(U=1 + 0j)})


def two_bus() -> PowerGrid:
    """Slack feeding a constant-power load through a lossless line."""
    return PowerGrid(
        {"bus1": SlackAlgebraic(U=1 + 0j), "bus2": PQAlgebraic(P=-0.3, Q=0.0)},
        {"line1": Line(StaticLine(Y=-20j), "bus1", "bus2")},
    )


def slack_vsi() -> PowerGrid:
    return PowerGrid(
        {
            "bus1": SlackAlgebraic(U=1 + 0j),
            "bus2": VSIVoltagePT1(tau_v=0.1, tau_P=0.2, tau_Q=0.2, K_P=0.5, K_Q=0.1, V_r=1.0, P=0.2, Q=0.0),
        },
        {"line1": Line(StaticLine(Y=-10j), "bus1", "bus2")},
    )


def validation() -> PowerGrid:
    """Lab topology: grid connection, load, and transformer-coupled
    grid-forming (bus3) and grid-following (bus4) inverters."""
    nodes = {
        "bus1": SlackAlgebraic(U=1 + 0j),
        "bus2": PQAlgebraic(P=-0.3, Q=-0.05),
        "bus3": VSIVoltagePT1(tau_v=0.05, tau_P=0.1, tau_Q=0.1, K_P=0.5, K_Q=0.1, V_r=1.0, P=0.1, Q=0.0),
        "bus4": GridFollowingPLL(tau_v=0.02, K_pll_p=20.0, K_pll_i=200.0, K_P=0.05, K_Q=0.5, V_r=1.0, P=0.1, Q=0.0),
    }
    lines = {
        "line12": Line(StaticLine(Y=1 / complex(0.02, 0.1)), "bus1", "bus2"),
        "trafo23": Line(Transformer(y=1 / complex(0.01, 0.08), t_ratio=1 + 0j), "bus2", "bus3"),
        "trafo24": Line(Transformer(y=1 / complex(0.01, 0.08), t_ratio=1 + 0j), "bus2", "bus4"),
    }
    return PowerGrid(nodes, lines)


def _ieee14_lines() -> dict[str, Line]:
    lines = {}
    for k, (a, b, r, x, bsh, tap) in enumerate(IEEE14_BRANCHES, start=1):
        y = 1 / complex(r, x)
        src, dst = _terminal(a, b), _terminal(b, a)
        if tap is None:
            model = PiModelLine(y=y, y_shunt_from=0.5j * bsh, y_shunt_to=0.5j * bsh)
        else:
            model = Transformer(y=y, t_ratio=complex(tap, 0.0))
        lines[f"branch{k}"] = Line(model, src, dst)
    return lines


def _ieee14_nodes(generators) -> dict:
    nodes = {"bus1": SlackAlgebraic(U=complex(1.06, 0.0))}
    order = ["gen2", "bus2", "gen3", "bus3", "bus4", "bus5", "gen6", "bus7", "gen8"]
    order += [f"bus{k}" for k in range(9, 15)]
    for name in order:
        kind, bus = name[:3], int(name[3:])
        if kind == "gen":
            nodes[name] = generators[bus]
        else:
            p, q = IEEE14_LOADS[bus]
            nodes[name] = PQAlgebraic(P=-p, Q=-q)
    return nodes


def _machine_setpoints(u: complex, i: complex, data: dict) -> dict:
    """E_f and P that make (u, i) an equilibrium of the fourth-order machine."""
    w = u + 1j * (data["X_q"] - data["X_q_dash"]) * i
    theta = cmath.phase(w) - math.pi / 2
    rot = cmath.exp(-1j * theta)
    e_q = (u * rot).imag
    i_c = i * rot
    E_f = e_q + (data["X_d"] - data["X_d_dash"]) * i_c.real
    p = (u * i.conjugate()).real
    P = p + (data["X_q_dash"] - data["X_d_dash"]) * i_c.real * i_c.imag
    return {"E_f": E_f, "P": P}


def _pv_power_flow(grid: PowerGrid, targets: dict) -> np.ndarray:
    """Node voltages with ``targets[name] = (P, |u|)`` held at the named nodes
    and the grid's own equations everywhere else."""
    rhs = build_rhs(grid)
    x0 = default_guess(grid).values
    held = [(rhs.node_names.index(name), rhs.layout.index(name, "u_re"), p, vm) for name, (p, vm) in targets.items()]

    def residual(x):
        out = rhs(0.0, x)
        i = rhs.node_currents(x)
        for n, k, p, vm in held:
            u = complex(x[k], x[k + 1])
            out[k] = (u * np.conj(i[n])).real - p
            out[k + 1] = abs(u) ** 2 - vm**2
        return out

    sol = optimize.root(residual, x0, method="hybr", options={"xtol": 1e-14})
    if not np.max(np.abs(residual(sol.x))) < 1e-10:
        raise RuntimeError(f"IEEE 14 power flow did not converge: {sol.message}")
    return sol.x


def build_ieee14() -> PowerGrid:
    lines = _ieee14_lines()
    dispatch, targets = {}, {}
    for bus, (p, vm) in IEEE14_DISPATCH.items():
        load = IEEE14_LOADS[bus] if bus == 6 else (0.0, 0.0)
        dispatch[bus] = PQAlgebraic(P=p - load[0], Q=-load[1])
        targets[f"gen{bus}"] = (p - load[0], vm)
    pf_grid = PowerGrid(_ieee14_nodes(dispatch), lines)
    x = _pv_power_flow(pf_grid, targets)
    rhs = build_rhs(pf_grid)
    u = dict(zip(rhs.node_names, rhs.voltages(x)))
    i = dict(zip(rhs.node_names, rhs.node_currents(x)))
    machines = {}
    for bus, data in MACHINE_DATA.items():
        name = f"gen{bus}"
        sp = _machine_setpoints(complex(u[name]), complex(i[name]), data)
        machines[bus] = FourthOrderEq(E_f=round(sp["E_f"], 6), P=round(sp["P"], 6) + 0.0, **data)
    return PowerGrid(_ieee14_nodes(machines), lines)


BUILDERS = {
    "slack_only": slack_only,
    "two_bus": two_bus,
    "validation": validation,
    "ieee14": build_ieee14,
}


def data_path(name: str):
    return resources.files("gridsim") / "data" / f"{name}.json"


def load(name: str) -> PowerGrid:
    """Load a shipped example grid by name."""
    if name not in SHIPPED:
        raise KeyError(f"unknown example grid {name!r}; available: {', '.join(SHIPPED)}")
    return read_powergrid(data_path(name).read_text(encoding="utf-8"))


def export_all(directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, builder in BUILDERS.items():
        (directory / f"{name}.json").write_text(write_powergrid(builder()), encoding="utf-8")
