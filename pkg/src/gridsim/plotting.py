"""SVG figures of simulation results, one panel per variable group."""

from __future__ import annotations

import io
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")

from matplotlib.backends.backend_svg import FigureCanvasSVG  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .errors import UnknownVariableError  # noqa: E402
from .phasor import canonical_var  # noqa: E402

DEFAULT_PANELS = ("v", "p", "ω")

LABELS = {
    "v": "voltage magnitude [pu]",
    "φ": "voltage angle [rad]",
    "p": "active power [pu]",
    "q": "reactive power [pu]",
    "ω": "frequency deviation [rad/s]",
}

STYLE = {
    "svg.hashsalt": "gridsim",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "legend.fontsize": 7,
    "legend.frameon": False,
}


def resolve_selections(solution, selections, strict: bool = True) -> "OrderedDict[str, list[str]]":
    """Group selections into panels: ``"v"`` expands to every node that has
    a voltage series, ``"bus3:ω"`` adds one owner to the ``ω`` panel.

    With ``strict=False`` a bare variable no node provides is skipped
    instead of raising.
    """
    panels: OrderedDict[str, list[str]] = OrderedDict()
    for sel in selections:
        owner, sep, var = sel.rpartition(":")
        var = canonical_var(var)
        if sep:
            if not solution.has_variable(owner, var):
                raise UnknownVariableError(f"cannot plot {sel!r}: no such series")
            owners = [owner]
        else:
            owners = [n for n in solution.grid.nodes if solution.has_variable(n, var)]
            if not owners and not strict:
                continue
            if not owners:
                raise UnknownVariableError(f"cannot plot {sel!r}: no node provides it")
        panel = panels.setdefault(var, [])
        panel += [o for o in owners if o not in panel]
    return panels


def render_figure(solution, selections=None, title: str | None = None) -> Figure:
    if not solution.t1 > solution.t0:
        raise ValueError("cannot plot an empty time range")
    if selections is None:
        panels = resolve_selections(solution, DEFAULT_PANELS, strict=False)
    else:
        panels = resolve_selections(solution, selections)
    if not panels:
        raise ValueError("nothing to plot")
    fig = Figure(figsize=(7.0, 2.3 * len(panels) + 0.4))
    axes = fig.subplots(len(panels), 1, sharex=True, squeeze=False)[:, 0]
    for ax, (var, owners) in zip(axes, panels.items()):
        ax.set_gid(f"panel-{var}")
        for owner in owners:
            t, y = solution.raw_series(owner, var)
            (line,) = ax.plot(t, y, label=owner)
            line.set_gid(f"series-{owner}-{var}")
        ax.set_ylabel(LABELS.get(var, var))
        ax.legend(loc="upper right", ncol=max(1, (len(owners) + 7) // 8))
    axes[-1].set_xlabel("time [s]")
    axes[-1].set_xlim(solution.t0, solution.t1)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def render_plot_svg(solution, selections=None, title: str | None = None) -> str:
    """Render the solution as an SVG document; byte-identical for identical input.

    Without ``selections`` the panels are ``v``, ``p`` and ``ω``, leaving
    out any group that no node of the grid provides.
    """
    with matplotlib.rc_context(STYLE):
        fig = render_figure(solution, selections, title)
        buf = io.StringIO()
        FigureCanvasSVG(fig).print_svg(buf, metadata={"Date": None})
    return buf.getvalue()
