"""Operation point search and algebraic re-initialization."""

from __future__ import annotations

import logging

import numpy as np

from .errors import ConvergenceError, IntegrationError, SingularJacobianError
from .grid import PowerGrid, RHSFunction, build_rhs
from .phasor import State, build_layout
from .solver import SolverOptions, fd_jacobian, integrate

log = logging.getLogger(__name__)

METHODS = ("rootfind", "nlsolve", "dynamic")
RESIDUAL_TOL = 1e-8
POLISH_TOL = 1e-12
REINIT_TOL = 1e-10
MAX_BACKTRACK = 8
STAGNATION_WINDOW = 20
STAGNATION_REDUCTION = 1e-3
FREQUENCY_VARS = ("ω",)


def default_guess(grid: PowerGrid) -> State:
    """Flat start: 1+0j everywhere except slack set-points, model default internals."""
    layout = build_layout(grid)
    x = np.zeros(layout.dim)
    voltages = {}
    for name, model in grid.nodes.items():
        u = complex(model.voltage_guess())
        voltages[name] = u
        k = layout.index(name, "u_re")
        x[k], x[k + 1] = u.real, u.imag
        internals = model.initial_guess(u)
        x[k + 2 : k + 2 + len(internals)] = internals
    for name, line in grid.lines.items():
        internals = line.model.initial_guess(voltages[line.from_node], voltages[line.to_node])
        if internals:
            k = layout.index(name, line.model.internal_names[0])
            x[k : k + len(internals)] = internals
    return State(layout, x)


def _rotation_direction(rhs: RHSFunction, x: np.ndarray) -> np.ndarray:
    """Tangent of a global phase rotation at ``x`` (voltages, angles, filtered voltages)."""
    r = np.zeros_like(x)
    for e in rhs.layout.entries:
        if e.var == "u_re":
            r[e.index], r[e.index + 1] = -x[e.index + 1], x[e.index]
        elif e.var == "vf_re":
            r[e.index], r[e.index + 1] = -x[e.index + 1], x[e.index]
        elif e.var == "θ":
            r[e.index] = 1.0
    return r


def _check_singular(jac: np.ndarray, what: str, rhs: RHSFunction | None = None, x=None):
    s = np.linalg.svd(jac, compute_uv=False)
    if s.size and (s[0] == 0 or s[-1] <= 1e-12 * s[0]):
        if rhs is not None:
            r = _rotation_direction(rhs, x)
            nr = np.linalg.norm(r)
            if nr > 0 and np.linalg.norm(jac @ r) <= 1e-6 * s[0] * nr:
                raise SingularJacobianError(
                    f"{what}: Jacobian is singular along a global phase rotation; "
                    "the grid has no phase reference, add a slack node"
                )
        raise SingularJacobianError(f"{what}: singular Jacobian (try method='dynamic' or a better guess)")


def _damped_newton(f, x0: np.ndarray, *, target: float, what: str, max_iter: int = 100, rhs=None):
    """Newton with Armijo backtracking on ``|f|_2``; returns (x, max|f|).

    The Euclidean merit is used for the line search because the Newton
    direction is always a descent direction for it; convergence is judged
    on the max norm.
    """
    x = x0.copy()
    F = f(x)
    nrm = np.max(np.abs(F)) if F.size else 0.0
    history = [nrm]
    best = (nrm, x.copy())
    for it in range(max_iter):
        if nrm <= target:
            break
        if not np.isfinite(nrm):
            raise ConvergenceError(f"{what}: residual is not finite", best[1])
        jac = fd_jacobian(lambda t, y: f(y), 0.0, x, F)
        _check_singular(jac, what, rhs, x)
        dx = np.linalg.solve(jac, -F)
        lam, merit = 1.0, np.linalg.norm(F)
        for _ in range(MAX_BACKTRACK + 1):
            x_new = x + lam * dx
            F_new = f(x_new)
            nrm_new = np.max(np.abs(F_new))
            if np.isfinite(nrm_new) and np.linalg.norm(F_new) <= (1 - 1e-4 * lam) * merit:
                break
            lam *= 0.5
        else:
            if nrm <= RESIDUAL_TOL:
                break  # already certified; rounding floor reached
            raise ConvergenceError(f"{what}: line search failed at residual {nrm:.3g}", best[1])
        x, F, nrm = x_new, F_new, nrm_new
        history.append(nrm)
        if nrm < best[0]:
            best = (nrm, x.copy())
        if len(history) > STAGNATION_WINDOW:
            old = history[-STAGNATION_WINDOW - 1]
            if nrm > RESIDUAL_TOL and (old - nrm) < STAGNATION_REDUCTION * old:
                raise ConvergenceError(f"{what}: Newton stagnated at residual {nrm:.3g}", best[1])
    else:
        if nrm > RESIDUAL_TOL:
            raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations ({nrm:.3g})", best[1])
    return x, nrm


def _rootfind(rhs: RHSFunction, x0: np.ndarray) -> np.ndarray:
    try:
        x, _ = _damped_newton(lambda y: rhs(0.0, y), x0, target=POLISH_TOL, what="find_operationpoint", rhs=rhs)
    except ConvergenceError as exc:
        if exc.state is not None and not isinstance(exc.state, State):
            exc.state = State(rhs.layout, exc.state)
        raise
    return x


class _DampedRHS:
    """Original RHS with an extra ``-c * ω`` pull on every frequency state."""

    def __init__(self, rhs: RHSFunction, damping: float):
        self.rhs = rhs
        self.mass = rhs.mass
        self.layout = rhs.layout
        self.idx = np.array([e.index for e in rhs.layout.entries if e.var in FREQUENCY_VARS], dtype=int)
        self.damping = damping

    def __call__(self, t, x):
        out = self.rhs(t, x)
        out[self.idx] -= self.damping * x[self.idx]
        return out


def _dynamic(grid: PowerGrid, rhs: RHSFunction, state: State, damping: float, horizon: float) -> np.ndarray:
    state = reinit_algebraic(grid, state)
    damped = _DampedRHS(rhs, damping)
    x = state.values
    t, chunk = 0.0, 1.0
    opts = SolverOptions(rtol=1e-8, atol=1e-10)
    while t < horizon:
        t_next = min(t + chunk, horizon)
        try:
            traj = integrate(damped, x, (t, t_next), opts)
        except IntegrationError as exc:
            raise ConvergenceError(f"find_operationpoint(dynamic): {exc}", State(rhs.layout, x)) from None
        x, t = traj.final.copy(), t_next
        nrm = np.max(np.abs(rhs(0.0, x)))
        log.debug("dynamic relaxation t=%g residual=%.3g", t, nrm)
        if nrm <= RESIDUAL_TOL:
            break
        chunk *= 2
    return _rootfind(rhs, x)


def find_operationpoint(
    grid: PowerGrid,
    method: str = "rootfind",
    guess: State | None = None,
    *,
    damping: float = 1.0,
    horizon: float = 1e3,
) -> State:
    """Steady state of the full grid: ``f(0, x*) = 0`` on every row.

    ``rootfind`` and ``nlsolve`` are the same damped Newton iteration.
    ``dynamic`` first relaxes the grid in time (frequency states get an
    extra damping pull) and then polishes with Newton. Multiple equilibria
    are possible; the one reached from ``guess`` (flat start by default) is
    returned.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    rhs = build_rhs(grid)
    start = guess if guess is not None else default_guess(grid)
    if start.layout != rhs.layout:
        raise ValueError("guess layout does not match the grid")
    if method == "dynamic":
        x = _dynamic(grid, rhs, start, damping, horizon)
    else:
        x = _rootfind(rhs, start.values)
    residual = np.max(np.abs(rhs(0.0, x)))
    if not residual <= RESIDUAL_TOL:
        raise ConvergenceError(f"operation point residual {residual:.3g} exceeds {RESIDUAL_TOL:g}", State(rhs.layout, x))
    return State(rhs.layout, x)


def residual_norm(grid: PowerGrid, state: State, t: float = 0.0) -> float:
    rhs = build_rhs(grid)
    return float(np.max(np.abs(rhs(t, state.values))))


def reinit_algebraic(grid: PowerGrid, state: State, tol: float = REINIT_TOL) -> State:
    """Re-solve the algebraic variables with all differential ones held fixed."""
    rhs = build_rhs(grid)
    if state.layout != rhs.layout:
        raise ValueError("state layout does not match the grid")
    alg = np.flatnonzero(~rhs.mass)
    out = state.copy()
    if alg.size == 0:
        return out
    x = out.values

    def g(y):
        z = x.copy()
        z[alg] = y
        return rhs(0.0, z)[alg]

    if np.max(np.abs(g(x[alg]))) <= tol:
        return out
    try:
        y, _ = _damped_newton(g, x[alg], target=min(tol, 1e-12), what="reinit_algebraic")
    except ConvergenceError as exc:
        raise ConvergenceError(f"no consistent algebraic state: {exc}", out) from None
    residual = np.max(np.abs(g(y)))
    if residual > tol:
        raise ConvergenceError(f"reinit_algebraic residual {residual:.3g} exceeds {tol:g}", out)
    x[alg] = y
    return out
