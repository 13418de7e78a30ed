"""Implicit integration of ``M dx/dt = f(t, x)`` with a diagonal 0/1 mass matrix.

Two one-step methods share a modified-Newton core: implicit Euler (order 1)
and TR-BDF2 (order 2, L-stable, stiffly accurate). Every stage solves

    M (x - z) - c f(t, x) = 0

with iteration matrix ``M - c J``; ``J`` is a forward-difference Jacobian
that is reused across iterations and steps until convergence slows down.
Algebraic rows (``M_ii = 0``) reduce to ``f_i(t, x) = 0`` and are excluded
from the local error norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import InconsistentStateError, IntegrationError
from .phasor import State

log = logging.getLogger(__name__)

GAMMA = 2.0 - math.sqrt(2.0)
D_COEF = GAMMA / 2.0  # equals (1 - γ) / (2 - γ)
BDF_A = 1.0 / (GAMMA * (2.0 - GAMMA))
BDF_B = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))
# local truncation error of TR-BDF2 is C h^3 x''', C = (-3γ² + 4γ - 2) / (12 (2 - γ))
ERR_COEF = (-3 * GAMMA**2 + 4 * GAMMA - 2) / (6 * (2 - GAMMA))

METHODS = ("implicit_euler", "trbdf2")
ORDER = {"implicit_euler": 1, "trbdf2": 2}
CONSISTENCY_TOL = 1e-6


@dataclass
class SolverOptions:
    rtol: float = 1e-6
    atol: float = 1e-6
    h_init: float = 1e-3
    h_min: float = 1e-10
    h_max: float | None = None  # None: length of the time span
    max_steps: int = 10**6
    method: str = "trbdf2"
    newton_tol: float = 1e-9
    newton_max_iter: int = 10
    adaptive: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}, expected one of {METHODS}")
        for name in ("rtol", "atol", "h_init", "h_min", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.h_min > self.h_init:
            raise ValueError("h_min must not exceed h_init")
        if self.h_max is not None and self.h_max < self.h_init:
            raise ValueError("h_max must not be smaller than h_init")
        if self.max_steps < 1 or self.newton_max_iter < 1:
            raise ValueError("max_steps and newton_max_iter must be >= 1")


@dataclass
class SolverStats:
    accepted: int = 0
    rejected: int = 0
    newton_iterations: int = 0
    newton_failures: int = 0
    jacobian_evaluations: int = 0
    jacobian_retries: int = 0
    lu_decompositions: int = 0
    rhs_evaluations: int = 0

    def merge(self, other: "SolverStats") -> "SolverStats":
        return SolverStats(**{k: getattr(self, k) + getattr(other, k) for k in self.__dataclass_fields__})

    def summary(self) -> str:
        return (
            f"steps accepted={self.accepted} rejected={self.rejected} "
            f"newton_iters={self.newton_iterations} newton_failures={self.newton_failures} "
            f"jacobians={self.jacobian_evaluations} (retries {self.jacobian_retries}) "
            f"lu={self.lu_decompositions} f_evals={self.rhs_evaluations}"
        )


@dataclass
class Trajectory:
    """Accepted samples ``(t_k, x_k)`` with linear dense output."""

    times: np.ndarray
    values: np.ndarray
    layout: object = None
    stats: SolverStats = field(default_factory=SolverStats)

    def __len__(self):
        return len(self.times)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def __call__(self, t):
        """Interpolated state vector(s) at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError(f"t outside trajectory range [{self.t0}, {self.t1}]")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        if len(self.times) == 1:
            return np.broadcast_to(self.values[0], t.shape + self.values.shape[1:]).copy()
        t_a, t_b = self.times[k], self.times[k + 1]
        w = ((t - t_a) / (t_b - t_a))[..., None]
        out = (1 - w) * self.values[k] + w * self.values[k + 1]
        # sample points are reproduced exactly
        exact = t == t_a
        out = np.where(exact[..., None], self.values[k], out)
        return out

    def state(self, t: float) -> State:
        if self.layout is None:
            raise ValueError("trajectory carries no layout")
        return State(self.layout, self(t))

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def fd_jacobian(f, t: float, x: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian with steps ``sqrt(eps) * max(|x_j|, 1e-3)``."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = f(t, x)
    n = x.size
    jac = np.empty((f0.size, n))
    sqrt_eps = math.sqrt(np.finfo(float).eps)
    xp = x.copy()
    for j in range(n):
        eps = sqrt_eps * max(abs(x[j]), 1e-3)
        xp[j] = x[j] + eps
        step = xp[j] - x[j]
        jac[:, j] = (f(t, xp) - f0) / step
        xp[j] = x[j]
    return jac


def _as_vector(x0):
    if isinstance(x0, State):
        return x0.values.copy(), x0.layout
    return np.atleast_1d(np.array(x0, dtype=float)), None


def _mass_of(rhs, mass, n):
    if mass is None:
        mass = getattr(rhs, "mass", None)
    if mass is None:
        return np.ones(n, dtype=bool)
    mass = np.asarray(mass, dtype=bool)
    if mass.shape != (n,):
        raise ValueError(f"mass diagonal has shape {mass.shape}, expected ({n},)")
    return mass


class _NewtonFailure(Exception):
    pass


class _Stepper:
    """Holds the Jacobian / LU caches and performs single steps."""

    def __init__(self, f, mass, opts: SolverOptions):
        self.f = f
        self.mass = mass
        self.mass_f = mass.astype(float)
        self.alg = ~mass
        self.opts = opts
        self.stats = SolverStats()
        self.J = None
        self.J_fresh = False
        self._lu = None
        self._lu_c = None
        self._stale = False

    def rhs(self, t, x):
        self.stats.rhs_evaluations += 1
        return self.f(t, x)

    def update_jacobian(self, t, x, fx=None):
        jac = fd_jacobian(self.f, t, x, fx)
        self.stats.jacobian_evaluations += 1
        self.stats.rhs_evaluations += x.size + (fx is None)
        if not np.all(np.isfinite(jac)):
            raise _NewtonFailure("non-finite Jacobian")
        self.J = jac
        self.J_fresh = True
        self._lu = None

    def _factor(self, c):
        if self._lu is None or self._lu_c != c:
            W = np.diag(self.mass_f) - c * self.J
            with np.errstate(all="ignore"):
                lu = lu_factor(W, check_finite=False)
            if not np.all(np.isfinite(lu[0])) or np.any(np.diag(lu[0]) == 0):
                raise _NewtonFailure("singular iteration matrix")
            self._lu, self._lu_c = lu, c
            self.stats.lu_decompositions += 1
        return self._lu

    def _scale(self, x):
        return self.opts.atol + self.opts.rtol * np.abs(x)

    def solve_stage(self, t, z, c, guess):
        """Solve ``M (x - z) - c f(t, x) = 0``; returns ``(x, f(t, x))``."""
        opts = self.opts
        lu = self._factor(c)
        x = guess.copy()
        scale = self._scale(x)
        dnorm_prev = None
        dnorm = math.inf
        max_rate = 0.0
        for k in range(opts.newton_max_iter + 1):
            fx = self.rhs(t, x)
            if not np.all(np.isfinite(fx)):
                raise _NewtonFailure("non-finite right-hand side")
            g_ok = not self.alg.any() or np.max(np.abs(fx[self.alg])) <= opts.newton_tol
            if k > 0 and g_ok and dnorm <= 1e-3:
                self.stats.newton_iterations += k
                if max_rate > 0.5:
                    self.J_fresh = False  # mark for refresh: convergence slowed
                    self._stale = True
                return x, fx
            if k == opts.newton_max_iter:
                break
            resid = self.mass_f * (x - z) - c * fx
            dx = lu_solve(lu, -resid, check_finite=False)
            dnorm = math.sqrt(np.mean((dx / scale) ** 2))
            if dnorm_prev is not None and dnorm_prev > 0:
                rate = dnorm / dnorm_prev
                max_rate = max(max_rate, rate)
                if rate >= 1.0 and dnorm > 1e-3:
                    self.stats.newton_iterations += k + 1
                    raise _NewtonFailure(f"Newton diverging (rate {rate:.2g})")
            dnorm_prev = dnorm
            x = x + dx
        self.stats.newton_iterations += opts.newton_max_iter
        raise _NewtonFailure("Newton did not converge")

    def solve_with_retry(self, t_n, x_n, f_n, t, z, c, guess):
        try:
            return self.solve_stage(t, z, c, guess)
        except _NewtonFailure:
            if self.J_fresh:
                raise
            # modified Newton failed with an old Jacobian: refresh and retry once
            self.stats.jacobian_retries += 1
            self.update_jacobian(t_n, x_n, f_n)
            return self.solve_stage(t, z, c, guess)

    def implicit_euler(self, t_n, x_n, f_n, h):
        guess = x_n + h * self.mass_f * f_n
        x1, f1 = self.solve_with_retry(t_n, x_n, f_n, t_n + h, x_n, h, guess)
        est = 0.5 * h * (f1 - f_n) * self.mass_f
        return x1, f1, est

    def trbdf2(self, t_n, x_n, f_n, h):
        c = D_COEF * h
        guess = x_n + GAMMA * h * self.mass_f * f_n
        z1 = x_n + c * f_n
        x_g, f_g = self.solve_with_retry(t_n, x_n, f_n, t_n + GAMMA * h, z1, c, guess)
        z2 = x_n + BDF_A * (x_g - x_n)  # = BDF_A x_g - BDF_B x_n, exact when x_g == x_n
        guess = x_n + (x_g - x_n) / GAMMA
        x1, f1 = self.solve_with_retry(t_n, x_n, f_n, t_n + h, z2, c, guess)
        est = ERR_COEF * h * (f_n / GAMMA - f_g / (GAMMA * (1 - GAMMA)) + f1 / (1 - GAMMA))
        return x1, f1, est * self.mass_f

    def step(self, t_n, x_n, f_n, h):
        if self.J is None:
            self.update_jacobian(t_n, x_n, f_n)
        method = self.trbdf2 if self.opts.method == "trbdf2" else self.implicit_euler
        x1, f1, est = method(t_n, x_n, f_n, h)
        # filter the raw estimate through the iteration matrix (stiff components)
        c = D_COEF * h if self.opts.method == "trbdf2" else h
        err = lu_solve(self._factor(c), est, check_finite=False)
        return x1, f1, err

    def error_norm(self, err, x_n, x1):
        if not self.mass.any():
            return 0.0
        scale = self.opts.atol + self.opts.rtol * np.maximum(np.abs(x_n), np.abs(x1))
        ratio = (err / scale)[self.mass]
        return math.sqrt(np.mean(ratio**2))


def _one_step(method, rhs, x_n, t_n, h, mass, opts):
    if h <= 0:
        raise ValueError("step size must be > 0")
    x_n = np.atleast_1d(np.asarray(x_n, dtype=float))
    opts = opts or SolverOptions(method=method)
    opts.method = method
    stepper = _Stepper(rhs, _mass_of(rhs, mass, x_n.size), opts)
    f_n = stepper.rhs(t_n, x_n)
    try:
        return stepper.step(t_n, x_n, f_n, h)
    except _NewtonFailure as exc:
        raise IntegrationError(f"step rejected: {exc}") from None


def step_implicit_euler(rhs, x_n, t_n: float, h: float, mass=None, opts: SolverOptions | None = None) -> np.ndarray:
    """One implicit Euler step ``M (x - x_n) = h f(t_n + h, x)``."""
    return _one_step("implicit_euler", rhs, x_n, t_n, h, mass, opts)[0]


def step_trbdf2(rhs, x_n, t_n: float, h: float, mass=None, opts: SolverOptions | None = None):
    """One TR-BDF2 step; returns ``(x_{n+1}, error estimate)``."""
    x1, _, err = _one_step("trbdf2", rhs, x_n, t_n, h, mass, opts)
    return x1, err


def integrate(rhs, x0, tspan, opts: SolverOptions | None = None, mass=None, check_consistency: bool = True) -> Trajectory:
    """Integrate from ``x0`` over ``tspan``; raises :class:`IntegrationError` with the partial trajectory."""
    opts = opts or SolverOptions()
    t0, t1 = float(tspan[0]), float(tspan[1])
    if not t1 > t0:
        raise ValueError(f"empty time span {tspan}")
    x, layout = _as_vector(x0)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state is not finite")
    mass = _mass_of(rhs, mass, x.size)
    stepper = _Stepper(rhs, mass, opts)
    f_n = stepper.rhs(t0, x)
    if not np.all(np.isfinite(f_n)):
        raise InconsistentStateError("right-hand side is not finite at the initial state")
    if check_consistency and (~mass).any():
        g = np.max(np.abs(f_n[~mass]))
        if g > CONSISTENCY_TOL:
            raise InconsistentStateError(
                f"algebraic residual {g:.3g} exceeds {CONSISTENCY_TOL:g}; reinitialize algebraic variables first"
            )

    h_max = opts.h_max if opts.h_max is not None else t1 - t0
    h = min(opts.h_init, h_max, t1 - t0)
    order = ORDER[opts.method]
    times, values = [t0], [x.copy()]
    t = t0

    def partial():
        return Trajectory(np.array(times), np.array(values), layout, stepper.stats)

    steps = 0
    while t < t1:
        if steps >= opts.max_steps:
            raise IntegrationError(f"max_steps={opts.max_steps} exceeded at t={t:.6g}", partial())
        steps += 1
        last = t + h >= t1 - 1e-12 * max(1.0, abs(t1))
        if last:
            h = t1 - t
        try:
            x1, f1, err = stepper.step(t, x, f_n, h)
        except _NewtonFailure as exc:
            stepper.stats.newton_failures += 1
            stepper.stats.rejected += 1
            if not opts.adaptive:
                raise IntegrationError(f"Newton failed at t={t:.6g} with fixed step: {exc}", partial()) from None
            h *= 0.25
            if h < opts.h_min:
                raise IntegrationError(f"step size underflow at t={t:.6g} ({exc})", partial()) from None
            # fresh Jacobian at the current point before the next attempt
            stepper.update_jacobian(t, x, f_n)
            continue

        err_norm = stepper.error_norm(err, x, x1) if opts.adaptive else 0.0
        if err_norm <= 1.0:
            t = t1 if last else t + h
            x, f_n = x1, f1
            times.append(t)
            values.append(x.copy())
            stepper.stats.accepted += 1
            if stepper._stale:
                stepper._stale = False
                stepper.update_jacobian(t, x, f_n)
            else:
                stepper.J_fresh = False
            if opts.adaptive:
                factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** (-1.0 / (order + 1))))
                h = min(h * factor, h_max)
        else:
            stepper.stats.rejected += 1
            factor = min(1.0, max(0.2, 0.9 * err_norm ** (-1.0 / (order + 1))))
            h *= factor
            if h < opts.h_min:
                raise IntegrationError(f"step size underflow at t={t:.6g}", partial())
    return partial()
