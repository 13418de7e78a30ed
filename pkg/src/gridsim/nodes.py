"""Node component library.

Every node model maps ``(u, i, internals, t)`` to ``(r_u, r_int)``. ``i`` is
the current leaving the node into the network, so ``u * conj(i)`` is the
power the node injects. ``r_u`` is ``du/dt`` when the voltage is a
differential variable and an algebraic residual otherwise; the same holds
per internal variable according to :meth:`NodeModel.mass_flags`.

Parameters are validated once at construction, never in ``rhs``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, fields
from typing import ClassVar

from .errors import ModelParameterError, SingularInputError
from .phasor import complex_power

TWO_PI_50 = 2 * math.pi * 50.0

# file-format parameter names that are not valid as plain ASCII attributes
CANONICAL_PARAMS = {"tau_v": "τ_v", "tau_P": "τ_P", "tau_Q": "τ_Q", "Omega": "Ω", "omega_N": "ω_N"}
FIELD_NAMES = {v: k for k, v in CANONICAL_PARAMS.items()}


def canonical_param(field_name: str) -> str:
    return CANONICAL_PARAMS.get(field_name, field_name)


def field_param(name: str) -> str:
    """Map a canonical parameter name (e.g. ``τ_P``) to the attribute name."""
    return FIELD_NAMES.get(name, name)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ModelParameterError(message)


def _finite(model, *names) -> None:
    for name in names:
        value = getattr(model, name)
        ok = cmath.isfinite(value) if isinstance(value, complex) else math.isfinite(value)
        _require(ok, f"{type(model).__name__}.{name} must be finite, got {value!r}")


class NodeModel:
    """Behavioral interface shared by all node models.

    Subclasses set ``internal_names`` and ``voltage_differential`` /
    ``internal_differential`` and implement :meth:`rhs`. A hand-written
    model following the same interface can be dropped into a
    :class:`~gridsim.grid.PowerGrid` without touching the engine.
    """

    internal_names: ClassVar[tuple[str, ...]] = ()
    voltage_differential: ClassVar[bool] = False
    internal_differential: ClassVar[tuple[bool, ...]] = ()
    # extra derived series computed from (u, i, internals)
    derived_names: ClassVar[tuple[str, ...]] = ()

    def mass_flags(self) -> tuple[bool, ...]:
        v = self.voltage_differential
        return (v, v) + tuple(self.internal_differential)

    def rhs(self, u: complex, i: complex, x: tuple, t: float) -> tuple[complex, tuple]:
        raise NotImplementedError

    def voltage_guess(self) -> complex:
        return 1.0 + 0.0j

    def initial_guess(self, u: complex) -> tuple[float, ...]:
        return ()

    def derived(self, name: str, u: complex, i: complex, x: tuple) -> float:
        raise KeyError(name)

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def type_name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class SlackAlgebraic(NodeModel):
    """Infinite bus: the voltage is pinned to ``U``."""

    U: complex = 1.0 + 0.0j

    def __post_init__(self):
        object.__setattr__(self, "U", complex(self.U))
        _finite(self, "U")
        _require(abs(self.U) > 0, "SlackAlgebraic.U must be nonzero")

    def rhs(self, u, i, x, t):
        return u - self.U, ()

    def voltage_guess(self):
        return self.U


@dataclass(frozen=True)
class PQAlgebraic(NodeModel):
    """Constant power node; positive P/Q inject, negative consume."""

    P: float = 0.0
    Q: float = 0.0

    def __post_init__(self):
        _finite(self, "P", "Q")

    def rhs(self, u, i, x, t):
        return complex_power(u, i) - complex(self.P, self.Q), ()


@dataclass(frozen=True)
class FourthOrderEq(NodeModel):
    """Two-axis synchronous machine with the terminal voltage as state.

    ``θ`` is the rotor angle and ``ω`` the speed deviation from nominal in
    rad/s. The rotor-frame voltage ``e_c = u exp(-jθ)`` carries the
    transient EMFs ``e_d``, ``e_q``.
    """

    H: float
    D: float
    P: float
    E_f: float
    T_d_dash: float
    T_q_dash: float
    X_d: float
    X_q: float
    X_d_dash: float
    X_q_dash: float
    Omega: float = TWO_PI_50

    internal_names = ("θ", "ω")
    voltage_differential = True
    internal_differential = (True, True)

    def __post_init__(self):
        _finite(self, *(f.name for f in fields(self)))
        _require(self.H > 0, "FourthOrderEq.H must be > 0")
        _require(self.T_d_dash > 0, "FourthOrderEq.T_d_dash must be > 0")
        _require(self.T_q_dash > 0, "FourthOrderEq.T_q_dash must be > 0")
        _require(self.X_d >= self.X_d_dash > 0, "FourthOrderEq needs X_d >= X_d_dash > 0")
        _require(self.X_q >= self.X_q_dash > 0, "FourthOrderEq needs X_q >= X_q_dash > 0")
        _require(self.Omega > 0, "FourthOrderEq.Omega must be > 0")

    def rhs(self, u, i, x, t):
        theta, omega = x
        rot = cmath.exp(-1j * theta)
        e_c = u * rot
        i_c = i * rot
        e_d, e_q = e_c.real, e_c.imag
        i_d, i_q = i_c.real, i_c.imag
        p = complex_power(u, i).real

        de_d = (-e_d + (self.X_q - self.X_q_dash) * i_q) / self.T_q_dash
        de_q = (-e_q - (self.X_d - self.X_d_dash) * i_d + self.E_f) / self.T_d_dash
        torque_extra = (self.X_q_dash - self.X_d_dash) * i_d * i_q
        domega = self.Omega / (2 * self.H) * (self.P - self.D * omega - p - torque_extra)
        du = complex(de_d, de_q) / rot + u * 1j * omega
        return du, (omega, domega)

    def initial_guess(self, u):
        # open circuit: u = j E_f exp(jθ)
        return (cmath.phase(u) - math.pi / 2, 0.0)


@dataclass(frozen=True)
class VSIVoltagePT1(NodeModel):
    """Droop-controlled voltage source inverter with PT1 voltage dynamics.

    Frequency droop ``τ_P dω = -ω - K_P (p - P)`` and voltage droop on the
    low-pass filtered reactive power ``q_m``.
    """

    tau_v: float
    tau_P: float
    tau_Q: float
    K_P: float
    K_Q: float
    V_r: float
    P: float
    Q: float

    internal_names = ("ω", "q_m")
    voltage_differential = True
    internal_differential = (True, True)

    def __post_init__(self):
        _finite(self, *(f.name for f in fields(self)))
        _require(self.tau_v > 0, "VSIVoltagePT1.tau_v (voltage delay) must be > 0")
        _require(self.tau_P > 0, "VSIVoltagePT1.tau_P (active power filter) must be > 0")
        _require(self.tau_Q > 0, "VSIVoltagePT1.tau_Q (reactive power filter) must be > 0")
        _require(self.K_Q > 0, "VSIVoltagePT1.K_Q (reactive droop) must be > 0")
        _require(self.K_P > 0, "VSIVoltagePT1.K_P (active droop) must be > 0")

    def rhs(self, u, i, x, t):
        omega, q_m = x
        s = complex_power(u, i)
        p, q = s.real, s.imag
        v = abs(u)
        if v == 0.0:
            raise SingularInputError("VSIVoltagePT1 evaluated at u = 0")
        dphi = omega
        dv = (-v + self.V_r - self.K_Q * (q_m - self.Q)) / self.tau_v
        dq_m = (q - q_m) / self.tau_Q
        du = u * 1j * dphi + dv * (u / v)
        domega = (-omega - self.K_P * (p - self.P)) / self.tau_P
        return du, (domega, dq_m)

    def initial_guess(self, u):
        return (0.0, self.Q)


@dataclass(frozen=True)
class GridFollowingPLL(NodeModel):
    """Current-source inverter locked to the grid by an SRF-PLL.

    Internals: PLL angle ``θ``, PI integrator ``ε`` and the low-pass
    filtered voltage ``vf_re + j vf_im``. The node voltage is algebraic:
    the injected current must deliver the droop power command.
    """

    tau_v: float
    K_pll_p: float
    K_pll_i: float
    K_P: float
    K_Q: float
    V_r: float
    P: float
    Q: float

    internal_names = ("θ", "ε", "vf_re", "vf_im")
    voltage_differential = False
    internal_differential = (True, True, True, True)
    derived_names = ("ω",)

    def __post_init__(self):
        _finite(self, *(f.name for f in fields(self)))
        _require(self.tau_v > 0, "GridFollowingPLL.tau_v must be > 0")
        _require(self.K_pll_p >= 0, "GridFollowingPLL.K_pll_p must be >= 0")
        _require(self.K_pll_i > 0, "GridFollowingPLL.K_pll_i must be > 0")
        _require(self.K_P >= 0, "GridFollowingPLL.K_P must be >= 0")
        _require(self.K_Q >= 0, "GridFollowingPLL.K_Q must be >= 0")

    def _pll(self, u, theta, eps):
        v_q = (u * cmath.exp(-1j * theta)).imag
        return v_q, self.K_pll_p * v_q + eps

    def power_command(self, omega_pll: float, u_f: complex) -> complex:
        return complex(self.P - self.K_P * omega_pll, self.Q + self.K_Q * (self.V_r - abs(u_f)))

    def rhs(self, u, i, x, t):
        theta, eps, vf_re, vf_im = x
        if u == 0:
            raise SingularInputError("GridFollowingPLL evaluated at u = 0")
        u_f = complex(vf_re, vf_im)
        v_q, omega_pll = self._pll(u, theta, eps)
        du_f = (u - u_f) / self.tau_v
        s_cmd = self.power_command(omega_pll, u_f)
        r_u = i - (s_cmd / u).conjugate()
        return r_u, (omega_pll, self.K_pll_i * v_q, du_f.real, du_f.imag)

    def initial_guess(self, u):
        return (cmath.phase(u), 0.0, u.real, u.imag)

    def derived(self, name, u, i, x):
        if name != "ω":
            raise KeyError(name)
        theta, eps = x[0], x[1]
        return self._pll(u, theta, eps)[1]


NODE_TYPES: dict[str, type[NodeModel]] = {
    cls.__name__: cls
    for cls in (SlackAlgebraic, PQAlgebraic, FourthOrderEq, VSIVoltagePT1, GridFollowingPLL)
}


def node_mass_flags(model: NodeModel) -> list[bool]:
    return list(model.mass_flags())
