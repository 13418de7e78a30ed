"""Line and transformer component library.

``currents(u_from, u_to, x)`` returns ``(I_from, I_to, dx)`` where
``I_from`` flows from the from-node into the line and ``I_to`` from the
to-node into the line.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, fields
from typing import ClassVar

from .errors import ModelParameterError
from .nodes import TWO_PI_50


def _check_finite(model):
    for f in fields(model):
        value = getattr(model, f.name)
        ok = cmath.isfinite(value) if isinstance(value, complex) else math.isfinite(value)
        if not ok:
            raise ModelParameterError(f"{type(model).__name__}.{f.name} must be finite, got {value!r}")


def _as_complex(model, *names):
    for name in names:
        object.__setattr__(model, name, complex(getattr(model, name)))


class LineModel:
    internal_names: ClassVar[tuple[str, ...]] = ()
    internal_differential: ClassVar[tuple[bool, ...]] = ()
    # static lines are a fixed 2x2 admittance two-port
    is_static: ClassVar[bool] = True

    def mass_flags(self) -> tuple[bool, ...]:
        return tuple(self.internal_differential)

    def currents(self, u_from: complex, u_to: complex, x: tuple = ()) -> tuple[complex, complex, tuple]:
        I_from, I_to = self.two_port(u_from, u_to)
        return I_from, I_to, ()

    def two_port(self, u_from, u_to):
        raise NotImplementedError

    def initial_guess(self, u_from: complex, u_to: complex) -> tuple[float, ...]:
        return ()

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def type_name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class StaticLine(LineModel):
    Y: complex

    def __post_init__(self):
        _as_complex(self, "Y")
        _check_finite(self)
        if self.Y == 0:
            raise ModelParameterError("StaticLine.Y must be nonzero")

    def two_port(self, u_from, u_to):
        I_from = self.Y * (u_from - u_to)
        return I_from, -I_from


@dataclass(frozen=True)
class PiModelLine(LineModel):
    y: complex
    y_shunt_from: complex = 0j
    y_shunt_to: complex = 0j

    def __post_init__(self):
        _as_complex(self, "y", "y_shunt_from", "y_shunt_to")
        _check_finite(self)
        if self.y == 0:
            raise ModelParameterError("PiModelLine.y must be nonzero")

    def two_port(self, u_from, u_to):
        I_from = self.y * (u_from - u_to) + self.y_shunt_from * u_from
        I_to = self.y * (u_to - u_from) + self.y_shunt_to * u_to
        return I_from, I_to


@dataclass(frozen=True)
class Transformer(LineModel):
    """Series admittance with an off-nominal (possibly complex) tap on the from-side."""

    y: complex
    t_ratio: complex = 1 + 0j

    def __post_init__(self):
        _as_complex(self, "y", "t_ratio")
        _check_finite(self)
        if self.y == 0:
            raise ModelParameterError("Transformer.y must be nonzero")
        if self.t_ratio == 0:
            raise ModelParameterError("Transformer.t_ratio must be nonzero")

    def two_port(self, u_from, u_to):
        t = self.t_ratio
        I_from = self.y / abs(t) ** 2 * u_from - self.y / t.conjugate() * u_to
        I_to = -self.y / t * u_from + self.y * u_to
        return I_from, I_to


@dataclass(frozen=True)
class RLLine(LineModel):
    """Series R-L branch with its current as a dynamic state in the rotating frame."""

    R: float
    L: float
    omega_N: float = TWO_PI_50

    internal_names = ("I_re", "I_im")
    internal_differential = (True, True)
    is_static = False

    def __post_init__(self):
        _check_finite(self)
        if self.R < 0:
            raise ModelParameterError("RLLine.R must be >= 0")
        if self.L <= 0:
            raise ModelParameterError("RLLine.L must be > 0")
        if self.omega_N <= 0:
            raise ModelParameterError("RLLine.omega_N must be > 0")

    @property
    def impedance(self) -> complex:
        return complex(self.R, self.omega_N * self.L)

    def currents(self, u_from, u_to, x=()):
        current = complex(x[0], x[1])
        dI = (u_from - u_to - self.impedance * current) / self.L
        return current, -current, (dI.real, dI.imag)

    def initial_guess(self, u_from, u_to):
        current = (u_from - u_to) / self.impedance
        return (current.real, current.imag)


LINE_TYPES: dict[str, type[LineModel]] = {
    cls.__name__: cls for cls in (StaticLine, PiModelLine, Transformer, RLLine)
}
