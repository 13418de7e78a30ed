import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridsim.errors import ModelParameterError, SingularInputError
from gridsim.nodes import (
    FourthOrderEq,
    GridFollowingPLL,
    PQAlgebraic,
    SlackAlgebraic,
    VSIVoltagePT1,
    node_mass_flags,
)
from gridsim.phasor import complex_power
from gridsim.solver import fd_jacobian

from conftest import vsi

MACHINE = dict(H=5.0, D=0.1, P=0.5, E_f=1.2, T_d_dash=6.0, T_q_dash=0.5, X_d=1.2, X_q=1.1, X_d_dash=0.25, X_q_dash=0.4)


def gfl(**overrides):
    params = dict(tau_v=0.02, K_pll_p=20.0, K_pll_i=200.0, K_P=0.05, K_Q=0.5, V_r=1.0, P=0.5, Q=0.1)
    params.update(overrides)
    return GridFollowingPLL(**params)


def test_slack_residual():
    m = SlackAlgebraic(U=1 + 0j)
    assert m.rhs(1 + 0j, 0j, (), 0.0) == (0j, ())
    assert m.rhs(0.9 + 0j, 0j, (), 0.0)[0] == pytest.approx(-0.1 + 0j)
    assert m.rhs(0.9 + 0j, 0j, (), 0.0) == m.rhs(0.9 + 0j, 5 + 2j, (), 0.0)


def test_pq_residual():
    m = PQAlgebraic(P=-0.3, Q=0.0)
    assert m.rhs(1 + 0j, -0.3 + 0j, (), 0.0)[0] == 0
    assert PQAlgebraic(P=0, Q=0).rhs(1 + 0j, 0j, (), 0.0)[0] == 0
    b = -0.015
    a = (1 + math.sqrt(1 - 4 * b * b)) / 2
    u = complex(a, b)
    i = -20j * (u - 1)
    assert abs(m.rhs(u, i, (), 0.0)[0]) < 1e-9


def test_pq_residual_reuses_complex_power(rng):
    m = PQAlgebraic(P=0.3, Q=-0.2)
    for _ in range(20):
        u, i = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        assert m.rhs(u, i, (), 0.0)[0] == complex_power(u, i) - complex(0.3, -0.2)


def test_fourth_order_open_circuit_equilibrium():
    m = FourthOrderEq(**{**MACHINE, "P": 0.0})
    du, (dtheta, domega) = m.rhs(1j * m.E_f, 0j, (0.0, 0.0), 0.0)
    assert du == 0 and dtheta == 0 and domega == 0


def test_fourth_order_angle_follows_speed():
    m = FourthOrderEq(**{**MACHINE, "P": 0.0})
    _, (dtheta, _) = m.rhs(1j * m.E_f, 0j, (0.0, 0.1), 0.0)
    assert dtheta == 0.1


def test_fourth_order_swing_equation_by_hand():
    m = FourthOrderEq(**{**MACHINE, "H": 5.0, "D": 0.0, "P": 0.5})
    # p = 0.7 with i_d * i_q = 0: u = 1, i = 0.7 real, θ = 0 puts i purely on the d axis
    _, (_, domega) = m.rhs(1 + 0j, 0.7 + 0j, (0.0, 0.0), 0.0)
    assert domega == pytest.approx(2 * math.pi * 50 / 10 * (-0.2))
    assert domega == pytest.approx(-6.2832, abs=1e-4)


def test_fourth_order_jacobian_sign_structure():
    m = FourthOrderEq(**MACHINE)

    def f(t, x):
        u = complex(x[0], x[1])
        du, (dth, dw) = m.rhs(u, 0j, (x[2], x[3]), t)
        return np.array([du.real, du.imag, dth, dw])

    jac = fd_jacobian(f, 0.0, np.array([0.1, 1.1, 0.05, 0.0]))
    assert jac[2] == pytest.approx([0, 0, 0, 1], abs=1e-7)
    assert jac[3, 3] == pytest.approx(-m.Omega * m.D / (2 * m.H), rel=1e-4)


def test_vsi_equilibrium_example():
    m = vsi()
    u = cmath.rect(m.V_r, 0.4)
    i = (complex(m.P, m.Q) / u).conjugate()
    du, (domega, dq_m) = m.rhs(u, i, (0.0, m.Q), 0.0)
    assert abs(du) < 1e-15 and abs(domega) < 1e-15 and abs(dq_m) < 1e-15


def test_vsi_hand_evaluations():
    m = vsi(tau_P=0.5, K_P=0.1, P=0.0, tau_Q=2.0)
    u = 1 + 0j
    # p - P = 0.2, q = 0.3
    i = (complex(0.2, 0.3) / u).conjugate()
    _, (domega, dq_m) = m.rhs(u, i, (0.0, 0.1), 0.0)
    assert domega == pytest.approx(-0.04)
    assert dq_m == pytest.approx(0.1)


def test_vsi_singular_at_zero_voltage():
    with pytest.raises(SingularInputError):
        vsi().rhs(0j, 0j, (0.0, 0.0), 0.0)


def vsi_equilibrium_point(m, q_m, angle):
    v = m.V_r - m.K_Q * (q_m - m.Q)
    u = cmath.rect(v, angle)
    i = (complex(m.P, q_m) / u).conjugate()
    return u, i


def vsi_is_zero(m, u, i, omega, q_m, tol=1e-12):
    du, (domega, dq_m) = m.rhs(u, i, (omega, q_m), 0.0)
    return max(abs(du), abs(domega), abs(dq_m)) <= tol


@settings(max_examples=200, deadline=None)
@given(
    q_m=st.floats(-0.5, 0.5),
    angle=st.floats(-math.pi, math.pi),
    which=st.sampled_from(["ω", "p", "q", "v"]),
    delta=st.floats(1e-4, 0.1),
)
def test_vsi_equilibrium_characterization(q_m, angle, which, delta):
    # zero iff ω = 0, p = P, q = q_m and |u| = V_r - K_Q (q_m - Q)
    m = vsi()
    u, i = vsi_equilibrium_point(m, q_m, angle)
    assert vsi_is_zero(m, u, i, 0.0, q_m)
    omega = 0.0
    if which == "ω":
        omega = delta
    elif which == "p":
        i = i + (delta / u).conjugate()
    elif which == "q":
        i = i + (1j * delta / u).conjugate()
    else:
        scale = 1 + delta
        u, i = u * scale, i / scale
    assert not vsi_is_zero(m, u, i, omega, q_m, tol=1e-9)


def test_vsi_reference_condition_is_sufficient_not_necessary():
    m = vsi()
    u, i = vsi_equilibrium_point(m, m.Q, 0.3)
    assert abs(u) == pytest.approx(m.V_r)
    assert vsi_is_zero(m, u, i, 0.0, m.Q)
    # droop equilibrium away from the reactive set-point
    u, i = vsi_equilibrium_point(m, m.Q + 0.2, 0.3)
    assert abs(abs(u) - m.V_r) > 1e-3
    assert vsi_is_zero(m, u, i, 0.0, m.Q + 0.2)


def test_gfl_locked_at_setpoint():
    m = gfl()
    u = 1 + 0j
    i = (complex(m.P, m.Q) / u).conjugate()
    r_u, r_int = m.rhs(u, i, (0.0, 0.0, 1.0, 0.0), 0.0)
    assert r_u == 0
    assert r_int == (0.0, 0.0, 0.0, 0.0)


def test_gfl_pll_chases_angle():
    m = gfl()
    delta = 1e-3
    u = cmath.exp(1j * delta)
    _, (dtheta, deps, _, _) = m.rhs(u, 0j, (0.0, 0.0, u.real, u.imag), 0.0)
    assert dtheta == pytest.approx(m.K_pll_p * math.sin(delta))
    assert deps == pytest.approx(m.K_pll_i * math.sin(delta))
    assert dtheta == pytest.approx(m.K_pll_p * delta, rel=1e-6)


def test_gfl_droop_command():
    m = gfl(K_P=20.0, P=0.5, Q=0.0, V_r=1.0)
    assert m.power_command(0.01, 1 + 0j) == pytest.approx(0.3 + 0j)


def test_gfl_reports_pll_frequency():
    m = gfl()
    u = cmath.exp(0.01j)
    x = (0.0, 0.2, 1.0, 0.0)
    assert m.derived("ω", u, 0j, x) == pytest.approx(m.K_pll_p * math.sin(0.01) + 0.2)


def test_gfl_singular_at_zero_voltage():
    with pytest.raises(SingularInputError):
        gfl().rhs(0j, 0j, (0.0, 0.0, 1.0, 0.0), 0.0)


def test_mass_flags():
    assert node_mass_flags(vsi()) == [True] * 4
    assert node_mass_flags(SlackAlgebraic()) == [False, False]
    assert node_mass_flags(PQAlgebraic()) == [False, False]
    assert node_mass_flags(FourthOrderEq(**MACHINE)) == [True] * 4
    assert node_mass_flags(gfl()) == [False, False, True, True, True, True]


def rotate(model, u, i, x, alpha):
    """Rotated inputs: angle-like internals shift by alpha, filtered voltages rotate."""
    r = cmath.exp(1j * alpha)
    x = list(x)
    if isinstance(model, FourthOrderEq):
        x[0] += alpha
    return u * r, i * r, tuple(x)


phase_covariant = [
    PQAlgebraic(P=-0.3, Q=0.1),
    VSIVoltagePT1(tau_v=0.1, tau_P=0.2, tau_Q=0.3, K_P=0.5, K_Q=0.1, V_r=1.0, P=0.2, Q=0.05),
    FourthOrderEq(**MACHINE),
]


@pytest.mark.parametrize("model", phase_covariant, ids=lambda m: m.type_name)
@settings(max_examples=50, deadline=None)
@given(
    u_re=st.floats(0.5, 1.5), u_im=st.floats(-0.5, 0.5),
    i_re=st.floats(-1, 1), i_im=st.floats(-1, 1),
    a=st.floats(-0.5, 0.5), b=st.floats(-0.5, 0.5),
    alpha=st.floats(-math.pi, math.pi),
)
def test_phase_covariance(model, u_re, u_im, i_re, i_im, a, b, alpha):
    u, i = complex(u_re, u_im), complex(i_re, i_im)
    x = (a, b)[: len(model.internal_names)]
    r0, int0 = model.rhs(u, i, x, 0.0)
    r1, int1 = model.rhs(*rotate(model, u, i, x, alpha), 0.0)
    if model.voltage_differential:
        assert abs(r1 - r0 * cmath.exp(1j * alpha)) <= 1e-9 * (1 + abs(r0))
    else:
        assert abs(r1 - r0) <= 1e-12 * (1 + abs(r0))
    assert np.allclose(int1, int0, rtol=1e-9, atol=1e-9)


def test_slack_is_not_phase_covariant():
    m = SlackAlgebraic(U=1 + 0j)
    u, alpha = 1 + 0j, 0.3
    r0 = m.rhs(u, 0j, (), 0.0)[0]
    r1 = m.rhs(u * cmath.exp(1j * alpha), 0j, (), 0.0)[0]
    assert abs(r1 - r0 * cmath.exp(1j * alpha)) > 0.1


def test_rhs_is_pure():
    m = FourthOrderEq(**MACHINE)
    args = (0.3 + 1.0j, 0.2 - 0.1j, (0.1, 0.01), 0.0)
    assert m.rhs(*args) == m.rhs(*args)


@pytest.mark.parametrize(
    "build",
    [
        lambda: vsi(tau_v=0.0),
        lambda: vsi(tau_P=-1.0),
        lambda: vsi(tau_Q=0.0),
        lambda: vsi(K_P=0.0),
        lambda: vsi(K_Q=-0.1),
        lambda: vsi(P=float("nan")),
        lambda: SlackAlgebraic(U=0j),
        lambda: PQAlgebraic(P=float("inf")),
        lambda: FourthOrderEq(**{**MACHINE, "H": 0.0}),
        lambda: FourthOrderEq(**{**MACHINE, "X_d_dash": 1.5}),
        lambda: FourthOrderEq(**{**MACHINE, "T_q_dash": 0.0}),
        lambda: gfl(K_pll_i=0.0),
        lambda: gfl(K_P=-1.0),
    ],
)
def test_invalid_parameters_rejected_at_construction(build):
    with pytest.raises(ModelParameterError):
        build()


def test_initial_guesses():
    assert vsi(Q=0.05).initial_guess(1 + 0j) == (0.0, 0.05)
    assert gfl().initial_guess(1 + 0j) == (0.0, 0.0, 1.0, 0.0)
    theta, omega = FourthOrderEq(**MACHINE).initial_guess(1j)
    assert theta == pytest.approx(0.0) and omega == 0.0
