from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dragobs.analysis import (
    ErrorCoordinates,
    decade_window,
    error_variables,
    fit_decay_rate,
    gains_for_poles,
    linearized_subsystems,
    lyapunov_V,
    lyapunov_W,
    slowest_rate,
    subsystem_eigenvalues,
    w_decay_bound,
)
from dragobs.scenario import REFERENCE_GAINS
from dragobs.types import Gains, ObserverState, TruthState

getcontext().prec = 50


def decimal_roots(b, c):
    """Roots of x^2 + b x + c by the quadratic formula in 50-digit decimal."""
    b, c = Decimal(str(b)), Decimal(str(c))
    disc = (b * b - 4 * c).sqrt()
    return float((-b + disc) / 2), float((-b - disc) / 2)


def F(x):
    return Fraction(str(x))


def test_error_variables_examples():
    s = TruthState(0.5, -0.2, 0.0, [0, 0, 1])
    assert error_variables(s, ObserverState.from_truth(s), REFERENCE_GAINS).as_array().tolist() == [0.0] * 5
    e = error_variables(s, ObserverState(1.5, -0.2, [0, 0, 1]), REFERENCE_GAINS)
    assert e.e_u == 1.0
    assert e.z1 == pytest.approx(-7 / 9.81, abs=1e-15)
    assert e.z1 == pytest.approx(-0.7136, abs=1e-4)


@given(du=st.floats(-10, 10), dv=st.floats(-10, 10), k1=st.floats(0, 100))
def test_z3_does_not_depend_on_velocities_or_gains(du, dv, k1):
    s = TruthState(0.0, 0.0, 0.0, [0, 0, 1])
    o = ObserverState(du, dv, [0.1, 0.2, 0.7])
    assert error_variables(s, o, REFERENCE_GAINS.replace(k1=k1)).z3 == pytest.approx(-0.3, abs=1e-15)


def test_lyapunov_V_examples():
    assert lyapunov_V(ErrorCoordinates(0, 0, 0, 0, 0)) == 0.0
    assert lyapunov_V(ErrorCoordinates(1, 0, 0, 0, 0)) == 0.5
    assert lyapunov_V(ErrorCoordinates(1, 1, 1, 1, 1)) == 2.5


def test_lyapunov_W_examples():
    assert lyapunov_W(0.0, 0.1) == 0.0
    assert lyapunov_W(1.0, 0.1) == pytest.approx(4.97, abs=1e-14)
    with pytest.raises(ValueError):
        lyapunov_W(-1.0, 0.1)


@given(a=st.floats(0, 1e3), b=st.floats(0, 1e3), e=st.floats(0.01, 0.8))
def test_W_is_strictly_increasing(a, b, e):
    lo, hi = sorted((a, b))
    if hi > lo:
        assert lyapunov_W(hi, e) > lyapunov_W(lo, e)


def test_decay_bound_example_matches_exact_arithmetic():
    k1, k3, ku, eps, c_u, g = F(7), F("0.1"), F(49), F("0.1"), F("0.3"), F("9.81")
    k10 = k1 - 1 - k3 / (2 * eps**2)
    ku0 = ku - k1**2 * c_u**2 / (2 * g**2) - g**2 / 2
    exact = -(2 * k10 + k3 / 2 + 2 * ku0)
    got = w_decay_bound(ErrorCoordinates(1, 1, 1, 1, 1), REFERENCE_GAINS)
    assert got == pytest.approx(float(exact), abs=1e-12)
    assert got == pytest.approx(-3.766, abs=5e-3)  # coarse rounding of ku0 = 0.8590...
    assert w_decay_bound(ErrorCoordinates(0, 0, 0, 0, 0), REFERENCE_GAINS) == 0.0


@given(e=st.tuples(*[st.floats(-10, 10)] * 5))
def test_decay_bound_is_negative_off_zero(e):
    b = w_decay_bound(ErrorCoordinates(*e), REFERENCE_GAINS)
    assert b <= 0.0
    if any(abs(x) > 1e-3 for x in e):
        assert b < 0.0


def test_decay_bound_refuses_invalid_gains_and_large_epsilon():
    with pytest.raises(ValueError):
        w_decay_bound(ErrorCoordinates(1, 1, 1, 1, 1), REFERENCE_GAINS.replace(k3=-0.1))
    big_eps = Gains(k1=3, k2=3, k3=0.1, ku=60, kv=60, epsilon=0.85)
    with pytest.raises(ValueError):
        w_decay_bound(ErrorCoordinates(1, 1, 1, 1, 1), big_eps)


def test_linearized_subsystems_example():
    A1, A2, a3 = linearized_subsystems(REFERENCE_GAINS, 0.25)
    assert np.allclose(A1, [[-7.0, 0.25 * 7 / 9.81], [9.81, -49.25]], rtol=0, atol=1e-15)
    assert A1[0, 1] == pytest.approx(0.1784, abs=1e-4)
    assert np.array_equal(A1, A2)
    assert a3 == pytest.approx(-0.1 / 0.99, abs=1e-15)
    assert a3 == pytest.approx(-0.10101, abs=1e-5)


def test_zero_drag_gives_triangular_exact_poles():
    A1, _, _ = linearized_subsystems(REFERENCE_GAINS, 0.0)
    assert A1[0, 1] == 0.0
    assert tuple(subsystem_eigenvalues(A1)) == (-7.0, -49.0)


def test_eigenvalues_are_exact_quadratic_roots():
    A1, _, _ = linearized_subsystems(REFERENCE_GAINS, 0.25)
    ev = subsystem_eigenvalues(A1)
    hi, lo = decimal_roots(56.25, 343)
    assert not ev.is_complex
    assert abs(ev[0] - hi) < 1e-9 and abs(ev[1] - lo) < 1e-9
    assert ev[0] == pytest.approx(-6.9586, abs=1e-4)
    assert ev[1] == pytest.approx(-49.2914, abs=1e-4)


@given(a=st.floats(-100, 100), b=st.floats(-100, 100), c=st.floats(-100, 100), d=st.floats(-100, 100))
def test_vieta_relations(a, b, c, d):
    A = np.array([[a, b], [c, d]])
    ev = subsystem_eigenvalues(A)
    l1, l2 = complex(ev[0]), complex(ev[1])
    scale = 1 + abs(a) + abs(d) + abs(b * c) + abs(a * d)
    assert abs((l1 + l2) - (a + d)) <= 1e-12 * scale
    assert abs(l1 * l2 - (a * d - b * c)) <= 1e-10 * scale
    assert (l1.real, l1.imag) >= (l2.real, l2.imag)


def test_complex_pair_is_flagged():
    ev = subsystem_eigenvalues([[-1.0, -5.0], [5.0, -1.0]])
    assert ev.is_complex
    assert ev[0] == pytest.approx(complex(-1, 5))


def test_slowest_rate_for_reference_gains():
    assert slowest_rate(REFERENCE_GAINS, 0.25) == pytest.approx(0.1 / 0.99, rel=1e-14)


def test_gains_for_poles_recovers_reference_gains():
    gains, report = gains_for_poles((-49.0, -7.0, -0.1 / 0.99), 0.25, epsilon=0.1)
    assert (gains.k1, gains.k2, gains.ku, gains.kv) == (7.0, 7.0, 49.0, 49.0)
    assert gains.k3 == pytest.approx(0.1, abs=1e-15)
    assert report.ok


@given(fast=st.floats(-200, -20), slow=st.floats(-15, -2), cbar=st.floats(0.0, 0.5))
def test_pole_round_trip(fast, slow, cbar):
    # c_bar shifts the pole sum by exactly -c_bar and leaves the product alone,
    # so the pair spreads: the slow pole moves right by at most c k1/(ku-k1),
    # the fast one left by at most c ku/(ku-k1) (which exceeds c_bar itself).
    gains, _ = gains_for_poles((fast, slow, -0.5), cbar)
    A1, _, a3 = linearized_subsystems(gains, cbar)
    ev = subsystem_eigenvalues(A1)
    gap = fast - slow
    assert ev[0] + ev[1] == pytest.approx(fast + slow - cbar, abs=1e-9)
    assert ev[0] * ev[1] == pytest.approx(fast * slow, rel=1e-12)
    assert -1e-9 <= ev[0] - slow <= cbar * slow / gap + 1e-9
    assert -1e-9 <= fast - ev[1] <= cbar * fast / gap + 1e-9
    assert a3 == pytest.approx(-0.5, rel=1e-12)


def test_reference_fast_pole_moves_more_than_cbar():
    gains, _ = gains_for_poles((-49.0, -7.0, -0.1 / 0.99), 0.25)
    ev = subsystem_eigenvalues(linearized_subsystems(gains, 0.25)[0])
    assert -49.0 - ev[1] > 0.25


def test_gains_for_poles_limits_and_errors():
    gains, _ = gains_for_poles((-49.0, -7.0, -1.0), 0.25, epsilon=0.0)
    assert gains.k3 == 1.0
    with pytest.raises(ValueError):
        gains_for_poles((-49.0, 0.0, -1.0), 0.25)


def test_decay_fit_helpers():
    t = np.linspace(0, 1, 101)
    err = 3.0 * np.exp(-2.5 * t)
    assert fit_decay_rate(t, err) == pytest.approx(2.5, rel=1e-10)
    n = decade_window(err)
    assert err[n - 1] <= 0.3 < err[n - 2]
