import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from bottomwell.oscillator import a0, a0_values, lattice_energies, max_time, mehler_kernel, osc_spectrum

SQRT2 = np.sqrt(2.0)


def test_one_dimensional_ladder():
    levels = osc_spectrum((1.0,), 0.1, 0.35)
    np.testing.assert_allclose([lv.energy for lv in levels], [0.05, 0.15, 0.25, 0.35], atol=1e-15)
    assert [lv.gamma for lv in levels] == [(0,), (1,), (2,), (3,)]


def test_two_dimensional_ground_level():
    levels = osc_spectrum((1.0, SQRT2), 0.1, 0.13)
    assert len(levels) == 1
    assert levels[0].gamma == (0, 0)
    assert levels[0].energy == pytest.approx(0.1 * (0.5 + SQRT2 / 2), abs=1e-15)


def test_below_ground_state_is_empty():
    with pytest.warns(UserWarning):
        assert osc_spectrum((1.0,), 0.1, 0.01) == []


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.01, 0.5), st.integers(0, 200), st.floats(0.05, 0.95))
def test_level_count(omega, hbar, whole, frac):
    # keep the cutoff away from a level so the floor is unambiguous
    cutoff = hbar * omega * (whole + frac)
    count = len(lattice_energies((omega,), hbar, cutoff))
    assert count == int(np.floor(cutoff / (hbar * omega) + 0.5))


def test_lattice_is_complete_in_2d():
    w = (1.0, SQRT2)
    E = lattice_energies(w, 0.05, 1.0)
    brute = sorted(0.05 * (a + 0.5) + 0.05 * SQRT2 * (b + 0.5) for a in range(40) for b in range(40))
    brute = [e for e in brute if e <= 1.0]
    np.testing.assert_allclose(E, brute, atol=1e-14)


def test_a0_value():
    assert a0((1.0,), 1.0) == pytest.approx(-1.042914821466744j, abs=1e-14)
    assert a0((1.0,), 1.0) == pytest.approx(1 / (2j * np.sin(0.5)), abs=1e-15)


def test_a0_small_t():
    for t in [1e-3, 1e-5]:
        assert a0((1.0,), t) * 1j * t == pytest.approx(1.0, abs=1e-6)


def test_a0_is_product():
    assert a0((1.0, SQRT2), 0.5) == pytest.approx(a0((1.0,), 0.5) * a0((SQRT2,), 0.5), rel=1e-14)


def test_a0_domain():
    with pytest.raises(ValueError, match="frequency 1"):
        a0((1.0, 2.0), 0.9)
    with pytest.raises(ValueError):
        a0((1.0,), -0.1)
    assert max_time((1.0, 2.0)) == pytest.approx(np.pi / 4)


def test_geometric_series_identity():
    # sum_n exp(-i t (n+1/2)) with a damping limit summed in closed form
    for t in [0.3, 0.9, 1.4]:
        z = np.exp(-1j * t)
        series = np.exp(-0.5j * t) / (1 - z)
        assert series == pytest.approx(a0((1.0,), t), rel=1e-13)
        # and as a damped partial sum
        eps = 1e-3
        n = np.arange(40000)
        damped = np.sum(np.exp(-(1j * t + eps) * (n + 0.5)))
        assert damped == pytest.approx(a0_values((1.0,), t - 1j * eps), rel=1e-10)


def test_mehler_at_quarter_period():
    assert mehler_kernel((1.0,), 1.0, np.pi / 2, [0.0], [0.0]) == pytest.approx((1 / (2j * np.pi)) ** 0.5, abs=1e-15)


def test_mehler_symmetry(rng):
    for _ in range(10):
        x, y = rng.normal(size=2), rng.normal(size=2)
        t = rng.uniform(0.1, 2.0)
        assert mehler_kernel((1.0, SQRT2), 0.3, t, x, y) == pytest.approx(mehler_kernel((1.0, SQRT2), 0.3, t, y, x))


def test_mehler_diagonal_integral_is_a0():
    # rotate the contour onto the steepest-descent line of the Fresnel phase
    rot = np.exp(-0.25j * np.pi)
    u = np.linspace(-3, 3, 6001)
    k = mehler_kernel((1.0,), 0.05, 1.0, (rot * u)[:, None], (rot * u)[:, None])
    assert rot * integrate.trapezoid(k, u) == pytest.approx(a0((1.0,), 1.0), abs=1e-12)


def test_mehler_is_a_propagator():
    # composing two half-steps gives the full step; a small damping makes the z-integral converge
    hbar, x, y = 0.5, 0.3, -0.2
    half = 0.4 - 0.05j
    z = np.linspace(-12, 12, 120001)
    lhs = integrate.trapezoid(mehler_kernel((1.0,), hbar, half, [x], z[:, None])
                              * mehler_kernel((1.0,), hbar, half, z[:, None], [y]), z)
    assert lhs == pytest.approx(mehler_kernel((1.0,), hbar, 2 * half, [x], [y]), rel=1e-8)


def test_a0_is_hbar_independent():
    # the trace of exp(-itH/hbar) over the full ladder does not depend on hbar
    for hbar in [0.5, 0.05]:
        E = lattice_energies((1.0,), hbar, 20000 * hbar)
        eps = 2e-3
        tr = np.sum(np.exp(-(1j * 0.7 + eps) * E / hbar))
        assert tr == pytest.approx(a0_values((1.0,), 0.7 - 1j * eps), rel=1e-8)
