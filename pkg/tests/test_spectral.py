import math

import numpy as np
import pytest
import scipy.sparse as sp

from bottomwell.core import TaylorPotential
from bottomwell.oscillator import lattice_energies
from bottomwell.spectral import (
    build_fd_hamiltonian,
    build_hermite_hamiltonian,
    fd_spectrum,
    hermite_spectrum,
    low_eigenvalues,
    minmax_bound_check,
    position_operator,
    weyl_count_check,
)
from bottomwell.spectral import phase_space_volume


def test_position_operator_matrix_elements():
    X = position_operator(6, 0.1, 2.0).toarray()
    assert np.allclose(X, X.T)
    assert X[0, 1] == pytest.approx(math.sqrt(0.1 / 4))
    assert X[3, 4] == pytest.approx(math.sqrt(0.1 / 4 * 4))
    assert np.count_nonzero(np.diag(X)) == 0


def test_harmonic_hermite_is_diagonal():
    V = TaylorPotential((1.3,))
    H = build_hermite_hamiltonian(V, 0.05, 30)
    assert np.allclose(H.toarray(), np.diag(0.05 * 1.3 * (np.arange(30) + 0.5)))


def test_harmonic_two_dimensional_lattice():
    V = TaylorPotential((1.0, math.sqrt(2)))
    eigs = hermite_spectrum(V, 0.1, 2.0)
    assert np.allclose(eigs.eigenvalues, lattice_energies(V.frequencies, 0.1, 2.0), atol=1e-12)


def test_quartic_exact_matrix_elements():
    # <0|x^4|0> = 3 (hbar/2w)^2 and <0|x^4|2> = 6 sqrt(2) (hbar/2w)^2
    hbar, w, g = 0.2, 1.5, 24.0
    H = build_hermite_hamiltonian(TaylorPotential((w,), {(4,): g}), hbar, 12).toarray()
    s = hbar / (2 * w)
    assert H[0, 0] == pytest.approx(0.5 * hbar * w + 3 * s * s)
    assert H[0, 2] == pytest.approx(6 * math.sqrt(2) * s * s)
    assert H[0, 1] == 0


def test_quartic_hermite_matches_finite_difference(quartic):
    hbar, cutoff = 0.05, 0.6
    a = hermite_spectrum(quartic, hbar, cutoff)
    b = fd_spectrum(quartic, hbar, cutoff, L=3.0, M=1200)
    assert len(a) == len(b) > 5
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-7)
    assert a.estimated_accuracy < 1e-10
    assert b.estimated_accuracy < 1e-5


def test_fd_box_levels_converge():
    # the wide stencil is truncated at the walls, so a bare box converges slowly
    exact = math.pi**2 * np.arange(1, 5) ** 2 / 8
    errors = []
    for M in (200, 400, 800):
        eigs = fd_spectrum(lambda x: np.zeros(len(x)), 1.0, 20.0, L=1.0, M=M)
        assert len(eigs) == 4
        errors.append(np.max(np.abs(eigs.eigenvalues - exact) / exact))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-3


def test_fd_two_dimensional_harmonic():
    V = TaylorPotential((1.0, math.sqrt(3)))
    eigs = fd_spectrum(V, 0.2, 0.6, L=3.5, M=120)
    ref = lattice_energies(V.frequencies, 0.2, 0.6)
    assert np.allclose(eigs.eigenvalues, ref, atol=1e-4)


def test_fd_grid_too_coarse():
    with pytest.raises(ValueError, match="too few"):
        build_fd_hamiltonian(TaylorPotential((1.0,)), 0.01, 3.0, 100)


def test_hermite_basis_too_small(quartic):
    with pytest.raises(ValueError, match="too small"):
        build_hermite_hamiltonian(quartic, 0.05, 10, cutoff=1.0)


def test_nonconfining_warning(cubic_quartic):
    V = cubic_quartic.replace(derivatives={(3,): 0.6})
    with pytest.warns(UserWarning, match="not confining"):
        build_hermite_hamiltonian(V, 0.05, 40, cutoff=0.1)


def test_low_eigenvalues_dense_and_banded_agree(rng):
    A = rng.normal(size=(60, 60))
    A = A + A.T
    dense = low_eigenvalues(A, 0.0).eigenvalues
    exact = np.linalg.eigvalsh(A)
    assert np.allclose(dense, exact[exact <= 0])
    band = sp.diags([np.ones(199), np.arange(200.0), np.ones(199)], [-1, 0, 1], format="csr")
    ev = low_eigenvalues(band, 50.0).eigenvalues
    full = np.linalg.eigvalsh(band.toarray())
    assert np.allclose(ev, full[full <= 50.0])


def test_low_eigenvalues_rejects_nonsquare():
    with pytest.raises(ValueError):
        low_eigenvalues(np.zeros((3, 4)), 1.0)


def test_phase_space_volume_harmonic():
    # area of the ellipse xi^2/2 + w^2 x^2/2 <= E is 2 pi E / w
    V = TaylorPotential((2.0,))
    vol, _ = phase_space_volume(V, 1.5)
    assert vol == pytest.approx(2 * math.pi * 1.5 / 2.0, rel=1e-8)


def test_weyl_ratio(quartic):
    report = weyl_count_check(quartic, 0.01, 1.0)
    assert not report.low_count
    assert abs(report.ratio - 1) < 0.05


def test_weyl_low_count_warns(quartic):
    with pytest.warns(UserWarning, match="not meaningful"):
        weyl_count_check(quartic, 0.2, 0.5)


def test_minmax_bound(cubic_quartic):
    report = minmax_bound_check(cubic_quartic, 0.02, 0.3, (-1.5, 1.5))
    assert report.holds and report.checked > 5
    assert report.bound > 0


def test_minmax_negative_control(cubic_quartic):
    eigs = hermite_spectrum(cubic_quartic, 0.02, 0.3)
    ok = minmax_bound_check(cubic_quartic, 0.02, 0.3, (-1.5, 1.5), eigenvalues=eigs)
    bad = eigs.eigenvalues.copy()
    bad[0] -= 2 * ok.bound + 0.1
    report = minmax_bound_check(cubic_quartic, 0.02, 0.3, (-1.5, 1.5), eigenvalues=bad)
    assert not report.holds
    assert report.max_violation > ok.bound
