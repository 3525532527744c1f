"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary. Every eigenvalue set computed here is kept and checked against the
min-max sandwich in the last test.
"""

import math
import time

import numpy as np
import pytest

from bottomwell.core import SymmetryClass, TaylorPotential, multi_indices_of_order
from bottomwell.hessian import hessian_report
from bottomwell.invariants import (
    Convention,
    calibrate_cubic_constant,
    literal_l1_term,
    quartic_closed_form,
    wave_invariant,
    wave_invariant_linear_term,
)
from bottomwell.inverse import RecoverySettings, default_t_grid, end_to_end_1d
from bottomwell.oscillator import a0, lattice_energies, max_time
from bottomwell.spectral import EigenvalueSet, hermite_spectrum, minmax_bound_check, weyl_count_check
from bottomwell.spectral import _well_interval
from bottomwell.symcalc import trig_identity_residual
from bottomwell.trace import CutoffFunction, extract_invariants, hbar_sweep, perturbation_oracle, truncated_trace

SQRT2 = math.sqrt(2)
CUBIC_QUARTIC = TaylorPotential((1.0,), {(3,): 0.6, (4,): 1.2})
QUARTIC = TaylorPotential((1.0,), {(4,): 1.2}, symmetry=SymmetryClass.EVEN)
SEXTIC = TaylorPotential((1.0,), {(3,): 0.6, (4,): 1.2, (5,): 2.4, (6,): 7.2})

# (label, potential, eigenvalues) for the min-max check
SPECTRA: list[tuple[str, TaylorPotential, EigenvalueSet]] = []


def test_c1_hessian_identities(acceptance):
    rng = np.random.default_rng(1)
    worst = {"identity": 0.0, "det": 0.0, "finite_difference": 0.0}
    signatures = True
    for l in range(1, 5):
        for n in range(1, 4):
            for _ in range(20):
                w = rng.uniform(0.5, 2.0, n)
                t = rng.uniform(0.02, 0.98) * max_time(w)
                r = hessian_report(l, w, t)
                for k in worst:
                    worst[k] = max(worst[k], r[k])
                signatures &= r["signature"] == -n
    ok = worst["identity"] < 1e-10 and worst["det"] < 1e-10 and worst["finite_difference"] < 1e-5 and signatures
    acceptance("C1 hessian identities", ok,
               f"inverse {worst['identity']:.1e}, det {worst['det']:.1e}, FD {worst['finite_difference']:.1e}")
    assert ok


def test_c2_trig_identity(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        w = rng.uniform(0.3, 3.0)
        t = rng.uniform(0.01, 0.99) * max_time([w])
        worst = max(worst, trig_identity_residual(w, t, rng.uniform(0, t)))
    acceptance("C2 trig identity", worst < 1e-12, f"max residual {worst:.1e} over 100 samples")
    assert worst < 1e-12


def test_c3_linear_term_closed_form(acceptance):
    rng = np.random.default_rng(3)
    worst = 0.0
    for n in (1, 2):
        for j in (1, 2, 3):
            for _ in range(3):
                w = rng.uniform(0.6, 1.6, n)
                derivs = {tuple(2 * a for a in alpha): rng.uniform(-1, 1)
                          for m in range(2, j + 2) for alpha in multi_indices_of_order(n, m)}
                V = TaylorPotential(tuple(w), derivs, symmetry=SymmetryClass.EVEN)
                t = rng.uniform(0.1, 0.9) * max_time(w)
                engine = literal_l1_term(V, j, t, rng.uniform(0, t))
                closed = wave_invariant_linear_term(V, j, t)
                worst = max(worst, abs(engine - closed) / abs(closed))
    acceptance("C3 l=1 closed form", worst < 1e-10, f"max relative deviation {worst:.1e}")
    assert worst < 1e-10


def _oscillator_spectrum(omega, hbar, delta):
    if len(omega) == 1:
        eigs = hermite_spectrum(TaylorPotential(omega), hbar, delta)
        SPECTRA.append((f"oscillator hbar={hbar}", TaylorPotential(omega), eigs))
        return eigs
    # the tensor-product spectrum is exact and has ~5e5 levels at the smaller hbar
    return EigenvalueSet(hbar=hbar, eigenvalues=lattice_energies(omega, hbar, delta),
                         solver="exact", cutoff=delta)


def test_c4_a0_reproduction(acceptance):
    theta = CutoffFunction(6.0, 0.2)
    ts = np.linspace(0.55, 1.05, 10)
    details, ok = [], True
    for omega in [(1.0,), (1.0, SQRT2)]:
        errors = []
        for hbar in (0.01, 0.005):
            eigs = _oscillator_spectrum(omega, hbar, theta.delta)
            errors.append(float(np.max(np.abs(truncated_trace(eigs, theta, ts) - a0(omega, ts)))))
        ok &= errors[0] < 1e-5 and errors[1] < errors[0]
        details.append(f"n={len(omega)}: {errors[0]:.1e} -> {errors[1]:.1e}")
    acceptance("C4 a0 reproduction", ok, "max error at hbar 0.01 -> 0.005; " + ", ".join(details))
    assert ok


def test_c5_perturbation_oracle(acceptance):
    ts = np.linspace(0.3, 1.4, 10)
    worst = 0.0
    for a, b in [(0.0, 0.05), (0.1, 0.05)]:
        derivs = {(4,): 24 * b, **({(3,): 6 * a} if a else {})}
        V = TaylorPotential((1.0,), derivs)
        for t in ts:
            engine = wave_invariant(V, 1, t).value
            worst = max(worst, abs(engine - perturbation_oracle(V, 1, t)) / abs(engine))
            if not a:
                worst = max(worst, abs(engine - quartic_closed_form(b, t)) / abs(engine))
    formal = wave_invariant(QUARTIC, 1, 1.0, convention=Convention.FORMAL).value
    frozen = abs(formal - 0.13104297602821746j) < 1e-12
    ok = worst < 1e-6 and frozen
    acceptance("C5 perturbation oracle", ok,
               f"max relative deviation {worst:.1e}; a_1(1) = {formal.imag:+.6f}i (formal phase)")
    assert ok


def test_c6_empirical_extraction(acceptance):
    start = time.perf_counter()
    ts = np.linspace(0.75, 1.35, 5)
    table = hbar_sweep(QUARTIC, CutoffFunction(20.0, 0.1), ts, np.geomspace(0.02, 0.1, 8))
    fits = extract_invariants(table, 5, warn=False)
    for hb, eigs in zip(table.hbar_grid, table.spectra):
        SPECTRA.append((f"quartic sweep hbar={hb:.4g}", QUARTIC, eigs))
    errors = [abs(f.coefficients[1] - wave_invariant(QUARTIC, 1, f.t).value) / abs(wave_invariant(QUARTIC, 1, f.t).value)
              for f in fits]
    elapsed = time.perf_counter() - start
    ok = max(errors) < 0.02 and elapsed < 120
    acceptance("C6 empirical extraction", ok, f"max relative error {max(errors):.2%} at 5 t, {elapsed:.1f} s")
    assert ok


def test_c7_cubic_functional_form(acceptance):
    ts = np.linspace(0.3, 1.3, 8)
    worst, constants = 0.0, []
    for n, omega in [(1, (1.0,)), (2, (1.0, SQRT2))]:
        for j in (1, 2):
            cal = calibrate_cubic_constant(omega, j, ts * max_time(omega) / math.pi)
            worst = max(worst, cal.residual)
            constants.append(f"c2(n={n},j={j})={cal.c2.real:+.6f}")
    acceptance("C7 cubic functional form", worst < 1e-8, f"max residual {worst:.1e}; " + ", ".join(constants))
    assert worst < 1e-8


def test_c8_inversion_round_trip(acceptance):
    start = time.perf_counter()
    formula = end_to_end_1d(SEXTIC, order=6).coefficient_errors
    formula_ok = (formula["omega_0"] < 1e-8 and formula["D[3]"] < 1e-6 and formula["D[4]"] < 1e-6
                  and formula["D[5]"] < 1e-4 and formula["D[6]"] < 1e-4)
    settings = RecoverySettings(route="empirical")
    empirical = end_to_end_1d(CUBIC_QUARTIC, order=4, settings=settings).coefficient_errors
    empirical_ok = empirical["omega_0"] < 1e-6 and empirical["D[3]"] <= 0.02 and empirical["D[4]"] <= 0.02
    for hb in settings.hbar_grid:
        SPECTRA.append((f"cubic+quartic sweep hbar={hb:.4g}", CUBIC_QUARTIC,
                        hermite_spectrum(CUBIC_QUARTIC, hb, settings.delta)))
    ts = default_t_grid((1.0,))
    flipped = CUBIC_QUARTIC.replace(derivatives={(3,): -0.6, (4,): 1.2})
    same = all(wave_invariant(CUBIC_QUARTIC, 1, t).value == wave_invariant(flipped, 1, t).value for t in ts)
    elapsed = time.perf_counter() - start
    ok = formula_ok and empirical_ok and same and elapsed < 300
    acceptance("C8 inversion round trip", ok,
               f"formula max error {max(formula.values()):.1e}; empirical omega {empirical['omega_0']:.1e}, "
               f"D3 {empirical['D[3]']:.2%}, D4 {empirical['D[4]']:.2%}; sign flip identical: {same}; {elapsed:.0f} s")
    assert ok


def test_c9_weyl_count(acceptance):
    ratios, ok = [], True
    for name, V in [("harmonic", TaylorPotential((1.0,))), ("quartic", QUARTIC)]:
        eigs = hermite_spectrum(V, 0.005, 0.5)
        SPECTRA.append((f"{name} Weyl", V, eigs))
        r = weyl_count_check(V, 0.005, 0.5, eigenvalues=eigs)
        ok &= 0.9 <= r.ratio <= 1.1
        ratios.append(f"{name} {r.ratio:.4f} ({r.count} levels)")
    acceptance("C9 Weyl count", ok, ", ".join(ratios))
    assert ok


def test_c10_minmax_sandwich(acceptance):
    if not SPECTRA:
        for V in (TaylorPotential((1.0,)), QUARTIC):
            SPECTRA.append(("Weyl", V, hermite_spectrum(V, 0.005, 0.5)))
    failures, levels = [], 0
    for label, V, eigs in SPECTRA:
        delta = float(eigs.eigenvalues.max())
        r = minmax_bound_check(V, eigs.hbar, delta, _well_interval(V, delta), eigenvalues=eigs)
        levels += r.checked
        if not r.holds or r.checked != len(eigs):
            failures.append(label)
    label, V, eigs = SPECTRA[-1]
    delta = float(eigs.eigenvalues.max())
    domain = _well_interval(V, delta)
    good = minmax_bound_check(V, eigs.hbar, delta, domain, eigenvalues=eigs)
    bad = eigs.eigenvalues.copy()
    bad[0] -= 2 * good.bound + 0.1
    caught = not minmax_bound_check(V, eigs.hbar, delta, domain, eigenvalues=bad).holds
    ok = not failures and caught
    acceptance("C10 min-max sandwich", ok,
               f"{levels} levels in {len(SPECTRA)} spectra, failures {failures or 'none'}; corrupted level caught: {caught}")
    assert ok
