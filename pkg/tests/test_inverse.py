import math

import numpy as np
import pytest

from bottomwell.core import SymmetryClass, TaylorPotential
from bottomwell.invariants import wave_invariant
from bottomwell.inverse import (
    BASIS_CONDITION_LIMIT,
    HypothesisError,
    RecoveryError,
    RecoverySettings,
    default_t_grid,
    end_to_end_1d,
    recover_frequencies,
    recover_from_samples,
    recover_inductive,
    recover_order34,
)
from bottomwell.oscillator import a0_values

SQRT2 = math.sqrt(2)


def _a(V, j, ts):
    return np.array([wave_invariant(V, j, t).value for t in ts])


def test_frequency_1d_exact():
    ts = np.linspace(0.1, 1.4, 20)
    fit = recover_frequencies(ts, a0_values((1.0,), ts), 1)
    assert fit.frequencies[0] == pytest.approx(1.0, abs=1e-10)


def test_frequency_pair_sorted():
    ts = default_t_grid((1.0, SQRT2))
    fit = recover_frequencies(ts, a0_values((SQRT2, 1.0), ts), 2)
    assert np.allclose(fit.frequencies, [1.0, SQRT2], atol=1e-8)
    assert fit.residual < 1e-10


def test_frequency_dimension_mismatch():
    ts = np.linspace(0.1, 1.0, 15)
    with pytest.raises(RecoveryError) as info:
        recover_frequencies(ts, a0_values((1.0, SQRT2), ts), 1)
    assert info.value.stage == "frequencies"


def test_order34_1d(cubic_quartic):
    ts = default_t_grid((1.0,))
    res = recover_order34(ts, _a(cubic_quartic, 1, ts), (1.0,), SymmetryClass.GENERAL)
    assert res.fourth_order[(4,)] == pytest.approx(1.2, rel=1e-6)
    assert res.third_order_abs == pytest.approx(0.6, rel=1e-6)
    assert res.fit.residual < 1e-8


def test_order34_two_dimensional_even_plus_cubic():
    omega = (1.0, SQRT2)
    V = TaylorPotential(omega, {(4, 0): 1.2, (2, 2): 0.7, (0, 4): 2.0, (0, 3): 0.5},
                        symmetry=SymmetryClass.EVEN_PLUS_CUBIC)
    ts = default_t_grid(omega)
    res = recover_order34(ts, _a(V, 1, ts), omega, SymmetryClass.EVEN_PLUS_CUBIC)
    for key, value in [((4, 0), 1.2), ((2, 2), 0.7), ((0, 4), 2.0)]:
        assert res.fourth_order[key] == pytest.approx(value, rel=1e-6)
    assert res.third_order_abs == pytest.approx(0.5, rel=1e-6)
    assert res.fit.condition < BASIS_CONDITION_LIMIT


def test_commensurate_frequencies_are_ill_conditioned():
    omega = (1.0, 2.0)
    ts = default_t_grid(omega)
    with pytest.warns(UserWarning, match="rationally dependent"):
        V = TaylorPotential(omega, {(4, 0): 1.2, (2, 2): 0.7, (0, 4): 2.0, (0, 3): 0.5},
                            symmetry=SymmetryClass.EVEN_PLUS_CUBIC)
        samples = _a(V, 1, ts)
        with pytest.raises(RecoveryError, match="condition"):
            recover_order34(ts, samples, omega, SymmetryClass.EVEN_PLUS_CUBIC)


def test_general_symmetry_rejected_in_two_dimensions():
    ts = default_t_grid((1.0, SQRT2))
    with pytest.raises(RecoveryError, match="symmetry"):
        recover_order34(ts, np.ones(len(ts)), (1.0, SQRT2), SymmetryClass.GENERAL)


def test_sign_ambiguity_bitwise(cubic_quartic):
    flipped = cubic_quartic.replace(derivatives={(3,): -0.6, (4,): 1.2})
    ts = default_t_grid((1.0,), 10)
    a = _a(cubic_quartic, 1, ts)
    b = _a(flipped, 1, ts)
    assert np.array_equal(a, b)


def test_inductive_order56(sextic):
    ts = default_t_grid((1.0,), 12)
    known = sextic.truncated(4)
    fit = recover_inductive(ts, _a(sextic, 2, ts), 2, known, SymmetryClass.GENERAL)
    assert fit.values[(5,)] == pytest.approx(2.4, rel=1e-4)
    assert fit.values[(6,)] == pytest.approx(7.2, rel=1e-4)
    assert fit.residual < 1e-8


def test_inductive_needs_cubic(sextic):
    V = sextic.replace(derivatives={(4,): 1.2, (6,): 7.2})
    ts = default_t_grid((1.0,), 12)
    with pytest.raises(HypothesisError):
        recover_inductive(ts, _a(V, 2, ts), 2, V.truncated(4), SymmetryClass.GENERAL)
    with pytest.raises(ValueError):
        recover_inductive(ts, _a(V, 2, ts), 1, V.truncated(4), SymmetryClass.GENERAL)


@pytest.fixture(scope="module")
def sextic_report():
    V = TaylorPotential((1.0,), {(3,): 0.6, (4,): 1.2, (5,): 2.4, (6,): 7.2})
    return V, end_to_end_1d(V, order=6)


def test_formula_route_round_trip(sextic_report):
    sextic, report = sextic_report
    assert report.sign_ambiguity
    assert max(report.residuals.values()) < 1e-8
    assert max(report.coefficient_errors.values()) < 1e-6
    assert "order 5-6" in report.stages
    text = report.table(sextic)
    assert "D[6]" in text and "rel. error" in text
    assert report.to_dict()["recovered"]["frequencies"] == [1.0]


def test_reflected_truth_is_aligned(sextic):
    reflected = sextic.replace(derivatives={b: -v if b[0] % 2 else v for b, v in sextic.derivatives.items()})
    report = end_to_end_1d(reflected, order=6, settings=RecoverySettings(t_grid=tuple(default_t_grid((1.0,), 12))))
    assert max(report.coefficient_errors.values()) < 1e-6


def test_vanishing_cubic_stops_after_order_four():
    V = TaylorPotential((1.0,), {(4,): 1.2, (6,): 7.2})
    with pytest.raises(HypothesisError) as info:
        end_to_end_1d(V, order=6)
    assert info.value.stage == "order 5-6"
    partial = info.value.partial
    assert partial.stages[-1] == "order 3-4"
    assert partial.coefficient_errors["D[4]"] < 1e-6
    assert (3,) not in partial.recovered.derivatives


def test_end_to_end_argument_checks(sextic):
    with pytest.raises(ValueError):
        end_to_end_1d(sextic, order=5)
    with pytest.raises(ValueError):
        end_to_end_1d(TaylorPotential((1.0, SQRT2)), order=4)
    with pytest.raises(ValueError):
        end_to_end_1d(sextic, settings=RecoverySettings(route="psychic"))


def test_recover_from_samples_needs_all_orders(sextic):
    ts = default_t_grid((1.0,), 10)
    with pytest.raises(ValueError, match="needs samples"):
        recover_from_samples(ts, {0: a0_values((1.0,), ts), 1: _a(sextic, 1, ts)}, 1, 6)


def test_error_grows_with_noise(cubic_quartic, rng):
    ts = default_t_grid((1.0,))
    clean = {0: a0_values((1.0,), ts), 1: _a(cubic_quartic, 1, ts)}
    unit = rng.normal(size=(2, len(ts))) + 1j * rng.normal(size=(2, len(ts)))
    errors = []
    for level in (0.0, 1e-8, 1e-6, 1e-4):
        noisy = {j: clean[j] * (1 + level * unit[j]) for j in (0, 1)}
        report = recover_from_samples(ts, noisy, 1, 4, frequency_tol=1e-2, fit_tol=1e-1)
        errors.append(max(report.compare(cubic_quartic).values()))
    assert all(a <= b for a, b in zip(errors, errors[1:]))
    assert errors[-1] > 100 * errors[1]


def test_empirical_route(cubic_quartic):
    report = end_to_end_1d(cubic_quartic, order=4, settings=RecoverySettings(route="empirical"))
    errors = report.coefficient_errors
    assert errors["omega_0"] < 1e-6
    assert errors["D[3]"] < 0.02 and errors["D[4]"] < 0.02
