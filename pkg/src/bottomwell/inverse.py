"""Recover Taylor coefficients of the potential from wave invariants.

The order of recovery is: frequencies from ``a_0``; then the fourth-order
data and the square of the cubic coefficient from ``a_1``; then, while the
cubic coefficient is non-zero, the orders ``2j+1`` and ``2j+2`` from ``a_j``.
Every fit uses basis functions produced by the forward engine itself, so the
fitter and the generator share conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from .core import MultiIndex, SymmetryClass, TaylorPotential, multi_indices_of_order
from .invariants import wave_invariant
from .oscillator import a0_values, max_time
from .trace import CutoffFunction, extract_invariants, hbar_sweep

__all__ = [
    "RecoveryError",
    "HypothesisError",
    "FrequencyFit",
    "LinearFit",
    "RecoveryReport",
    "RecoverySettings",
    "default_t_grid",
    "recover_frequencies",
    "recover_order34",
    "recover_inductive",
    "recover_from_samples",
    "end_to_end_1d",
]

BASIS_CONDITION_LIMIT = 1e8


class RecoveryError(RuntimeError):
    """Failure of one recovery stage; ``stage`` names it."""

    def __init__(self, stage: str, message: str, partial: RecoveryReport | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial


class HypothesisError(RecoveryError):
    """The cubic coefficient vanishes, so higher orders cannot be reached by induction."""


def default_t_grid(omega: Sequence[float], count: int = 40, lo: float = 0.15, hi: float = 0.9) -> np.ndarray:
    return np.linspace(lo, hi, count) * max_time(omega)


@dataclass(frozen=True)
class FrequencyFit:
    frequencies: tuple[float, ...]
    residual: float
    starts: int


def _small_t_seed(ts: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        s = np.real(1 / (2j * values))
        ok = np.abs(s) < 1
        w = 2 * np.arcsin(s[ok]) / ts[ok]
        return np.array([np.median(w)])
    order = np.argsort(ts)[: max(6, n + 2)]
    tt = ts[order]
    g = np.real(1 / values[order] / (1j * tt) ** n)
    # g(t) = prod(omega) (1 - sum(omega^2) t^2/24 + ...)
    c = np.polyfit(tt**2, g, 2)
    prod, total_sq = c[-1], -24 * c[-2] / c[-1]
    if n == 2:
        disc = max(total_sq**2 - 4 * prod**2, 0.0)
        roots = np.array([(total_sq - math.sqrt(disc)) / 2, (total_sq + math.sqrt(disc)) / 2])
        return np.sqrt(np.clip(roots, 1e-6, None))
    return np.full(n, abs(prod) ** (1 / n))


def recover_frequencies(ts: Sequence[float], values: Sequence[complex], n: int, *,
                        tol: float = 1e-8, starts: int = 8, seed: int = 0) -> FrequencyFit:
    """Fit ``prod_k 1/(2i sin(omega_k t/2))`` to samples of ``a_0``; frequencies sorted ascending."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=complex)
    small = np.argsort(ts)[:4]
    slope = np.polyfit(np.log(ts[small]), np.log(np.abs(values[small])), 1)[0]
    if abs(slope + n) > 0.5:
        raise RecoveryError("frequencies", f"small-t decay ~ t^{slope:.2f} is inconsistent with n = {n}")
    scale = np.abs(values)

    def resid(logw: np.ndarray) -> np.ndarray:
        model = a0_values(np.exp(logw), ts)
        r = (model - values) / scale
        return np.concatenate([r.real, r.imag])

    def jac(logw: np.ndarray) -> np.ndarray:
        w = np.exp(logw)
        model = a0_values(w, ts)
        # d a_0 / d log(omega_k) = -a_0 (omega_k t/2) cot(omega_k t/2)
        d = np.stack([-model * (wk * ts / 2) / np.tan(wk * ts / 2) for wk in w], axis=1) / scale[:, None]
        return np.concatenate([d.real, d.imag])

    seed_w = _small_t_seed(ts, values, n)
    rng = np.random.default_rng(seed)
    best = None
    for k in range(starts):
        start = seed_w if k == 0 else seed_w * np.exp(0.1 * rng.standard_normal(n))
        if np.any(start * ts.max() >= np.pi):
            start = np.minimum(start, 0.95 * np.pi / ts.max())
        try:
            sol = optimize.least_squares(resid, np.log(start), jac=jac, method="lm",
                                         xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise RecoveryError("frequencies", "no start converged")
    residual = float(np.sqrt(2 * best.cost / len(ts)))
    if residual > tol:
        raise RecoveryError("frequencies", f"fit residual {residual:.3g} exceeds {tol:.1g}")
    return FrequencyFit(tuple(sorted(float(w) for w in np.exp(best.x))), residual, starts)


@dataclass(frozen=True)
class LinearFit:
    """Real unknowns fitted to complex samples; ``values`` keyed by multi-index."""

    values: dict[MultiIndex, float]
    residual: float
    condition: float
    standard_errors: dict[MultiIndex, float]


def _real_lstsq(columns: list[np.ndarray], target: np.ndarray, stage: str) -> tuple[np.ndarray, float, float, np.ndarray]:
    A = np.array(columns).T
    A = np.concatenate([A.real, A.imag])
    y = np.concatenate([target.real, target.imag])
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise RecoveryError(stage, "a fitting basis function vanishes identically")
    As = A / norms
    cond = float(np.linalg.cond(As))
    if cond > BASIS_CONDITION_LIMIT:
        raise RecoveryError(stage, f"basis condition number {cond:.3g} exceeds {BASIS_CONDITION_LIMIT:.0e}; "
                                   "the frequencies look rationally dependent, which the recovery excludes")
    x, *_ = np.linalg.lstsq(As, y, rcond=None)
    r = y - As @ x
    dof = max(len(y) - len(x), 1)
    cov = np.linalg.inv(As.T @ As) * float(r @ r) / dof
    residual = float(np.linalg.norm(r) / np.linalg.norm(y)) if np.linalg.norm(y) else 0.0
    return x / norms, residual, cond, np.sqrt(np.diag(cov)) / norms


def _cubic_key(n: int, alpha: Sequence[int] = ()) -> MultiIndex:
    alpha = tuple(alpha) or (0,) * n
    return tuple(2 * a for a in alpha[:-1]) + (2 * alpha[-1] + 3,)


def _check_symmetry(n: int, symmetry: SymmetryClass) -> bool:
    """Whether the cubic family is present."""
    symmetry = SymmetryClass(symmetry)
    if symmetry is SymmetryClass.EVEN:
        return False
    if symmetry is SymmetryClass.GENERAL and n > 1:
        raise RecoveryError("order 3-4", "recovery in n > 1 needs the even or even-plus-cubic symmetry class")
    return True


@dataclass(frozen=True)
class Order34:
    fourth_order: dict[MultiIndex, float]
    third_order_abs: float
    cubic_square: float
    fit: LinearFit


def recover_order34(ts: Sequence[float], a1: Sequence[complex], omega: Sequence[float],
                    symmetry: SymmetryClass | str = SymmetryClass.EVEN_PLUS_CUBIC, *,
                    tol: float = 1e-8, negative_tol: float | None = None) -> Order34:
    """Fit ``a_1`` with the fourth-order data and the square of the cubic coefficient.

    The cubic enters only through its square, so ``|D_{3 e_n} V(0)|`` is
    returned; a clearly negative fitted square means the samples do not come
    from a potential of the assumed form.
    """
    ts = np.asarray(ts, dtype=float)
    a1 = np.asarray(a1, dtype=complex)
    n = len(omega)
    with_cubic = _check_symmetry(n, symmetry)
    probe = TaylorPotential(tuple(omega), {}, truncation_order=4)
    keys = [tuple(2 * a for a in alpha) for alpha in multi_indices_of_order(n, 2)]
    columns = []
    for key in keys:
        pot = probe.with_derivatives({key: 1.0})
        columns.append(np.array([wave_invariant(pot, 1, t, ls=[1]).value for t in ts]))
    cubic = _cubic_key(n)
    if with_cubic:
        pot = probe.with_derivatives({cubic: 1.0})
        columns.append(np.array([wave_invariant(pot, 1, t, ls=[2]).value for t in ts]))
    x, residual, cond, se = _real_lstsq(columns, a1, "order 3-4")
    if residual > tol:
        raise RecoveryError("order 3-4", f"fit residual {residual:.3g} exceeds {tol:.1g}")
    fourth = dict(zip(keys, x[: len(keys)]))
    square = float(x[-1]) if with_cubic else 0.0
    if with_cubic:
        limit = negative_tol if negative_tol is not None else 3 * se[-1] + 1e-12
        if square < -limit:
            raise RecoveryError("order 3-4", f"fitted square of the cubic coefficient is negative ({square:.3g})")
        if square <= limit:
            # not distinguishable from zero
            square = 0.0
    all_keys = keys + ([cubic] if with_cubic else [])
    fit = LinearFit(dict(zip(all_keys, x)), residual, cond, dict(zip(all_keys, se)))
    return Order34(fourth, math.sqrt(max(square, 0.0)), square, fit)


def recover_inductive(ts: Sequence[float], aj: Sequence[complex], j: int, known: TaylorPotential,
                      symmetry: SymmetryClass | str = SymmetryClass.EVEN_PLUS_CUBIC, *,
                      tol: float = 1e-8, cubic_floor: float = 1e-12) -> LinearFit:
    """Recover the order ``2j+1`` and ``2j+2`` data from ``a_j`` given everything up to order ``2j``.

    The engine contribution of the known coefficients is subtracted; the rest
    is affine in the unknowns, with columns computed as exact engine differences.
    """
    if j < 2:
        raise ValueError("use recover_order34 for j = 1")
    ts = np.asarray(ts, dtype=float)
    aj = np.asarray(aj, dtype=complex)
    n = known.dimension
    _check_symmetry(n, symmetry)
    cubic = _cubic_key(n)
    if abs(known.derivative(cubic)) <= cubic_floor:
        raise HypothesisError(f"order {2 * j + 1}-{2 * j + 2}",
                              "the cubic coefficient D_{3e_n}V(0) vanishes; orders above 4 are not "
                              "determined by this procedure")
    base = known.truncated(2 * j).replace(truncation_order=2 * j + 2)
    top = [tuple(2 * a for a in alpha) for alpha in multi_indices_of_order(n, j + 1)]
    odd = [_cubic_key(n, alpha) for alpha in multi_indices_of_order(n, j - 1)]
    unknown = top + odd
    ref = np.array([wave_invariant(base, j, t).value for t in ts])
    ref12 = np.array([wave_invariant(base, j, t, ls=[1, 2]).value for t in ts])
    columns = []
    for key in unknown:
        pot = base.with_derivatives({key: 1.0})
        columns.append(np.array([wave_invariant(pot, j, t, ls=[1, 2]).value for t in ts]) - ref12)
    stage = f"order {2 * j + 1}-{2 * j + 2}"
    x, residual, cond, se = _real_lstsq(columns, aj - ref, stage)
    if residual > tol:
        raise RecoveryError(stage, f"fit residual {residual:.3g} exceeds {tol:.1g}")
    return LinearFit(dict(zip(unknown, x)), residual, cond, dict(zip(unknown, se)))


@dataclass(frozen=True)
class RecoverySettings:
    route: str = "formula"
    t_grid: tuple[float, ...] | None = None
    hbar_grid: tuple[float, ...] = tuple(np.geomspace(0.02, 0.1, 8))
    delta: float = 20.0
    plateau: float = 0.1
    fit_order: int = 5
    frequency_tol: float | None = None
    fit_tol: float | None = None
    threads: int = 1

    def grid(self, omega: Sequence[float]) -> np.ndarray:
        if self.t_grid is not None:
            return np.asarray(self.t_grid, dtype=float)
        if self.route == "empirical":
            return default_t_grid(omega, 12, 0.45, 0.9)
        return default_t_grid(omega)


@dataclass
class RecoveryReport:
    recovered: TaylorPotential
    sign_ambiguity: bool
    residuals: dict[str, float] = field(default_factory=dict)
    conditions: dict[str, float] = field(default_factory=dict)
    coefficient_errors: dict[str, float] = field(default_factory=dict)
    stages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "recovered": self.recovered.to_dict(),
            "sign_ambiguity": self.sign_ambiguity,
            "residuals": self.residuals,
            "conditions": self.conditions,
            "coefficient_errors": self.coefficient_errors,
            "stages": self.stages,
        }

    def compare(self, truth: TaylorPotential) -> dict[str, float]:
        """Fill ``coefficient_errors`` with relative errors against ``truth``."""
        self.coefficient_errors = _errors_against(truth, self.recovered, self.sign_ambiguity)
        return self.coefficient_errors

    def table(self, truth: TaylorPotential | None = None) -> str:
        rows = [("quantity", "recovered", "true", "rel. error")]
        V = self.recovered
        if truth is not None:
            truth = _aligned(truth, self.sign_ambiguity)
            errors = _errors_against(truth, V, False)
        for k, w in enumerate(V.frequencies):
            label = f"omega_{k}"
            tv = sorted(truth.frequencies)[k] if truth else None
            rows.append((label, f"{w:.12g}", "" if tv is None else f"{tv:.12g}",
                         "" if tv is None else f"{errors[label]:.2e}"))
        for beta, v in V.derivatives.items():
            label = f"D{list(beta)}"
            tv = truth.derivative(beta) if truth else None
            rows.append((label, f"{v:.12g}", "" if tv is None else f"{tv:.12g}",
                         "" if tv is None else f"{errors[label]:.2e}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _aligned(truth: TaylorPotential, sign_ambiguity: bool) -> TaylorPotential:
    """Reflect a 1D truth so that its cubic coefficient is non-negative."""
    if sign_ambiguity and truth.dimension == 1 and truth.derivative((3,)) < 0:
        return truth.replace(derivatives={b: -v if sum(b) % 2 else v for b, v in truth.derivatives.items()})
    return truth


def _errors_against(truth: TaylorPotential, V: TaylorPotential, sign_ambiguity: bool) -> dict[str, float]:
    truth = _aligned(truth, sign_ambiguity)
    out = {}
    for k, (w, tw) in enumerate(zip(V.frequencies, sorted(truth.frequencies))):
        out[f"omega_{k}"] = abs(w - tw) / tw
    for beta, v in V.derivatives.items():
        tv = truth.derivative(beta)
        out[f"D{list(beta)}"] = abs(v - tv) / abs(tv) if tv else abs(v)
    return out


def recover_from_samples(ts: Sequence[float], samples: Mapping[int, Sequence[complex]], n: int, order: int,
                         symmetry: SymmetryClass | str = SymmetryClass.GENERAL, *,
                         frequency_tol: float = 1e-8, fit_tol: float = 1e-8,
                         stages: list[str] | None = None) -> RecoveryReport:
    """Run the recovery stages on samples ``{j: a_j(ts)}`` up to Taylor order ``order``.

    A failing stage raises ``RecoveryError`` whose ``partial`` holds the
    report assembled so far.
    """
    if order < 4 or order % 2:
        raise ValueError("order must be an even number >= 4")
    jmax = order // 2 - 1
    missing = [j for j in range(jmax + 1) if j not in samples]
    if missing:
        raise ValueError(f"order {order} needs samples of a_j for j = {missing}")
    ts = np.asarray(ts, dtype=float)
    stages = list(stages or [])
    freq = recover_frequencies(ts, samples[0], n, tol=frequency_tol)
    stages.append("frequencies")
    report = RecoveryReport(TaylorPotential(freq.frequencies, {}, truncation_order=2),
                            sign_ambiguity=_check_symmetry(n, symmetry),
                            residuals={"frequencies": freq.residual}, stages=stages)
    try:
        o34 = recover_order34(ts, samples[1], freq.frequencies, symmetry, tol=fit_tol)
    except RecoveryError as exc:
        exc.partial = report
        raise
    stages.append("order 3-4")
    report.residuals["order 3-4"] = o34.fit.residual
    report.conditions["order 3-4"] = o34.fit.condition
    derivs = dict(o34.fourth_order)
    if o34.third_order_abs > 0:
        derivs[_cubic_key(n)] = o34.third_order_abs
    current = TaylorPotential(freq.frequencies, derivs, truncation_order=4)
    report.recovered = current
    for jj in range(2, jmax + 1):
        stage = f"order {2 * jj + 1}-{2 * jj + 2}"
        try:
            fit = recover_inductive(ts, samples[jj], jj, current, symmetry, tol=fit_tol)
        except RecoveryError as exc:
            exc.partial = report
            raise
        stages.append(stage)
        report.residuals[stage] = fit.residual
        report.conditions[stage] = fit.condition
        current = current.replace(derivatives={**current.derivatives, **fit.values}, truncation_order=2 * jj + 2)
        report.recovered = current
    return report


def end_to_end_1d(V_true: TaylorPotential, order: int = 4,
                  settings: RecoverySettings | None = None) -> RecoveryReport:
    """Recover a one-dimensional potential to the given Taylor order.

    ``settings.route`` selects the data source: ``"formula"`` evaluates the
    invariants of ``V_true`` with the engine, ``"empirical"`` computes
    eigenvalues, sweeps the trace in ``hbar`` and fits the invariants.
    """
    settings = settings or RecoverySettings()
    if V_true.dimension != 1:
        raise ValueError("end_to_end_1d handles one-dimensional potentials")
    if order < 4 or order % 2:
        raise ValueError("order must be an even number >= 4")
    if settings.route not in ("formula", "empirical"):
        raise ValueError(f"unknown route '{settings.route}'")
    jmax = order // 2 - 1
    omega_true = V_true.frequencies
    ts = settings.grid(omega_true)
    empirical = settings.route == "empirical"
    stages: list[str] = []

    samples: dict[int, np.ndarray] = {}
    if empirical:
        theta = CutoffFunction(settings.delta * min(omega_true), settings.plateau)
        try:
            table = hbar_sweep(V_true, theta, ts, settings.hbar_grid, threads=settings.threads)
            fits = extract_invariants(table, settings.fit_order, warn=False)
        except Exception as exc:
            raise RecoveryError("spectrum", str(exc)) from exc
        for jj in range(jmax + 1):
            samples[jj] = np.array([f.coefficients[jj] for f in fits])
        stages.append(f"sweep over {len(settings.hbar_grid)} hbar values, fit order {settings.fit_order}")
    else:
        samples[0] = a0_values(omega_true, ts)
        for jj in range(1, jmax + 1):
            samples[jj] = np.array([wave_invariant(V_true, jj, t).value for t in ts])
        stages.append("invariants evaluated from the generating potential")

    try:
        report = recover_from_samples(
            ts, samples, 1, order, SymmetryClass.GENERAL,
            frequency_tol=settings.frequency_tol or (1e-5 if empirical else 1e-8),
            fit_tol=settings.fit_tol or (5e-2 if empirical else 1e-8), stages=stages)
    except RecoveryError as exc:
        if exc.partial is not None:
            exc.partial.compare(V_true)
        raise
    report.compare(V_true)
    return report
