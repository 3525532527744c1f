"""Spectral traces, their small-``hbar`` fits, and a perturbation-theory oracle.

The smoothly truncated trace ``sum_j Theta(E_j) exp(-i t E_j/hbar)`` has an
expansion ``sum_j a_j(t) hbar^j``; :func:`extract_invariants` recovers the
``a_j`` by least squares over a sweep in ``hbar``. The Rayleigh-Schroedinger
oracle sums perturbed level energies over the whole ladder in closed form.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .core import TaylorPotential
from .oscillator import a0_values
from .spectral import EigenvalueSet, hermite_spectrum, fd_spectrum

__all__ = [
    "CutoffFunction",
    "TraceTable",
    "ExtractionResult",
    "truncated_trace",
    "regularized_trace",
    "hbar_sweep",
    "extract_invariants",
    "geometric_grid",
    "perturbation_oracle_a1",
    "perturbation_oracle",
    "rs_energy_coefficients",
    "ladder_sum",
]

CONDITION_LIMIT = 1e10


def _smooth_step(x: np.ndarray) -> np.ndarray:
    """``C^infinity`` step from 0 at ``x <= 0`` to 1 at ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        g = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        h = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        return g / (g + h)


@dataclass(frozen=True)
class CutoffFunction:
    """Smooth energy cutoff equal to 1 on ``[0, plateau*delta]`` and 0 from ``delta`` on."""

    delta: float
    plateau: float = 0.1

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 < self.plateau < 1:
            raise ValueError("plateau must lie in (0, 1)")

    def __call__(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        x = (self.delta - E) / ((1 - self.plateau) * self.delta)
        return _smooth_step(x)


@dataclass(frozen=True)
class TraceTable:
    """Truncated traces on a ``hbar x t`` grid; ``values[i, k]`` is at ``hbar_grid[i]``, ``t_grid[k]``."""

    t_grid: np.ndarray
    hbar_grid: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)
    spectra: tuple[EigenvalueSet, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        t = np.asarray(self.t_grid, dtype=float)
        h = np.asarray(self.hbar_grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if np.any(np.diff(t) <= 0) or np.any(np.diff(h) <= 0):
            raise ValueError("grids must be strictly increasing")
        if v.shape != (len(h), len(t)):
            raise ValueError(f"values have shape {v.shape}, expected {(len(h), len(t))}")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "hbar_grid", h)
        object.__setattr__(self, "values", v)

    def to_csv(self, path: str | Path, header: Sequence[str] = ()) -> None:
        """Write ``hbar, t, re, im`` rows plus a ``.json`` provenance sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["hbar", "t", "re", "im"])
            for i, hb in enumerate(self.hbar_grid):
                for k, t in enumerate(self.t_grid):
                    v = self.values[i, k]
                    w.writerow([f"{hb:.17g}", f"{t:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])
        path.with_suffix(".json").write_text(json.dumps(self.provenance, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> TraceTable:
        path = Path(path)
        rows = []
        with path.open() as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            next(reader)
            for r in reader:
                rows.append([float(x) for x in r])
        rows = np.array(rows)
        hb = np.unique(rows[:, 0])
        ts = np.unique(rows[:, 1])
        values = np.full((len(hb), len(ts)), np.nan, dtype=complex)
        for h, t, re, im in rows:
            values[np.searchsorted(hb, h), np.searchsorted(ts, t)] = re + 1j * im
        if np.any(np.isnan(values)):
            raise ValueError("trace table is incomplete")
        side = path.with_suffix(".json")
        prov = json.loads(side.read_text()) if side.exists() else {}
        return cls(ts, hb, values, prov)


def truncated_trace(eigs: EigenvalueSet, theta: CutoffFunction, t) -> complex | np.ndarray:
    """``sum_j Theta(E_j) exp(-i t E_j / hbar)``."""
    if eigs.cutoff < theta.delta:
        raise ValueError(f"eigenvalues were only computed up to {eigs.cutoff} < delta = {theta.delta}")
    E = eigs.eigenvalues
    w = theta(E)
    keep = w > 0
    E, w = E[keep], w[keep]
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.exp(-1j * np.outer(tt, E) / eigs.hbar) @ w
    return complex(out[0]) if np.ndim(t) == 0 else out


def regularized_trace(eigs: EigenvalueSet, t, eps: float) -> complex | np.ndarray:
    """``sum_j exp(-(i t + eps) E_j / hbar)`` over every computed level."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    E = eigs.eigenvalues
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.exp(-np.outer(1j * tt + eps, E) / eigs.hbar).sum(axis=1)
    return complex(out[0]) if np.ndim(t) == 0 else out


def geometric_grid(lo: float, hi: float, count: int) -> np.ndarray:
    return np.geomspace(lo, hi, count)


def _spectrum(V: TaylorPotential, hbar: float, cutoff: float, solver: str, opts: dict) -> EigenvalueSet:
    if solver == "hermite":
        return hermite_spectrum(V, hbar, cutoff, N=opts.get("N"))
    if solver == "finite-difference":
        return fd_spectrum(V, hbar, cutoff, L=opts["L"], M=opts["M"])
    raise ValueError(f"unknown solver '{solver}'")


def hbar_sweep(V: TaylorPotential, theta: CutoffFunction, t_grid: Sequence[float],
               hbar_grid: Sequence[float], solver: str = "hermite", *, threads: int = 1,
               accuracy_factor: float = 1e-3, **solver_opts) -> TraceTable:
    """Solve at every ``hbar`` and tabulate the truncated trace.

    Each solve must satisfy ``estimated_accuracy <= accuracy_factor * hbar^2``.
    """
    hbar_grid = np.sort(np.asarray(hbar_grid, dtype=float))
    t_grid = np.asarray(t_grid, dtype=float)

    def one(hb: float) -> EigenvalueSet:
        try:
            eigs = _spectrum(V, hb, theta.delta, solver, solver_opts)
        except Exception as exc:
            raise RuntimeError(f"spectral solve failed at hbar = {hb}: {exc}") from exc
        if not eigs.estimated_accuracy <= accuracy_factor * hb**2:
            raise RuntimeError(f"eigenvalues at hbar = {hb} are only accurate to "
                               f"{eigs.estimated_accuracy:.3g} > {accuracy_factor} hbar^2")
        return eigs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spectra = list(pool.map(one, hbar_grid))
    else:
        spectra = [one(hb) for hb in hbar_grid]
    values = np.array([truncated_trace(e, theta, t_grid) for e in spectra])
    provenance = {
        "potential": V.to_dict(),
        "cutoff": {"delta": theta.delta, "plateau": theta.plateau},
        "solver": solver,
        "solver_options": {k: v for k, v in solver_opts.items()},
        "basis": [e.basis for e in spectra],
        "estimated_accuracy": [e.estimated_accuracy for e in spectra],
        "levels": [len(e) for e in spectra],
    }
    return TraceTable(t_grid, hbar_grid, values, provenance, tuple(spectra))


@dataclass(frozen=True)
class ExtractionResult:
    """Fitted ``a_0..a_J`` at one time with fit diagnostics."""

    t: float
    coefficients: np.ndarray
    residual: float
    condition: float
    standard_errors: np.ndarray


def extract_invariants(table: TraceTable, J: int, *, warn: bool = True) -> list[ExtractionResult]:
    """Least-squares fit of ``sum_{j<=J} a_j hbar^j`` to each column of the table.

    The design matrix uses ``hbar / max(hbar)`` for conditioning. A warning is
    raised when the top coefficient is not resolved by the data, i.e. smaller
    than twice its standard error.
    """
    h = table.hbar_grid
    if len(h) < J + 3:
        raise ValueError(f"need at least J + 3 = {J + 3} hbar values, got {len(h)}")
    scale = h.max()
    A = (h / scale)[:, None] ** np.arange(J + 1)[None, :]
    cond = float(np.linalg.cond(A))
    if cond > CONDITION_LIMIT:
        raise ValueError(f"design matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}; "
                         "spread the hbar grid or lower J")
    pinv = np.linalg.pinv(A)
    cov = np.linalg.inv(A.T @ A)
    unscale = scale ** -np.arange(J + 1)
    dof = len(h) - (J + 1)
    out = []
    unresolved = []
    for k, t in enumerate(table.t_grid):
        y = table.values[:, k]
        c = pinv @ y
        r = y - A @ c
        rss = float(np.vdot(r, r).real)
        sigma2 = rss / dof
        se = np.sqrt(sigma2 * np.diag(cov)) * unscale
        coeffs = c * unscale
        norm = float(np.linalg.norm(y))
        out.append(ExtractionResult(t=float(t), coefficients=coeffs,
                                    residual=math.sqrt(rss) / norm if norm else 0.0,
                                    condition=cond, standard_errors=se))
        if J >= 1 and abs(coeffs[J]) < 2 * se[J]:
            unresolved.append(float(t))
    if warn and unresolved:
        warnings.warn(f"a_{J} is not resolved by the data at t = {unresolved}; "
                      "the fit order exceeds what the sweep supports", stacklevel=2)
    return out


# Rayleigh-Schroedinger oracle ------------------------------------------------

def _one_dim_coefficients(V: TaylorPotential) -> tuple[float, dict[int, float]]:
    if V.dimension != 1:
        raise ValueError("the perturbation oracle is one-dimensional")
    return V.frequencies[0], {b[0]: v for b, v in V.derivatives.items()}


def ladder_sum(poly_in_n: Sequence[complex], omega: float, t: float) -> complex:
    """``sum_{n>=0} p(n) exp(-i omega t (n + 1/2))`` in closed form.

    Uses ``sum n^k q^n = q A_k(q)/(1-q)^(k+1)`` built from the recursion
    ``P_{k+1} = q (P_k' (1 - q) + (k+1) P_k)`` with ``P_0 = 1``.
    """
    q = np.exp(-1j * omega * t)
    total = 0j
    pk = np.array([1.0])
    for k, c in enumerate(poly_in_n):
        total += c * npoly.polyval(q, pk) / (1 - q) ** (k + 1)
        pk = npoly.polymulx(npoly.polyadd(npoly.polymul(npoly.polyder(pk), [1, -1]), (k + 1) * pk))
    return complex(np.exp(-0.5j * omega * t) * total)


def perturbation_oracle_a1(V: TaylorPotential, t: float) -> complex:
    """``a_1`` of ``omega^2 x^2/2 + a x^3 + b x^4`` from second-order perturbation theory.

    The level shift is ``hbar^2 e2(n)`` with
    ``e2 = 3b/(4 omega^2) (2n^2+2n+1) - a^2/(8 omega^4) (30n^2+30n+11)``, and
    ``a_1(t) = -i t sum_n e2(n) exp(-i omega t (n+1/2))``.
    """
    omega, d = _one_dim_coefficients(V)
    extra = set(d) - {3, 4}
    if extra:
        raise ValueError(f"the closed-form oracle handles cubic and quartic terms only, got orders {sorted(extra)}")
    a = d.get(3, 0.0) / 6
    b = d.get(4, 0.0) / 24
    quartic = 3 * b / (4 * omega**2)
    cubic = a * a / (8 * omega**4)
    e2 = [quartic * 1 - cubic * 11, quartic * 2 - cubic * 30, quartic * 2 - cubic * 30]
    return ladder_sum([-1j * t * c for c in e2], omega, t)


def rs_energy_coefficients(V: TaylorPotential, level: int, order: int = 4) -> np.ndarray:
    """Coefficients ``eps_k`` of ``E/hbar = sum_k hbar^(k/2) eps_k`` for one level.

    With ``x = sqrt(hbar) X`` the Hamiltonian over ``hbar`` is
    ``omega (N + 1/2) + sum_d hbar^((d-2)/2) c_d X^d``; the series is computed
    with intermediate normalisation in a Fock space large enough to be exact.
    """
    omega, d = _one_dim_coefficients(V)
    dmax = max(d, default=3)
    size = level + order * dmax + 4
    lower = np.diag(np.sqrt(np.arange(1, size)), 1)
    X = (lower + lower.T) / math.sqrt(2 * omega)
    powers = [np.eye(size)]
    for _ in range(dmax):
        powers.append(powers[-1] @ X)
    pert = {}
    for deg, val in d.items():
        p = deg - 2
        pert[p] = pert.get(p, 0) + val / math.factorial(deg) * powers[deg]
    e0 = omega * (np.arange(size) + 0.5)
    resolvent = np.zeros(size)
    others = np.arange(size) != level
    resolvent[others] = 1 / (e0[level] - e0[others])
    psi = [np.eye(size)[level]]
    energies = [e0[level]]
    for k in range(1, order + 1):
        ek = sum(pert[p][level] @ psi[k - p] for p in range(1, k + 1) if p in pert)
        energies.append(float(ek))
        rhs = sum(pert[p] @ psi[k - p] for p in range(1, k + 1) if p in pert) \
            - sum(energies[p] * psi[k - p] for p in range(1, k + 1))
        psi.append(resolvent * rhs)
    return np.array(energies)


def perturbation_oracle(V: TaylorPotential, j: int, t: float) -> complex:
    """``a_1`` or ``a_2`` of a one-dimensional polynomial well from perturbed level energies.

    ``E_n = hbar omega (n+1/2) + hbar^2 eps_2(n) + hbar^3 eps_4(n) + ...``, where
    ``eps_2`` and ``eps_4`` are polynomials in ``n`` of degree 2 and 3. They are
    recovered exactly by fitting a few levels and summed over the ladder.
    """
    if j not in (1, 2):
        raise ValueError("the oracle covers j = 1 and j = 2")
    omega, _ = _one_dim_coefficients(V)
    levels = np.arange(8)
    eps = np.array([rs_energy_coefficients(V, n) for n in levels])
    e2 = npoly.polyfit(levels, eps[:, 2], 2)
    if j == 1:
        return ladder_sum(-1j * t * e2, omega, t)
    e4 = npoly.polyfit(levels, eps[:, 4], 3)
    poly = npoly.polyadd(-1j * t * e4, -t * t / 2 * npoly.polymul(e2, e2))
    return ladder_sum(poly, omega, t)
