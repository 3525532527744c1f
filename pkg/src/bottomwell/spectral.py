"""Numerical eigenvalues of ``-hbar^2/2 Laplacian + V`` and sanity checks on them.

Two unrelated solvers are provided:

* a Hermite-basis solver whose matrix elements come from ladder-operator
  algebra, exact for polynomial potentials;
* a fourth-order finite-difference solver on a box with Dirichlet walls.

Both attach an accuracy estimate obtained by repeating the solve at half the
basis size or grid resolution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate, optimize

from .core import TaylorPotential
from .oscillator import lattice_energies

__all__ = [
    "EigenvalueSet",
    "build_hermite_hamiltonian",
    "build_fd_hamiltonian",
    "low_eigenvalues",
    "hermite_spectrum",
    "fd_spectrum",
    "WeylReport",
    "weyl_count_check",
    "MinMaxReport",
    "minmax_bound_check",
    "position_operator",
]

MAX_DENSE = 6000
SHIFT_INVERT_SIZE = 4000


@dataclass(frozen=True)
class EigenvalueSet:
    hbar: float
    eigenvalues: np.ndarray
    solver: str
    basis: dict = field(default_factory=dict)
    estimated_accuracy: float = float("nan")
    cutoff: float = float("inf")

    def __post_init__(self) -> None:
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        object.__setattr__(self, "eigenvalues", ev)

    def __len__(self) -> int:
        return len(self.eigenvalues)


def position_operator(N: int, hbar: float, omega: float) -> sp.csr_matrix:
    """``x = sqrt(hbar/(2 omega)) (a + a^dagger)`` in the first ``N`` oscillator states."""
    off = np.sqrt(hbar / (2 * omega) * np.arange(1, N))
    return sp.diags([off, off], [-1, 1], shape=(N, N), format="csr")


def _hermite_check(V: TaylorPotential, hbar: float, N: int, cutoff: float | None) -> None:
    if cutoff is not None and N * hbar * min(V.frequencies) < 4 * cutoff:
        raise ValueError(
            f"basis size N = {N} is too small for cutoff {cutoff} at hbar = {hbar}; "
            f"need N >= {math.ceil(4 * cutoff / (hbar * min(V.frequencies)))}"
        )
    if V.dimension == 1 and V.derivatives:
        top = max(V.derivatives, key=sum)
        if sum(top) % 2 or V.derivatives[top] < 0:
            warnings.warn("the highest-order term is odd or negative; the potential is not "
                          "confining and truncated-basis eigenvalues may be spurious", stacklevel=3)


def build_hermite_hamiltonian(V: TaylorPotential, hbar: float, N: int,
                              cutoff: float | None = None) -> sp.csr_matrix:
    """Matrix of ``H0 + W`` in the oscillator basis with ``N`` states along the softest axis.

    Powers of ``x`` are formed in a basis enlarged by the polynomial degree and
    then truncated, so every matrix element is exact up to rounding. For
    ``n = 2`` only product states with oscillator energy at most
    ``hbar min(omega) (N + 1/2)`` are kept (a principal submatrix of the
    tensor-product matrix), which drops states that cannot matter below the
    cutoff and keeps dense solves affordable.
    """
    if hbar <= 0 or N < 1:
        raise ValueError("need hbar > 0 and N >= 1")
    _hermite_check(V, hbar, N, cutoff)
    n = V.dimension
    if n > 2:
        raise ValueError("eigensolvers support n <= 2")
    degree = V.max_stored_order if V.derivatives else 0
    big = N + degree
    powers = []
    for w in V.frequencies:
        X = position_operator(big, hbar, w)
        pk = [sp.identity(big, format="csr")]
        for _ in range(degree):
            pk.append(pk[-1] @ X)
        powers.append([p[:N, :N].tocsr() for p in pk])
    diag = np.zeros(N**n)
    for k, w in enumerate(V.frequencies):
        occ = np.arange(N)
        axis = hbar * w * (occ + 0.5)
        shape = [1] * n
        shape[k] = N
        diag = diag + np.broadcast_to(axis.reshape(shape), (N,) * n).ravel()
    H = sp.diags(diag, format="csr")
    for beta, coef in V.monomial_coefficients().items():
        term = powers[0][beta[0]]
        for k in range(1, n):
            term = sp.kron(term, powers[k][beta[k]], format="csr")
        H = H + coef * term
    if n == 2:
        keep = diag <= hbar * min(V.frequencies) * (N + 0.5) + 1e-12 * hbar
        H = H.tocsr()[keep][:, keep]
    return H.tocsr()


def build_fd_hamiltonian(V: TaylorPotential | Callable, hbar: float, L: float, M: int,
                         dimension: int | None = None) -> sp.csr_matrix:
    """Fourth-order finite differences on ``[-L, L]^n`` with ``M`` interior points per axis.

    ``V`` may be a :class:`TaylorPotential` or any callable taking an array of
    points with the spatial coordinates on the last axis.
    """
    n = V.dimension if isinstance(V, TaylorPotential) else (dimension or 1)
    if M <= 8 * L / math.sqrt(hbar):
        raise ValueError(f"M = {M} grid points are too few; need M > 8L/sqrt(hbar) = {8 * L / math.sqrt(hbar):.1f}")
    if n > 2:
        raise ValueError("eigensolvers support n <= 2")
    h = 2 * L / (M + 1)
    x = -L + h * np.arange(1, M + 1)
    c = hbar**2 / 2 / (12 * h * h)
    bands = [np.full(M - 2, -c), np.full(M - 1, 16 * c), np.full(M, -30 * c)]
    lap = -sp.diags([bands[0], bands[1], bands[2], bands[1], bands[0]], [-2, -1, 0, 1, 2], format="csr")
    if n == 1:
        kinetic = lap
        pts = x[:, None]
    else:
        eye = sp.identity(M, format="csr")
        kinetic = sp.kron(lap, eye, format="csr") + sp.kron(eye, lap, format="csr")
        g1, g2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
    pot = np.asarray(V(pts), dtype=float).reshape(-1)
    return (kinetic + sp.diags(pot, format="csr")).tocsr()


def _bandwidth(A) -> int:
    coo = sp.coo_matrix(A)
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


def _shift_invert(A, cutoff: float | None, count: int | None) -> np.ndarray:
    """Lowest eigenvalues of a large sparse matrix by shift-invert Lanczos.

    The shift is a Gershgorin lower bound, so the eigenvalues nearest to it
    are the lowest ones; the number requested doubles until ``cutoff`` is passed.
    """
    A = sp.csr_matrix(A)
    size = A.shape[0]
    radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(A.diagonal())
    sigma = float(np.min(A.diagonal() - radius)) - 1e-3
    k = min(count if count is not None else 32, size - 2)
    while True:
        ev = np.sort(spla.eigsh(A, k=k, sigma=sigma, which="LM", return_eigenvectors=False,
                                tol=1e-13, v0=np.ones(size)))
        if count is not None:
            return ev
        if ev[-1] > cutoff or k == size - 2:
            return ev[ev <= cutoff]
        k = min(2 * k, size - 2)


def _solve(A, cutoff: float | None = None, count: int | None = None) -> np.ndarray:
    """Eigenvalues ``<= cutoff`` or the lowest ``count`` of them."""
    size = A.shape[0]
    if count is not None and count == 0:
        return np.zeros(0)
    bw = _bandwidth(A) if sp.issparse(A) else size - 1
    if sp.issparse(A) and size > SHIFT_INVERT_SIZE and bw > 64:
        return _shift_invert(A, cutoff, count)
    if sp.issparse(A) and bw < size // 4:
        coo = sp.coo_matrix(A)
        ab = np.zeros((bw + 1, size))
        low = coo.row >= coo.col
        ab[coo.row[low] - coo.col[low], coo.col[low]] = coo.data[low]
        if count is not None:
            return scipy.linalg.eig_banded(ab, lower=True, eigvals_only=True, select="i",
                                           select_range=(0, min(count, size) - 1))
        return scipy.linalg.eig_banded(ab, lower=True, eigvals_only=True, select="v",
                                       select_range=(-np.inf, cutoff))
    if size > MAX_DENSE:
        raise ValueError(f"dense eigensolve of size {size} exceeds the limit {MAX_DENSE}")
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if count is not None:
        return scipy.linalg.eigh(dense, eigvals_only=True, subset_by_index=(0, min(count, size) - 1))
    ev = scipy.linalg.eigvalsh(dense)
    return ev[ev <= cutoff]


def low_eigenvalues(matrix, cutoff: float, *, coarse=None, hbar: float = float("nan"),
                    solver: str = "matrix", basis: dict | None = None) -> EigenvalueSet:
    """All eigenvalues of a symmetric matrix up to ``cutoff``.

    If ``coarse`` (the same operator at half resolution) is given, the largest
    change of the retained eigenvalues between the two is attached as
    ``estimated_accuracy``.
    """
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    ev = np.sort(_solve(matrix, cutoff=cutoff))
    accuracy = float("nan")
    if coarse is not None:
        ref = np.sort(_solve(coarse, count=len(ev))) if len(ev) else np.zeros(0)
        accuracy = float(np.max(np.abs(ev - ref))) if len(ref) == len(ev) and len(ev) else (
            0.0 if not len(ev) else float("inf"))
    return EigenvalueSet(hbar=hbar, eigenvalues=ev, solver=solver, basis=basis or {},
                         estimated_accuracy=accuracy, cutoff=cutoff)


def default_basis_size(V: TaylorPotential, hbar: float, cutoff: float) -> int:
    return int(math.ceil(4 * cutoff / (hbar * min(V.frequencies)))) + 16


def hermite_spectrum(V: TaylorPotential, hbar: float, cutoff: float, N: int | None = None) -> EigenvalueSet:
    """Eigenvalues up to ``cutoff`` in the Hermite basis, checked against half the basis size."""
    N = N or default_basis_size(V, hbar, cutoff)
    H = build_hermite_hamiltonian(V, hbar, N, cutoff)
    Hc = build_hermite_hamiltonian(V, hbar, max(N // 2, 1))
    return low_eigenvalues(H, cutoff, coarse=Hc, hbar=hbar, solver="hermite", basis={"N": N})


def fd_spectrum(V: TaylorPotential | Callable, hbar: float, cutoff: float, L: float, M: int,
                dimension: int | None = None) -> EigenvalueSet:
    """Eigenvalues up to ``cutoff`` by finite differences, checked against half the grid."""
    H = build_fd_hamiltonian(V, hbar, L, M, dimension)
    try:
        Hc = build_fd_hamiltonian(V, hbar, L, M // 2, dimension)
    except ValueError:
        Hc = None
    return low_eigenvalues(H, cutoff, coarse=Hc, hbar=hbar, solver="finite-difference",
                           basis={"L": L, "M": M})


@dataclass(frozen=True)
class WeylReport:
    count: int
    phase_space_estimate: float
    ratio: float
    low_count: bool


def _well_interval(V: TaylorPotential, delta: float, reach: float = 1e3) -> tuple[float, float]:
    f = lambda x: V(x) - delta
    ends = []
    for sign in (-1.0, 1.0):
        step, x = 0.01, 0.0
        while f(sign * (x + step)) < 0:
            x += step
            step *= 1.5
            if x > reach:
                raise ValueError("the sublevel set is not bounded; the potential does not confine")
        ends.append(optimize.brentq(lambda y: f(sign * y), x, x + step))
    return -ends[0], ends[1]


def phase_space_volume(V: TaylorPotential, delta: float, samples: int = 400_000,
                       seed: int = 0) -> tuple[float, float]:
    """Volume of ``{xi^2/2 + V(x) <= delta}`` containing the origin, and its standard error."""
    n = V.dimension
    if n == 1:
        lo, hi = _well_interval(V, delta)
        val, err = integrate.quad(lambda x: 2 * math.sqrt(max(2 * (delta - V(x)), 0.0)), lo, hi, limit=200)
        return val, err
    rng = np.random.default_rng(seed)
    box = []
    for k in range(n):
        axis_V = TaylorPotential((V.frequencies[k],),
                                 {(b[k],): v for b, v in V.derivatives.items() if sum(b) == b[k]})
        lo, hi = _well_interval(axis_V, delta)
        box.append((1.5 * lo, 1.5 * hi))
    box = np.array(box)
    x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((samples, n))
    room = np.clip(2 * (delta - V(x)), 0, None)
    unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    vals = unit_ball * room ** (n / 2) * np.prod(box[:, 1] - box[:, 0])
    return float(vals.mean()), float(vals.std() / math.sqrt(samples))


def weyl_count_check(V: TaylorPotential, hbar: float, delta: float, *,
                     eigenvalues: EigenvalueSet | None = None, samples: int = 400_000,
                     seed: int = 0, max_rel_error: float = 0.01) -> WeylReport:
    """Compare the number of eigenvalues ``<= delta`` with ``vol/(2 pi hbar)^n``."""
    eigs = eigenvalues or hermite_spectrum(V, hbar, delta)
    count = int(np.sum(eigs.eigenvalues <= delta))
    vol, err = phase_space_volume(V, delta, samples=samples, seed=seed)
    if V.dimension > 1 and err > max_rel_error * vol:
        raise RuntimeError(f"Monte Carlo error {err / vol:.2%} is too high; increase samples")
    estimate = vol / (2 * math.pi * hbar) ** V.dimension
    low = count < 10
    if low:
        warnings.warn(f"only {count} levels below delta; the Weyl ratio is not meaningful", stacklevel=2)
    return WeylReport(count=count, phase_space_estimate=estimate,
                      ratio=count / estimate if estimate else float("nan"), low_count=low)


@dataclass(frozen=True)
class MinMaxReport:
    holds: bool
    max_violation: float
    bound: float
    checked: int


def minmax_bound_check(V: TaylorPotential, hbar: float, delta: float,
                       domain: Sequence[float] | Sequence[Sequence[float]], *,
                       eigenvalues: Sequence[float] | EigenvalueSet | None = None,
                       grid_points: int = 2001) -> MinMaxReport:
    """Check ``E0_j - C <= E_j <= E0_j + C`` with ``C = sup |W|`` over ``domain``.

    ``domain`` is ``(lo, hi)`` for every axis or one such pair per axis.
    """
    n = V.dimension
    dom = np.asarray(domain, dtype=float)
    if dom.ndim == 1:
        dom = np.tile(dom, (n, 1))
    axes = [np.linspace(lo, hi, grid_points if n == 1 else 301) for lo, hi in dom]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    harmonic = 0.5 * np.sum(np.asarray(V.frequencies) ** 2 * pts**2, axis=1)
    C = float(np.max(np.abs(V(pts) - harmonic))) if V.derivatives else 0.0
    if eigenvalues is None:
        eigenvalues = hermite_spectrum(V, hbar, delta)
    ev = np.sort(np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=float))
    ev = ev[ev <= delta]
    top = delta + C + hbar * sum(V.frequencies)
    ref = lattice_energies(V.frequencies, hbar, top)
    while len(ref) < len(ev):
        top *= 2
        ref = lattice_energies(V.frequencies, hbar, top)
    ref = ref[: len(ev)]
    violation = np.maximum(ref - C - ev, ev - ref - C)
    worst = float(np.max(violation)) if len(ev) else 0.0
    tol = 1e-9 * max(1.0, delta)
    return MinMaxReport(holds=worst <= tol, max_violation=max(worst, 0.0), bound=C, checked=len(ev))
