"""Hessian of the stationary-phase function at the origin, with closed-form inverse.

Variables are ordered ``(x | z_1 .. z_l | xi_1 .. xi_l)`` and inside each block
by axis ``k = 0 .. n-1``. :class:`VariableLayout` is the single source of this
ordering; the polynomial engine uses it too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "VariableLayout",
    "HessianData",
    "check_time",
    "build_hessian",
    "invert_hessian",
    "hessian_det",
    "hessian_signature",
    "hessian_data",
    "phase_function",
    "finite_difference_hessian",
    "hessian_report",
]


@dataclass(frozen=True)
class VariableLayout:
    """Index map for the ``(2l+1)n`` stationary-phase variables.

    Block indices ``i`` run from 1 to ``l``; axis indices ``k`` from 0 to ``n-1``.
    """

    l: int
    n: int

    def __post_init__(self) -> None:
        if self.l < 1 or self.n < 1:
            raise ValueError("need l >= 1 and n >= 1")

    @property
    def size(self) -> int:
        return (2 * self.l + 1) * self.n

    def x(self, k: int) -> int:
        return k

    def z(self, i: int, k: int) -> int:
        if not 1 <= i <= self.l:
            raise IndexError(f"z block {i} out of range 1..{self.l}")
        return self.n * i + k

    def xi(self, i: int, k: int) -> int:
        if not 1 <= i <= self.l:
            raise IndexError(f"xi block {i} out of range 1..{self.l}")
        return self.n * (self.l + i) + k

    def axis_indices(self, k: int) -> np.ndarray:
        """Indices of the ``2l+1`` variables belonging to axis ``k``, in block order."""
        return np.array([self.x(k)] + [self.z(i, k) for i in range(1, self.l + 1)]
                        + [self.xi(i, k) for i in range(1, self.l + 1)])

    def labels(self) -> list[str]:
        out = [f"x{k}" for k in range(self.n)]
        out += [f"z{i}_{k}" for i in range(1, self.l + 1) for k in range(self.n)]
        out += [f"xi{i}_{k}" for i in range(1, self.l + 1) for k in range(self.n)]
        return out


def check_time(omega: Sequence[float], t: float) -> np.ndarray:
    """Validate ``0 < t < min pi/(2 omega_k)`` and return the frequencies as an array."""
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if not np.all(w > 0):
        raise ValueError("frequencies must be positive")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    for k, wk in enumerate(w):
        if t >= np.pi / (2 * wk):
            raise ValueError(f"t = {t} is outside (0, pi/(2 omega_{k})) = (0, {np.pi / (2 * wk):.6g})")
    return w


def _axis_hessian(l: int, w: float, t: float) -> np.ndarray:
    m = 2 * l + 1
    h = np.zeros((m, m))
    h[0, 0] = -2 * w * np.tan(w * t / 2)
    h[1, 1] = w / np.tan(w * t)
    for i in range(1, l + 1):
        zi, xii = i, l + i
        h[zi, xii] = h[xii, zi] = -1.0
        if i < l:
            h[zi + 1, xii] = h[xii, zi + 1] = 1.0
    return h


def _axis_inverse(l: int, w: float, t: float) -> np.ndarray:
    m = 2 * l + 1
    g = np.zeros((m, m))
    g[0, 0] = -1 / (2 * w * np.tan(w * t / 2))
    big_omega = w / np.tan(w * t)
    for i in range(1, l + 1):
        for ip in range(1, l + 1):
            if i <= ip:
                g[i, l + ip] = -1.0
            if i >= ip:
                g[l + i, ip] = -1.0
            g[l + i, l + ip] = -big_omega
    return g


def _assemble(l: int, w: np.ndarray, t: float, axis_fn) -> np.ndarray:
    layout = VariableLayout(l, len(w))
    out = np.zeros((layout.size, layout.size))
    for k, wk in enumerate(w):
        idx = layout.axis_indices(k)
        out[np.ix_(idx, idx)] = axis_fn(l, wk, t)
    return out


def build_hessian(l: int, omega: Sequence[float], t: float) -> np.ndarray:
    """Hessian ``H_l`` of the phase at the origin."""
    w = check_time(omega, t)
    return _assemble(l, w, t, _axis_hessian)


def invert_hessian(l: int, omega: Sequence[float], t: float) -> np.ndarray:
    """Closed-form inverse of :func:`build_hessian`.

    Per axis: ``-cot(omega t/2)/(2 omega)`` on ``x``; ``-1`` on ``(z_i, xi_i')``
    for ``i <= i'`` and on ``(xi_i, z_i')`` for ``i >= i'``; ``-omega cot(omega t)``
    on every ``(xi_i, xi_i')``; zero on the ``z`` block.
    """
    w = check_time(omega, t)
    return _assemble(l, w, t, _axis_inverse)


def hessian_det(l: int, omega: Sequence[float], t: float) -> float:
    """``(-1)^((l+1)n) prod_k 2 omega_k tan(omega_k t/2)``."""
    w = check_time(omega, t)
    n = len(w)
    return float((-1) ** ((l + 1) * n) * np.prod(2 * w * np.tan(w * t / 2)))


def hessian_signature(l: int, omega: Sequence[float], t: float, tol: float = 1e-10) -> int:
    """Number of positive minus number of negative eigenvalues of ``H_l``."""
    ev = np.linalg.eigvalsh(build_hessian(l, omega, t))
    if np.min(np.abs(ev)) < tol:
        raise ValueError(f"Hessian is degenerate at t = {t} (eigenvalue {np.min(np.abs(ev)):.3g})")
    return int(np.sum(ev > 0) - np.sum(ev < 0))


@dataclass(frozen=True)
class HessianData:
    l: int
    n: int
    t: float
    omega: tuple[float, ...]
    matrix: np.ndarray
    inverse: np.ndarray
    det: float
    signature: int

    @property
    def layout(self) -> VariableLayout:
        return VariableLayout(self.l, self.n)

    def identity_residual(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.inverse - np.eye(len(self.matrix)))))

    def det_residual(self) -> float:
        return float(abs(np.linalg.det(self.matrix) - self.det) / abs(self.det))


def hessian_data(l: int, omega: Sequence[float], t: float) -> HessianData:
    w = check_time(omega, t)
    return HessianData(
        l=l, n=len(w), t=float(t), omega=tuple(w),
        matrix=build_hessian(l, w, t),
        inverse=invert_hessian(l, w, t),
        det=hessian_det(l, w, t),
        signature=hessian_signature(l, w, t),
    )


def phase_function(l: int, omega: Sequence[float], t: float, v: np.ndarray) -> float:
    """Direct evaluation of the phase at a point ``v`` of the stationary-phase variables.

    Sum of the oscillator action ``S(t, x, x)`` and the coupling
    ``omega/2 cot(omega t) z_1^2 + sum_i (z_{i+1} - z_i) xi_i`` with ``z_{l+1} = 0``,
    written out term by term as an independent check on :func:`build_hessian`.
    """
    w = check_time(omega, t)
    layout = VariableLayout(l, len(w))
    total = 0.0
    for k, wk in enumerate(w):
        x = v[layout.x(k)]
        z = [v[layout.z(i, k)] for i in range(1, l + 1)] + [0.0]
        xi = [v[layout.xi(i, k)] for i in range(1, l + 1)]
        # oscillator action on the diagonal x = y
        total += wk / np.sin(wk * t) * (np.cos(wk * t) * x * x - x * x)
        total += 0.5 * wk / np.tan(wk * t) * z[0] ** 2
        for i in range(l):
            total -= (z[i] - z[i + 1]) * xi[i]
    return float(total)


def finite_difference_hessian(func, size: int, step: float = 1e-3) -> np.ndarray:
    """Central second differences of ``func`` at the origin."""
    h = np.zeros((size, size))
    e = np.eye(size) * step
    f0 = func(np.zeros(size))
    for r in range(size):
        for c in range(r, size):
            if r == c:
                val = (func(e[r]) - 2 * f0 + func(-e[r])) / step**2
            else:
                val = (func(e[r] + e[c]) - func(e[r] - e[c]) - func(-e[r] + e[c]) + func(-e[r] - e[c])) / (4 * step**2)
            h[r, c] = h[c, r] = val
    return h


def hessian_report(l: int, omega: Sequence[float], t: float, step: float = 1e-3) -> dict[str, float]:
    """Residuals of the closed forms at one ``(l, omega, t)``.

    ``identity``: max entry of ``H H^-1 - I``; ``det``: relative determinant
    error; ``finite_difference``: max deviation from the numerical Hessian of
    :func:`phase_function`, relative to ``max |H|``; ``signature``: the signature.
    """
    data = hessian_data(l, omega, t)
    fd = finite_difference_hessian(lambda v: phase_function(l, omega, t, v), len(data.matrix), step)
    scale = float(np.max(np.abs(data.matrix)))
    return {
        "identity": data.identity_residual(),
        "det": data.det_residual(),
        "finite_difference": float(np.max(np.abs(fd - data.matrix)) / scale),
        "signature": data.signature,
    }
