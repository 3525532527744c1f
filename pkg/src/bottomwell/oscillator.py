"""The anisotropic harmonic oscillator: lattice spectrum, trace and Mehler kernel."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import MultiIndex

__all__ = [
    "OscillatorLevel",
    "osc_spectrum",
    "lattice_energies",
    "a0",
    "a0_values",
    "max_time",
    "mehler_kernel",
]


@dataclass(frozen=True)
class OscillatorLevel:
    gamma: MultiIndex
    energy: float


def _frequencies(omega) -> np.ndarray:
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    if w.ndim != 1 or not np.all(w > 0):
        raise ValueError(f"frequencies must be a list of positive numbers, got {omega!r}")
    return w


def max_time(omega: Sequence[float]) -> float:
    """Upper end ``min_k pi/(2 omega_k)`` of the interval where the invariants are defined."""
    return float(np.pi / (2 * _frequencies(omega).max()))


def _lattice(omega: np.ndarray, hbar: float, cutoff: float) -> tuple[np.ndarray, np.ndarray]:
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    bounds = [int(math.ceil(cutoff / (hbar * w))) for w in omega]
    energies = np.zeros(1)
    gammas = np.zeros((1, 0), dtype=np.int64)
    for w, nmax in zip(omega, bounds):
        occ = np.arange(nmax + 1)
        axis_e = hbar * w * (occ + 0.5)
        e = (energies[:, None] + axis_e[None, :]).ravel()
        g = np.concatenate([np.repeat(gammas, len(occ), axis=0),
                            np.tile(occ, len(gammas))[:, None]], axis=1)
        # levels on the cutoff count, despite rounding in hbar*omega*(k+1/2)
        keep = e <= cutoff * (1 + 1e-12)
        energies, gammas = e[keep], g[keep]
    order = np.lexsort((*gammas.T[::-1], energies))
    return energies[order], gammas[order]


def lattice_energies(omega: Sequence[float], hbar: float, cutoff: float) -> np.ndarray:
    """Sorted array of ``hbar * sum_k omega_k (gamma_k + 1/2)`` up to ``cutoff``."""
    w = _frequencies(omega)
    return _lattice(w, hbar, cutoff)[0]


def osc_spectrum(omega: Sequence[float], hbar: float, energy_cutoff: float) -> list[OscillatorLevel]:
    """All oscillator levels with energy at most ``energy_cutoff``, ascending."""
    w = _frequencies(omega)
    ground = hbar * w.sum() / 2
    if energy_cutoff < ground:
        warnings.warn(f"cutoff {energy_cutoff} is below the ground level {ground}", stacklevel=2)
        return []
    energies, gammas = _lattice(w, hbar, energy_cutoff)
    return [OscillatorLevel(tuple(int(g) for g in gam), float(hbar * np.dot(w, gam + 0.5)))
            for gam in gammas]


def a0_values(omega: Sequence[float], t) -> np.ndarray:
    """``prod_k 1/(2i sin(omega_k t/2))`` for real or complex ``t`` without domain checks."""
    w = _frequencies(omega)
    t = np.asarray(t)
    out = np.ones(t.shape, dtype=complex)
    for wk in w:
        out = out / (2j * np.sin(wk * t / 2))
    return out


def a0(omega: Sequence[float], t) -> complex | np.ndarray:
    """Leading wave invariant, the oscillator trace ``prod_k 1/(2i sin(omega_k t/2))``.

    Defined for ``0 < t < min_k pi/(2 omega_k)``.
    """
    w = _frequencies(omega)
    tt = np.asarray(t, dtype=float)
    if np.any(tt <= 0):
        raise ValueError("t must be positive")
    for k, wk in enumerate(w):
        if np.any(tt >= np.pi / (2 * wk)):
            raise ValueError(f"t exceeds pi/(2 omega_{k}) = {np.pi / (2 * wk):.6g} for frequency {k}")
    out = a0_values(w, tt)
    return complex(out) if out.ndim == 0 else out


def mehler_kernel(omega: Sequence[float], hbar: float, t, x, y) -> complex:
    """Oscillator propagator kernel ``<x| exp(-i t H0/hbar) |y>``.

    The square root of each axis factor is continued from ``t -> 0+`` along
    real time, which picks up a Maslov phase ``exp(-i pi/2)`` at each focal
    time ``m pi / omega_k``. Complex ``t`` with small imaginary part is
    accepted; then the principal branch is used.
    """
    w = _frequencies(omega)
    x = np.atleast_1d(np.asarray(x))
    y = np.atleast_1d(np.asarray(y))
    if x.shape[-1] != len(w) or y.shape[-1] != len(w):
        raise ValueError("x and y must have one entry per frequency")
    out = 1.0 + 0j
    for k, wk in enumerate(w):
        s = np.sin(wk * t)
        if np.any(np.abs(s) < 1e-14):
            raise ValueError(f"kernel is singular at t = m pi/omega_{k}")
        c = np.cos(wk * t)
        action = wk * (0.5 * c * (x[..., k] ** 2 + y[..., k] ** 2) - x[..., k] * y[..., k]) / s
        if np.iscomplexobj(t) or np.iscomplexobj(s):
            amp = np.sqrt(wk / (2j * np.pi * hbar * s))
        else:
            focal = np.floor(wk * t / np.pi)
            amp = np.sqrt(wk / (2 * np.pi * hbar * np.abs(s))) * np.exp(-1j * np.pi / 4 - 1j * np.pi / 2 * focal)
        out = out * amp * np.exp(1j * action / hbar)
    return out
