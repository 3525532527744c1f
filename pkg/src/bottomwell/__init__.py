"""Semiclassical wave invariants at the bottom of a potential well.

Forward: the coefficients ``a_j(t)`` of the small-``hbar`` expansion of the
truncated trace ``Tr Theta(P) exp(-i t P/hbar)`` for a Schroedinger operator
whose potential has a non-degenerate minimum at the origin. Backward: Taylor
coefficients of the potential from those coefficients.
"""

__version__ = "0.1.0"

from .core import SymmetryClass, TaylorPotential, load_potential, save_potential
from .invariants import Convention, WaveInvariantValue, wave_invariant, wave_invariants
from .inverse import RecoveryError, RecoveryReport, RecoverySettings, end_to_end_1d
from .oscillator import a0, osc_spectrum
from .spectral import EigenvalueSet, hermite_spectrum, fd_spectrum
from .trace import CutoffFunction, TraceTable, extract_invariants, hbar_sweep

__all__ = [
    "__version__",
    "SymmetryClass",
    "TaylorPotential",
    "load_potential",
    "save_potential",
    "Convention",
    "WaveInvariantValue",
    "wave_invariant",
    "wave_invariants",
    "RecoveryError",
    "RecoveryReport",
    "RecoverySettings",
    "end_to_end_1d",
    "a0",
    "osc_spectrum",
    "EigenvalueSet",
    "hermite_spectrum",
    "fd_spectrum",
    "CutoffFunction",
    "TraceTable",
    "extract_invariants",
    "hbar_sweep",
]
