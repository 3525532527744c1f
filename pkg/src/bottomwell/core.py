"""Multi-indices and the Taylor-coefficient model of a potential well.

A potential is stored as ``V(x) = 1/2 sum_k omega_k^2 x_k^2 + W(x)`` where the
anharmonic part ``W`` is kept as a table of derivative values ``D_beta V(0)``
for ``|beta| >= 3``. The factor ``1/beta!`` is only applied when the polynomial
is evaluated.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MultiIndex",
    "SymmetryClass",
    "TaylorPotential",
    "as_multi_index",
    "mi_norm",
    "mi_factorial",
    "mi_add",
    "multi_indices_of_order",
    "evaluate_potential",
    "load_potential",
    "save_potential",
]

MultiIndex = tuple[int, ...]


def as_multi_index(entries: Iterable[int], dimension: int | None = None) -> MultiIndex:
    """Validate ``entries`` and return them as a tuple of non-negative ints."""
    out = []
    for e in entries:
        if isinstance(e, bool) or int(e) != e:
            raise TypeError(f"multi-index entries must be integers, got {e!r}")
        if e < 0:
            raise ValueError(f"multi-index entries must be non-negative, got {e}")
        out.append(int(e))
    if not out:
        raise ValueError("a multi-index needs at least one entry")
    if dimension is not None and len(out) != dimension:
        raise ValueError(f"multi-index {tuple(out)} has length {len(out)}, expected {dimension}")
    return tuple(out)


def mi_norm(alpha: Sequence[int]) -> int:
    """Total degree ``|alpha|``."""
    return int(sum(as_multi_index(alpha)))


def mi_factorial(alpha: Sequence[int]) -> int:
    """``alpha! = alpha_1! ... alpha_n!`` as an exact Python integer."""
    out = 1
    for a in as_multi_index(alpha):
        out *= math.factorial(a)
    return out


def mi_add(alpha: Sequence[int], beta: Sequence[int]) -> MultiIndex:
    if len(alpha) != len(beta):
        raise ValueError("multi-indices of different length")
    return tuple(a + b for a, b in zip(alpha, beta))


def multi_indices_of_order(n: int, order: int) -> list[MultiIndex]:
    """All length-``n`` multi-indices of total degree ``order``, lexicographically descending."""
    if n == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        for rest in multi_indices_of_order(n - 1, order - first):
            out.append((first,) + rest)
    return out


class SymmetryClass(enum.Enum):
    """Structural constraint on which derivatives may be non-zero."""

    GENERAL = "general"
    EVEN = "even"
    EVEN_PLUS_CUBIC = "even-plus-cubic"

    def admits(self, beta: MultiIndex) -> bool:
        if self is SymmetryClass.GENERAL:
            return True
        if self is SymmetryClass.EVEN:
            return all(b % 2 == 0 for b in beta)
        # f(x_1^2..x_n^2) + x_n^3 g(x_1^2..x_n^2)
        head_even = all(b % 2 == 0 for b in beta[:-1])
        last = beta[-1]
        return head_even and (last % 2 == 0 or last >= 3)


def _commensurability_warning(frequencies: Sequence[float], max_denominator: int = 50,
                              rtol: float = 1e-9) -> None:
    for i in range(len(frequencies)):
        for j in range(i + 1, len(frequencies)):
            ratio = frequencies[i] / frequencies[j]
            approx = Fraction(ratio).limit_denominator(max_denominator)
            if abs(float(approx) - ratio) <= rtol * abs(ratio):
                warnings.warn(
                    f"frequencies {i} and {j} look rationally dependent "
                    f"(ratio ~ {approx}); inversion assumes independent frequencies",
                    stacklevel=3,
                )


@dataclass(frozen=True)
class TaylorPotential:
    """Harmonic frequencies plus Taylor derivatives of the anharmonic part.

    Attributes:
        frequencies: The ``omega_k > 0``.
        derivatives: Map from multi-index ``beta`` with ``|beta| >= 3`` to ``D_beta V(0)``.
        truncation_order: Highest derivative order known. ``None`` means the
            stored polynomial is the exact potential, so every higher derivative
            is zero.
        symmetry: Structural class; stored keys are checked against it.
    """

    frequencies: tuple[float, ...]
    derivatives: Mapping[MultiIndex, float] = field(default_factory=dict)
    truncation_order: int | None = None
    symmetry: SymmetryClass = SymmetryClass.GENERAL

    def __post_init__(self) -> None:
        freqs = tuple(float(w) for w in np.atleast_1d(self.frequencies))
        if not freqs:
            raise ValueError("at least one frequency is required")
        if not all(np.isfinite(w) and w > 0 for w in freqs):
            raise ValueError(f"frequencies must be positive and finite, got {freqs}")
        n = len(freqs)
        derivs = {}
        for key, value in dict(self.derivatives).items():
            beta = as_multi_index(key, n)
            if sum(beta) < 3:
                raise ValueError(f"derivative {beta} has order < 3; the quadratic part is fixed by the frequencies")
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"derivative {beta} is not finite")
            if value != 0.0:
                derivs[beta] = value
        symmetry = SymmetryClass(self.symmetry)
        for beta in derivs:
            if not symmetry.admits(beta):
                raise ValueError(f"derivative {beta} is incompatible with symmetry class '{symmetry.value}'")
        order = self.truncation_order
        if order is not None:
            order = int(order)
            top = max((sum(b) for b in derivs), default=2)
            if order < top:
                raise ValueError(f"truncation_order {order} is below the stored derivative order {top}")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "derivatives", MappingProxyType(dict(sorted(derivs.items()))))
        object.__setattr__(self, "truncation_order", order)
        object.__setattr__(self, "symmetry", symmetry)
        if n > 1:
            _commensurability_warning(freqs)

    @property
    def dimension(self) -> int:
        return len(self.frequencies)

    @property
    def max_stored_order(self) -> int:
        return max((sum(b) for b in self.derivatives), default=2)

    def derivative(self, beta: Sequence[int]) -> float:
        return self.derivatives.get(tuple(beta), 0.0)

    def require_order(self, order: int, what: str = "this computation") -> None:
        """Raise if derivatives up to ``order`` are not all known."""
        if self.truncation_order is not None and self.truncation_order < order:
            raise ValueError(
                f"{what} needs Taylor derivatives up to order {order}, "
                f"but the potential is only known to order {self.truncation_order}"
            )

    def terms_of_order(self, order: int) -> dict[MultiIndex, float]:
        return {b: v for b, v in self.derivatives.items() if sum(b) == order}

    def replace(self, **changes) -> TaylorPotential:
        kwargs = dict(frequencies=self.frequencies, derivatives=self.derivatives,
                      truncation_order=self.truncation_order, symmetry=self.symmetry)
        kwargs.update(changes)
        return TaylorPotential(**kwargs)

    def with_derivatives(self, updates: Mapping[Sequence[int], float]) -> TaylorPotential:
        derivs = dict(self.derivatives)
        derivs.update({tuple(k): v for k, v in updates.items()})
        return self.replace(derivatives=derivs)

    def scaled(self, lam: float) -> TaylorPotential:
        """Same frequencies, anharmonic part multiplied by ``lam``."""
        return self.replace(derivatives={b: lam * v for b, v in self.derivatives.items()})

    def truncated(self, order: int) -> TaylorPotential:
        """Drop derivatives above ``order`` and mark the result as known to ``order``."""
        return self.replace(derivatives={b: v for b, v in self.derivatives.items() if sum(b) <= order},
                            truncation_order=order)

    def monomial_coefficients(self) -> dict[MultiIndex, float]:
        """Coefficients of ``x^beta`` in ``W``."""
        return {b: v / mi_factorial(b) for b, v in self.derivatives.items()}

    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "frequencies": list(self.frequencies),
            "derivatives": [{"index": list(b), "value": v} for b, v in self.derivatives.items()],
            "symmetry": self.symmetry.value,
        }
        if self.truncation_order is not None:
            out["truncation_order"] = self.truncation_order
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> TaylorPotential:
        try:
            n = int(data["dimension"])
            freqs = data["frequencies"]
        except KeyError as exc:
            raise ValueError(f"potential description is missing field {exc}") from None
        if len(freqs) != n:
            raise ValueError(f"dimension {n} does not match {len(freqs)} frequencies")
        derivs: dict[MultiIndex, float] = {}
        for entry in data.get("derivatives", []):
            beta = as_multi_index(entry["index"], n)
            if beta in derivs:
                raise ValueError(f"derivative {beta} listed twice")
            derivs[beta] = float(entry["value"])
        return cls(
            frequencies=tuple(freqs),
            derivatives=derivs,
            truncation_order=data.get("truncation_order"),
            symmetry=SymmetryClass(data.get("symmetry", "general")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> TaylorPotential:
        return cls.from_dict(json.loads(text))

    def __call__(self, x) -> np.ndarray:
        return evaluate_potential(self, x)


def evaluate_potential(V: TaylorPotential, x) -> np.ndarray | float:
    """Evaluate the Taylor polynomial at ``x``.

    ``x`` may be a vector of length ``n`` or an array whose last axis has
    length ``n``; for ``n = 1`` a plain scalar or 1-d array of points is also
    accepted.
    """
    x = np.asarray(x, dtype=float)
    n = V.dimension
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise ValueError(f"point has dimension {x.shape[-1]}, potential has dimension {n}")
    omega = np.asarray(V.frequencies)
    out = 0.5 * np.sum(omega**2 * x**2, axis=-1)
    for beta, coef in V.monomial_coefficients().items():
        term = np.full(out.shape, coef)
        for k, b in enumerate(beta):
            if b:
                term = term * x[..., k] ** b
        out = out + term
    return float(out) if out.ndim == 0 else out


def load_potential(path: str | Path) -> TaylorPotential:
    return TaylorPotential.from_json(Path(path).read_text())


def save_potential(V: TaylorPotential, path: str | Path) -> None:
    Path(path).write_text(V.to_json() + "\n")
