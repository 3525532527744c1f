"""Wave invariants ``a_j(t)`` assembled from stationary-phase coefficients.

``a_j(t) = a_0(t) sum_{l=1}^{2j} c_l int_{t > s_1 > ... > s_l > 0} P_{l+j} b_l(0) ds``

Two phase conventions are supported. ``PHYSICAL`` is the one that reproduces
the small-``hbar`` expansion of the actual trace ``sum_n exp(-i t E_n/hbar)``:
the operator carries ``i^(+m)`` and ``c_l = i^(-l)``. ``FORMAL`` keeps the
operator prefactor ``i^(-m)`` and ``c_l = i^(l(n-1)+n/2) exp(i pi sgn(H_l)/4)``
of the formal stationary-phase bookkeeping; it differs from ``PHYSICAL``
by the unit factor ``(-1)^(l+j) i^(-l n)`` in each ``l`` term. See :func:`convention_ratio`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import MultiIndex, TaylorPotential, mi_factorial, multi_indices_of_order
from .hessian import check_time, hessian_signature
from .oscillator import a0_values
from .symcalc import gram_blocks, gram_coefficient, stationary_phase_coefficient

__all__ = [
    "Convention",
    "WaveInvariantValue",
    "DEFAULT_ORDERS",
    "J_MAX",
    "simplex_nodes",
    "simplex_integrate",
    "l_prefactor",
    "convention_ratio",
    "wave_invariant",
    "wave_invariants",
    "wave_invariant_linear_term",
    "cubic_block_coefficient",
    "literal_l1_term",
    "quartic_closed_form",
    "CubicCalibration",
    "calibrate_linear_constant",
    "calibrate_cubic_constant",
    "sensitivity",
]

# Gauss points per simplex axis; the adaptive check doubles these
DEFAULT_ORDERS = {1: 24, 2: 20, 3: 16, 4: 14, 5: 8, 6: 6}
J_MAX = {1: 3, 2: 2}


class Convention(enum.Enum):
    PHYSICAL = "physical"
    FORMAL = "formal"


@dataclass(frozen=True)
class WaveInvariantValue:
    """``a_j(t)`` with its per-``l`` parts; ``value == sum(breakdown.values())``.

    Every ``breakdown[l]`` already includes the ``a_0(t)`` factor.
    """

    j: int
    t: float
    value: complex
    breakdown: dict[int, complex] = field(default_factory=dict)
    convention: Convention = Convention.PHYSICAL


def simplex_nodes(l: int, t: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes and weights on ``t >= s_1 >= ... >= s_l >= 0``.

    Uses the collapsed coordinates ``s_1 = t u_1``, ``s_i = s_{i-1} u_i`` with
    Gauss-Legendre in each ``u_i``. Returns ``(s, w)`` with ``s`` of shape ``(N, l)``.
    """
    if l < 1:
        raise ValueError("l must be at least 1")
    x, wx = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    wx = wx / 2
    grids = np.meshgrid(*([x] * l), indexing="ij")
    wgrids = np.meshgrid(*([wx] * l), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    s = np.empty_like(u)
    prev = np.full(len(u), float(t))
    jac = np.full(len(u), float(t))
    for i in range(l):
        s[:, i] = prev * u[:, i]
        if i < l - 1:
            jac = jac * s[:, i]
        prev = s[:, i]
    return s, w * jac


def simplex_integrate(f: Callable[[np.ndarray], np.ndarray], l: int, t: float, order: int = 24,
                      rtol: float = 1e-10, adaptive: bool = True, max_order: int = 96) -> complex:
    """Integrate ``f`` over the ordered simplex ``t >= s_1 >= ... >= s_l >= 0``.

    ``f`` receives an ``(N, l)`` array of points and returns ``N`` values. With
    ``adaptive`` the order is doubled until two successive results agree to
    ``rtol`` (relative, with an absolute floor of ``rtol`` times the simplex volume).
    """
    def at(p: int) -> complex:
        s, w = simplex_nodes(l, t, p)
        return complex(np.dot(w, np.asarray(f(s))))

    value = at(order)
    if not adaptive:
        return value
    scale = t**l / math.factorial(l)
    while True:
        order *= 2
        if order > max_order:
            raise RuntimeError(f"simplex quadrature did not converge to {rtol} by order {max_order}")
        new = at(order)
        if abs(new - value) <= rtol * max(abs(new), scale):
            return new
        value = new


def l_prefactor(l: int, omega: Sequence[float], t: float, convention: Convention) -> complex:
    """Unit prefactor of the ``l``-th term (excluding ``a_0``)."""
    n = len(omega)
    if convention is Convention.PHYSICAL:
        return 1j ** (-l % 4)
    sig = hessian_signature(l, omega, t)
    return 1j ** (l * (n - 1) % 4) * np.exp(1j * np.pi * n / 4) * np.exp(1j * np.pi * sig / 4)


def _operator_sign(convention: Convention) -> int:
    return 1 if convention is Convention.PHYSICAL else -1


def convention_ratio(l: int, j: int, n: int) -> complex:
    """PHYSICAL / FORMAL ratio of the ``l``-th term of ``a_j``: ``(-1)^(l+j) i^(-l n)``."""
    return (-1) ** (l + j) * 1j ** (-l * n % 4)


def _l_term(V: TaylorPotential, l: int, j: int, t: float, order: int, convention: Convention,
            check: bool) -> complex:
    m = l + j
    if 2 * m < 3 * l or not V.derivatives:
        return 0j
    omega = V.frequencies
    phase = 1j ** (_operator_sign(convention) * m % 4)

    def integrand(s: np.ndarray) -> np.ndarray:
        return gram_coefficient(V, l, m, gram_blocks(omega, l, t, s))

    integral = simplex_integrate(integrand, l, t, order=order, adaptive=check)
    return phase * l_prefactor(l, omega, t, convention) * integral


def wave_invariant(V: TaylorPotential, j: int, t: float, *,
                   convention: Convention | str = Convention.PHYSICAL,
                   ls: Iterable[int] | None = None, orders: dict[int, int] | None = None,
                   check: bool = False) -> WaveInvariantValue:
    """Compute ``a_j(t)`` for the potential ``V``.

    Args:
        V: Potential; its derivatives must be known to order ``2j+2``.
        j: Order of the invariant, ``j >= 1``.
        t: Time in ``(0, min pi/(2 omega_k))``.
        convention: Phase convention, see the module docstring.
        ls: Restrict the sum to these ``l`` (all of ``1..2j`` by default).
        orders: Gauss points per simplex axis for each ``l``.
        check: Run the adaptive order-doubling check on each simplex integral.
    """
    convention = Convention(convention)
    if j < 1:
        raise ValueError("j must be at least 1; a_0 lives in the oscillator module")
    n = V.dimension
    jmax = J_MAX.get(n, 2)
    if j > jmax:
        raise ValueError(f"j = {j} exceeds the supported maximum {jmax} for n = {n}")
    V.require_order(2 * j + 2, f"a_{j}")
    check_time(V.frequencies, t)
    orders = {**DEFAULT_ORDERS, **(orders or {})}
    wanted = range(1, 2 * j + 1) if ls is None else sorted(set(ls))
    base = complex(a0_values(V.frequencies, t))
    breakdown = {}
    for l in range(1, 2 * j + 1):
        if l in wanted:
            breakdown[l] = base * _l_term(V, l, j, t, orders.get(l, 8), convention, check)
    return WaveInvariantValue(j=j, t=float(t), value=complex(sum(breakdown.values())),
                              breakdown=breakdown, convention=convention)


def wave_invariants(V: TaylorPotential, j: int, ts: Sequence[float], **kwargs) -> np.ndarray:
    """``a_j`` on a grid of times."""
    return np.array([wave_invariant(V, j, t, **kwargs).value for t in ts])


def _cot_power(omega: np.ndarray, t: float, alpha: Sequence[int]) -> float:
    y = -1.0 / (2 * omega * np.tan(omega * t / 2))
    return float(np.prod(y ** np.asarray(alpha)))


def wave_invariant_linear_term(V: TaylorPotential, j: int, t: float, *,
                               convention: Convention | str = Convention.PHYSICAL,
                               with_axis_phase: bool = True) -> complex:
    """The part of ``a_j`` linear in the top-order derivatives ``D_{2 alpha}``, ``|alpha| = j+1``.

    In the ``FORMAL`` convention this is
    ``i^(n-1) a_0/(2i)^(j+1) sum t/alpha! (-cot(omega t/2)/(2 omega))^alpha D_{2 alpha}``;
    ``with_axis_phase=False`` drops the ``i^(n-1)``, which only matters for ``n > 1``.
    In the ``PHYSICAL`` convention the whole expression is multiplied by
    :func:`convention_ratio` at ``l = 1``.
    """
    convention = Convention(convention)
    V.require_order(2 * j + 2, f"a_{j}")
    w = check_time(V.frequencies, t)
    n = len(w)
    total = 0.0
    for alpha in multi_indices_of_order(n, j + 1):
        d = V.derivative(tuple(2 * a for a in alpha))
        if d:
            total += t / mi_factorial(alpha) * _cot_power(w, t, alpha) * d
    value = complex(a0_values(w, t)) / (2j) ** (j + 1) * total
    if with_axis_phase:
        value *= 1j ** ((n - 1) % 4)
    if convention is Convention.PHYSICAL:
        value *= convention_ratio(1, j, n)
    return value


def literal_l1_term(V: TaylorPotential, j: int, t: float, s: float, *,
                    convention: Convention | str = Convention.PHYSICAL) -> complex:
    """The ``l = 1`` part of ``a_j`` from the literal polynomial route at one ``s``.

    For even potentials the integrand does not depend on ``s`` and the result
    equals :func:`wave_invariant_linear_term`; no ``J_MAX`` limit applies.
    """
    convention = Convention(convention)
    w = check_time(V.frequencies, t)
    p = stationary_phase_coefficient(V, 1, j, t, [s], sign=_operator_sign(convention))
    return complex(a0_values(w, t)) * l_prefactor(1, w, t, convention) * t * p


def quartic_closed_form(b: float, t: float, omega: float = 1.0,
                        convention: Convention | str = Convention.PHYSICAL) -> complex:
    """``a_1`` of ``omega^2 x^2/2 + b x^4``: ``(3/4) b t cot^2(omega t/2)/omega^2 a_0``, up to phase.

    ``FORMAL`` gives ``-(3/4) b t ... a_0``; ``PHYSICAL`` multiplies by ``-i``.
    """
    value = -0.75 * b * t / omega**2 / np.tan(omega * t / 2) ** 2 * complex(a0_values([omega], t))
    if Convention(convention) is Convention.PHYSICAL:
        value *= convention_ratio(1, 1, 1)
    return value


def cubic_block_coefficient(j: int, alpha: Sequence[int], omega: Sequence[float], t: float,
                            c1: complex, c2: complex) -> complex:
    """Mixed second derivative of ``a_j`` in ``D_{2 alpha + 3 e_n}`` and ``D_{3 e_n}``, calibrated closed form.

    For distinct factors this is the coefficient of their product; at ``j = 1``
    the coefficient of ``D_{3 e_n}^2`` is half of it.

    ``c2/(2i)^(j+2) t/alpha! y^alpha (((2 alpha_n + 5)/(alpha_n + 1)) y_n^2/(3 omega_n^2) + 1/(9 omega_n^4))``
    with ``y = -cot(omega t/2)/(2 omega)``. The factor ``a_0(t)`` is included,
    matching the scale of :func:`wave_invariant`. ``c1`` is accepted for
    symmetry with the linear term and does not enter.
    """
    w = check_time(omega, t)
    alpha = tuple(alpha)
    if len(alpha) != len(w):
        raise ValueError("alpha must have one entry per frequency")
    if sum(alpha) != j - 1:
        raise ValueError(f"|alpha| must equal j - 1 = {j - 1}")
    wn = w[-1]
    an = alpha[-1]
    yn = -1.0 / (2 * wn * np.tan(wn * t / 2))
    bracket = (2 * an + 5) / (an + 1) * yn**2 / (3 * wn**2) + 1 / (9 * wn**4)
    value = c2 / (2j) ** (j + 2) * t / mi_factorial(alpha) * _cot_power(w, t, alpha) * bracket
    return complex(value * a0_values(w, t))


def sensitivity(V: TaylorPotential, j: int, t: float, keys: Sequence[MultiIndex], **kwargs) -> complex:
    """Exact coefficient of the monomial ``prod_{beta in keys} D_beta`` in ``a_j(t)``.

    ``a_j`` is a polynomial in the derivatives, so the coefficient is extracted
    by evaluating it on potentials that contain only the listed derivatives,
    set to 0 or 1, and combining them by inclusion-exclusion.
    """
    keys = list(dict.fromkeys(tuple(k) for k in keys))
    if len(keys) not in (1, 2):
        raise ValueError("only linear and bilinear sensitivities are supported")
    repeated = len(keys) == 1 and kwargs.pop("squared", False)
    ls = kwargs.pop("ls", None)

    def a(values: dict) -> complex:
        if not values:
            return 0j
        return wave_invariant(V.replace(derivatives=values), j, t, ls=ls, **kwargs).value

    if len(keys) == 1:
        (k,) = keys
        if repeated:
            # coefficient of D^2 given a_j is a sum of D and D^2 parts
            return (a({k: 2.0}) - 2 * a({k: 1.0})) / 2
        return a({k: 1.0})
    k1, k2 = keys
    return a({k1: 1.0, k2: 1.0}) - a({k1: 1.0}) - a({k2: 1.0})


@dataclass(frozen=True)
class CubicCalibration:
    """Result of fitting the closed-form coefficient of ``D_{2 alpha + 3 e_n} D_{3 e_n}``."""

    n: int
    j: int
    c2: complex
    residual: float
    alphas: tuple[MultiIndex, ...]
    convention: Convention


def _probe_potential(omega: Sequence[float], j: int) -> TaylorPotential:
    return TaylorPotential(tuple(omega), {}, truncation_order=2 * j + 2)


def calibrate_linear_constant(omega: Sequence[float], j: int, ts: Sequence[float],
                              convention: Convention | str = Convention.FORMAL) -> tuple[complex, float]:
    """Fit ``c1`` so that ``c1 a_0/(2i)^(j+1) t/alpha! y^alpha`` matches the engine's coefficient
    of every ``D_{2 alpha}`` with ``|alpha| = j+1``. Returns ``(c1, relative residual)``."""
    convention = Convention(convention)
    w = np.asarray(omega, dtype=float)
    V = _probe_potential(w, j)
    eng, form = [], []
    for alpha in multi_indices_of_order(len(w), j + 1):
        key = tuple(2 * a for a in alpha)
        for t in ts:
            eng.append(sensitivity(V, j, t, [key], ls=[1], convention=convention))
            form.append(complex(a0_values(w, t)) / (2j) ** (j + 1) * t / mi_factorial(alpha)
                        * _cot_power(w, t, alpha))
    eng, form = np.array(eng), np.array(form)
    c1 = complex(np.vdot(form, eng) / np.vdot(form, form))
    residual = float(np.linalg.norm(eng - c1 * form) / np.linalg.norm(eng))
    return c1, residual


def calibrate_cubic_constant(omega: Sequence[float], j: int, ts: Sequence[float],
                             convention: Convention | str = Convention.FORMAL) -> CubicCalibration:
    """Fit one ``c2`` for all ``|alpha| = j-1`` against engine sensitivities.

    The sensitivity is the mixed second derivative
    ``d^2 a_j / (d D_{2 alpha + 3 e_n} d D_{3 e_n})``; for ``alpha = 0`` at
    ``j = 1`` both factors are the cubic coefficient and this is twice the
    coefficient of its square. With this reading ``c2`` does not depend on ``j``.
    The residual is the relative least-squares misfit over all ``alpha`` and
    times; a large value means the closed form does not describe the engine.
    """
    convention = Convention(convention)
    w = np.asarray(omega, dtype=float)
    n = len(w)
    V = _probe_potential(w, j)
    cubic = (0,) * (n - 1) + (3,)
    alphas = tuple(multi_indices_of_order(n, j - 1))
    eng, form = [], []
    for alpha in alphas:
        key = tuple(2 * a for a in alpha[:-1]) + (2 * alpha[-1] + 3,)
        for t in ts:
            if key == cubic:
                # second derivative in D_{3 e_n}, i.e. twice the coefficient of its square
                eng.append(2 * sensitivity(V, j, t, [key], ls=[2], convention=convention, squared=True))
                form.append(cubic_block_coefficient(j, alpha, w, t, 0.0, 1.0))
            else:
                eng.append(sensitivity(V, j, t, [key, cubic], ls=[2], convention=convention))
                form.append(cubic_block_coefficient(j, alpha, w, t, 0.0, 1.0))
    eng, form = np.array(eng), np.array(form)
    c2 = complex(np.vdot(form, eng) / np.vdot(form, form))
    residual = float(np.linalg.norm(eng - c2 * form) / np.linalg.norm(eng))
    return CubicCalibration(n=n, j=j, c2=c2, residual=residual, alphas=alphas, convention=convention)
