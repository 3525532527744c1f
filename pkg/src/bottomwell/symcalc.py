"""Truncated multivariate polynomials and the stationary-phase coefficients built from them.

Two routes compute the same number ``P_m b_l(0)``:

* the literal route expands ``b_l`` as a :class:`TruncatedPolynomial` in all
  ``(2l+1)n`` variables and applies the operator ``<A grad, grad>`` ``m`` times;
* the Gram route notices that ``b_l`` only depends on the ``l*n`` linear forms,
  so the operator pulls back to the small matrix ``G = L A L^T`` and the result
  is a Gaussian moment, evaluated in closed form and vectorised over many
  simplex points at once.

The literal route is the reference; the Gram route is what the integrator uses.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import MultiIndex, TaylorPotential, mi_factorial
from .hessian import VariableLayout, check_time, invert_hessian

__all__ = [
    "TruncatedPolynomial",
    "LinearFormSet",
    "poly_mul",
    "linear_forms",
    "compose_taylor_with_linear",
    "expand_bl",
    "apply_quadratic_operator",
    "stationary_phase_coefficient",
    "operator_phase",
    "gram_blocks",
    "gaussian_moment_terms",
    "derivative_tuples",
    "trig_identity_residual",
    "gram_coefficient",
]

Terms = dict[tuple[int, ...], complex]


@dataclass(frozen=True)
class TruncatedPolynomial:
    """Sparse polynomial in ``num_vars`` variables with all terms of degree ``<= max_degree``."""

    num_vars: int
    max_degree: int
    terms: Mapping[tuple[int, ...], float | complex]

    def __post_init__(self) -> None:
        clean = {}
        for key, c in self.terms.items():
            key = tuple(int(e) for e in key)
            if len(key) != self.num_vars:
                raise ValueError(f"exponent {key} does not have {self.num_vars} entries")
            if sum(key) > self.max_degree:
                continue
            if c != 0:
                clean[key] = clean.get(key, 0) + c
        object.__setattr__(self, "terms", {k: v for k, v in clean.items() if v != 0})

    @classmethod
    def constant(cls, value, num_vars: int, max_degree: int) -> TruncatedPolynomial:
        return cls(num_vars, max_degree, {(0,) * num_vars: value})

    @classmethod
    def linear(cls, coefficients: Sequence[float], max_degree: int) -> TruncatedPolynomial:
        nv = len(coefficients)
        terms = {}
        for r, c in enumerate(coefficients):
            if c != 0:
                e = [0] * nv
                e[r] = 1
                terms[tuple(e)] = c
        return cls(nv, max_degree, terms)

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def homogeneous_part(self, d: int) -> TruncatedPolynomial:
        return TruncatedPolynomial(self.num_vars, self.max_degree,
                                   {k: v for k, v in self.terms.items() if sum(k) == d})

    def constant_term(self):
        return self.terms.get((0,) * self.num_vars, 0.0)

    def derivative(self, r: int) -> TruncatedPolynomial:
        out: Terms = {}
        for key, c in self.terms.items():
            if key[r]:
                new = list(key)
                new[r] -= 1
                out[tuple(new)] = out.get(tuple(new), 0) + c * key[r]
        return TruncatedPolynomial(self.num_vars, self.max_degree, out)

    def evaluate(self, point: Sequence[float]):
        point = np.asarray(point)
        return sum(c * np.prod(point ** np.array(k)) for k, c in self.terms.items())

    def __add__(self, other: TruncatedPolynomial) -> TruncatedPolynomial:
        _check_vars(self, other)
        out: Terms = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return TruncatedPolynomial(self.num_vars, min(self.max_degree, other.max_degree), out)

    def __mul__(self, other):
        if isinstance(other, TruncatedPolynomial):
            return poly_mul(self, other)
        return TruncatedPolynomial(self.num_vars, self.max_degree,
                                   {k: v * other for k, v in self.terms.items()})

    __rmul__ = __mul__


def _check_vars(p: TruncatedPolynomial, q: TruncatedPolynomial) -> None:
    if p.num_vars != q.num_vars:
        raise ValueError(f"polynomials have {p.num_vars} and {q.num_vars} variables")


def poly_mul(p: TruncatedPolynomial, q: TruncatedPolynomial,
             degree_bound: int | None = None) -> TruncatedPolynomial:
    """Product of ``p`` and ``q`` with every term above the degree bound discarded.

    Without ``degree_bound`` the smaller of the operands' ``max_degree`` is used.
    """
    _check_vars(p, q)
    bound = min(p.max_degree, q.max_degree) if degree_bound is None else degree_bound
    out: Terms = {}
    qitems = [(k, sum(k), v) for k, v in q.terms.items()]
    for kp, vp in p.terms.items():
        dp = sum(kp)
        if dp > bound:
            continue
        for kq, dq, vq in qitems:
            if dp + dq > bound:
                continue
            key = tuple(a + b for a, b in zip(kp, kq))
            out[key] = out.get(key, 0) + vp * vq
    return TruncatedPolynomial(p.num_vars, bound, out)


@dataclass(frozen=True)
class LinearFormSet:
    """Coefficients of the arguments ``L_i^k`` of the ``i``-th copy of ``W``.

    ``coefficients[i-1, k]`` is a vector over the ``(2l+1)n`` variables in
    :class:`VariableLayout` order.
    """

    layout: VariableLayout
    t: float
    s: tuple[float, ...]
    coefficients: np.ndarray

    def form(self, i: int, k: int) -> np.ndarray:
        return self.coefficients[i - 1, k]


def _check_simplex(s: Sequence[float], t: float) -> None:
    prev = t
    for si in s:
        if si > prev + 1e-15 or si < 0:
            raise ValueError(f"times {tuple(s)} are not ordered t >= s_1 >= ... >= s_l >= 0")
        prev = si


def linear_forms(omega: Sequence[float], l: int, t: float, s: Sequence[float]) -> LinearFormSet:
    """``L_i^k = cos(w s_i)/2 (z_i + z_{i+1}) - sin(w s_i)/w xi_i + c_x x`` with ``z_{l+1} = 0``
    and ``c_x = (sin w(t-s_i) + sin w s_i)/sin w t``."""
    w = check_time(omega, t)
    if len(s) != l:
        raise ValueError(f"need {l} times, got {len(s)}")
    _check_simplex(s, t)
    layout = VariableLayout(l, len(w))
    coef = np.zeros((l, len(w), layout.size))
    for i in range(1, l + 1):
        si = s[i - 1]
        for k, wk in enumerate(w):
            c = coef[i - 1, k]
            c[layout.x(k)] = (np.sin(wk * (t - si)) + np.sin(wk * si)) / np.sin(wk * t)
            c[layout.z(i, k)] = np.cos(wk * si) / 2
            if i < l:
                c[layout.z(i + 1, k)] = np.cos(wk * si) / 2
            c[layout.xi(i, k)] = -np.sin(wk * si) / wk
    return LinearFormSet(layout, float(t), tuple(float(x) for x in s), coef)


def compose_taylor_with_linear(W: TaylorPotential, L: np.ndarray, num_vars: int,
                               degree_bound: int) -> TruncatedPolynomial:
    """``sum_beta D_beta W(0)/beta! prod_k (L^k)^beta_k`` truncated at ``degree_bound``.

    ``L`` has one row per axis holding the coefficients of ``L^k``.
    """
    L = np.asarray(L)
    if L.shape != (W.dimension, num_vars):
        raise ValueError(f"linear forms have shape {L.shape}, expected {(W.dimension, num_vars)}")
    W.require_order(degree_bound, "composition with linear forms")
    powers = []
    for k in range(W.dimension):
        lin = TruncatedPolynomial.linear(L[k], degree_bound)
        pk = [TruncatedPolynomial.constant(1.0, num_vars, degree_bound)]
        for _ in range(degree_bound):
            pk.append(poly_mul(pk[-1], lin, degree_bound))
        powers.append(pk)
    out = TruncatedPolynomial(num_vars, degree_bound, {})
    for beta, value in W.derivatives.items():
        if sum(beta) > degree_bound:
            continue
        term = TruncatedPolynomial.constant(value / mi_factorial(beta), num_vars, degree_bound)
        for k, b in enumerate(beta):
            if b:
                term = poly_mul(term, powers[k][b], degree_bound)
        out = out + term
    return out


def expand_bl(V: TaylorPotential, l: int, t: float, s: Sequence[float],
              degree_bound: int) -> TruncatedPolynomial:
    """Product over ``i`` of ``W(L_i)`` as a polynomial in the stationary-phase variables."""
    forms = linear_forms(V.frequencies, l, t, s)
    nv = forms.layout.size
    # each other factor carries at least three powers, so one factor never needs more
    per_factor = degree_bound - 3 * (l - 1)
    if per_factor < 3:
        return TruncatedPolynomial(nv, degree_bound, {})
    out = TruncatedPolynomial.constant(1.0, nv, degree_bound)
    for i in range(1, l + 1):
        factor = compose_taylor_with_linear(V, forms.coefficients[i - 1], nv, per_factor)
        out = poly_mul(out, factor, degree_bound)
    return out


def operator_phase(m: int, sign: int = -1) -> complex:
    """``i^(sign*m) / (2^m m!)``."""
    return (1j ** (sign * m % 4)) / (2**m * math.factorial(m))


def apply_quadratic_operator(p: TruncatedPolynomial, A: np.ndarray, m: int, sign: int = -1) -> complex:
    """``i^(sign m)/(2^m m!) <A grad, grad>^m p`` evaluated at the origin.

    With the default ``sign=-1`` the prefactor is ``i^-m / (2^m m!)``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (p.num_vars, p.num_vars):
        raise ValueError(f"matrix has shape {A.shape}, polynomial has {p.num_vars} variables")
    if m < 0:
        raise ValueError("m must be non-negative")
    sym = (A + A.T) / 2
    pairs = [(r, c, sym[r, c] * (1 if r == c else 2))
             for r in range(p.num_vars) for c in range(r, p.num_vars) if sym[r, c] != 0]
    q: Terms = {k: v for k, v in p.terms.items() if sum(k) == 2 * m}
    for _ in range(m):
        nxt: Terms = {}
        for key, coef in q.items():
            for r, c, a in pairs:
                if r == c:
                    if key[r] < 2:
                        continue
                    f = key[r] * (key[r] - 1)
                    new = list(key)
                    new[r] -= 2
                else:
                    if not key[r] or not key[c]:
                        continue
                    f = key[r] * key[c]
                    new = list(key)
                    new[r] -= 1
                    new[c] -= 1
                new = tuple(new)
                nxt[new] = nxt.get(new, 0) + a * f * coef
        q = nxt
    value = q.get((0,) * p.num_vars, 0.0)
    return complex(value * operator_phase(m, sign))


def stationary_phase_coefficient(V: TaylorPotential, l: int, j: int, t: float,
                                 s: Sequence[float], sign: int = -1) -> complex:
    """``P_{l+j} b_l(0)`` by literal expansion, with operator prefactor ``i^(sign m)``."""
    V.require_order(2 * j + 2, f"a_{j}")
    m = l + j
    if 2 * m < 3 * l:
        return 0j
    p = expand_bl(V, l, t, s, 2 * m)
    return apply_quadratic_operator(p, invert_hessian(l, V.frequencies, t), m, sign)


# Gram route -----------------------------------------------------------------

def gram_blocks(omega: Sequence[float], l: int, t: float, s: np.ndarray) -> np.ndarray:
    """Per-axis Gram matrices ``G_k = L_k H_k^-1 L_k^T`` at many simplex points.

    ``s`` has shape ``(N, l)``; the result has shape ``(N, n, l, l)``. Only
    the axis-``k`` block of the inverse Hessian couples the forms of axis ``k``.
    """
    w = check_time(omega, t)
    s = np.atleast_2d(np.asarray(s, dtype=float))
    N = s.shape[0]
    hinv = invert_hessian(l, w, t)
    layout = VariableLayout(l, len(w))
    out = np.empty((N, len(w), l, l))
    for k, wk in enumerate(w):
        idx = layout.axis_indices(k)
        hk = hinv[np.ix_(idx, idx)]
        forms = np.zeros((N, l, 2 * l + 1))
        cos_s = np.cos(wk * s)
        sin_s = np.sin(wk * s)
        forms[:, :, 0] = (np.sin(wk * (t - s)) + sin_s) / np.sin(wk * t)
        for i in range(l):
            forms[:, i, 1 + i] = cos_s[:, i] / 2
            if i + 1 < l:
                forms[:, i, 2 + i] = cos_s[:, i] / 2
            forms[:, i, 1 + l + i] = -sin_s[:, i] / wk
        out[:, k] = np.einsum("nar,rc,nbc->nab", forms, hk, forms)
    return out


@lru_cache(maxsize=None)
def gaussian_moment_terms(e: tuple[int, ...]) -> tuple[tuple[float, tuple[int, ...]], ...]:
    """Expansion of ``[u^e] exp(u^T G u / 2)`` as a polynomial in the entries of ``G``.

    Returns ``(coefficient, exponents)`` pairs where ``exponents`` runs over the
    upper-triangle entries ``G_ab`` (``a <= b``, row-major). Empty if ``|e|`` is odd.
    """
    size = len(e)
    pairs = [(a, b) for a in range(size) for b in range(a, size)]
    if sum(e) % 2:
        return ()
    out = []

    def rows(a: int, remaining: list[int], chosen: dict, weight: float) -> None:
        if a == size:
            if all(r == 0 for r in remaining):
                out.append((weight, tuple(chosen.get(p, 0) for p in pairs)))
            return
        ra = remaining[a]
        for diag in range(ra // 2, -1, -1):
            rest = ra - 2 * diag
            w_diag = weight * 0.5**diag / math.factorial(diag)
            for split in _splits(rest, remaining[a + 1:]):
                new_rem = remaining.copy()
                new_rem[a] = 0
                ch = dict(chosen)
                ch[(a, a)] = diag
                w = w_diag
                for off, cnt in enumerate(split):
                    b = a + 1 + off
                    if cnt:
                        ch[(a, b)] = cnt
                        new_rem[b] -= cnt
                        w /= math.factorial(cnt)
                rows(a + 1, new_rem, ch, w)

    rows(0, list(e), {}, 1.0)
    return tuple(out)


def _splits(total: int, caps: Sequence[int]) -> Iterator[tuple[int, ...]]:
    if not caps:
        if total == 0:
            yield ()
        return
    for first in range(min(total, caps[0]), -1, -1):
        for rest in _splits(total - first, caps[1:]):
            yield (first,) + rest


def _moment_values(e: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    """``[u^e] exp(u^T g u / 2)`` for a stack of ``l x l`` matrices ``g`` of shape ``(N, l, l)``."""
    terms = gaussian_moment_terms(e)
    N, size = g.shape[0], g.shape[1]
    if not terms:
        return np.zeros(N)
    entries = [g[:, a, b] for a in range(size) for b in range(a, size)]
    out = np.zeros(N)
    for coef, expo in terms:
        val = np.full(N, coef)
        for x, p in zip(entries, expo):
            if p:
                val = val * x**p
        out += val
    return out


def derivative_tuples(V: TaylorPotential, l: int, total: int) -> list[tuple[tuple[MultiIndex, ...], float]]:
    """Ordered choices ``(beta_1..beta_l)`` of stored derivatives with ``sum |beta_i| = total``.

    Returns each tuple with the product of its derivative values.
    """
    items = [(b, v, sum(b)) for b, v in V.derivatives.items()]
    out = []

    def rec(prefix: tuple, prod: float, left: int, slots: int) -> None:
        if slots == 0:
            if left == 0:
                out.append((prefix, prod))
            return
        for b, v, d in items:
            if d <= left - 3 * (slots - 1):
                rec(prefix + (b,), prod * v, left - d, slots - 1)

    rec((), 1.0, total, l)
    return out


def gram_coefficient(V: TaylorPotential, l: int, m: int, gram: np.ndarray) -> np.ndarray:
    """``<A grad, grad>^m b_l(0) / (2^m m!)`` from Gram blocks, without the ``i^(+-m)`` factor.

    ``gram`` is the output of :func:`gram_blocks`. Returns one value per point.
    """
    N, n = gram.shape[0], gram.shape[1]
    out = np.zeros(N)
    cache: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}
    for betas, prod in derivative_tuples(V, l, 2 * m):
        val = np.full(N, prod)
        for k in range(n):
            e = tuple(b[k] for b in betas)
            if sum(e) % 2:
                val = None
                break
            key = (k, e)
            if key not in cache:
                cache[key] = _moment_values(e, gram[:, k])
            val = val * cache[key]
        if val is not None:
            out += val
    return out


def trig_identity_residual(omega: float, t: float, s: float) -> float:
    """Largest deviation of the l=1 Gram entry from ``cot(omega t/2)/2``.

    Checks both the hand-simplified trigonometric expression and the value
    produced by ``gram_blocks``, which goes through the inverse Hessian.
    """
    w = float(omega)
    check_time((w,), t)
    lhs = (0.5 / np.tan(w * t / 2) * ((np.sin(w * (t - s)) + np.sin(w * s)) / np.sin(w * t)) ** 2
           - np.cos(w * s) * np.sin(w * s) + np.sin(w * s) ** 2 / np.tan(w * t))
    target = 0.5 / np.tan(w * t / 2)
    engine = -w * gram_blocks((w,), 1, t, np.array([[s]]))[0, 0, 0, 0]
    return float(max(abs(lhs - target), abs(engine - target)) / max(1.0, abs(target)))
