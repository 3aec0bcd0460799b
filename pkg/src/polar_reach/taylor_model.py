"""Taylor models: a polynomial over a box plus an interval remainder.

A TM ``(p, I)`` over domain ``D`` overapproximates a function ``f`` point-wise
when ``f(z) in p(z) + I`` for every ``z in D``.  Every operation here keeps
that property, including the floating-point error made on the polynomial
coefficients, which is bounded and folded into the remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .interval import UNIT_ROUNDOFF, Interval, imatvec, iv_add, iv_mul, iv_scale
from .polynomial import (
    Domain,
    MonomialBasis,
    SparsePolynomial,
    abs_mag_sum,
    order_degrees,
    poly_bound,
)

__all__ = [
    "TaylorModel",
    "TMVector",
    "tm_add",
    "tm_mul",
    "tm_linear_map",
    "tm_compose_univariate",
    "tm_range",
    "tm_eval_time",
]

_U = UNIT_ROUNDOFF
_ZERO = Interval(0.0, 0.0)


def _pad(amount: float) -> Interval:
    if amount <= 0.0:
        return _ZERO
    r = math.nextafter(amount, math.inf)
    return Interval(-r, r)


def _basis_for(domain: Domain, order: int) -> MonomialBasis | None:
    try:
        return MonomialBasis.get(domain.num_vars, order, domain.time_var)
    except (ValueError, OverflowError):
        return None


@dataclass(frozen=True)
class TaylorModel:
    poly: SparsePolynomial
    rem: Interval
    domain: Domain
    order: int

    def __post_init__(self) -> None:
        if self.poly.num_vars != self.domain.num_vars:
            raise ValueError("polynomial and domain disagree on the number of variables")

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, c: float, domain: Domain, order: int, rem: Interval = _ZERO) -> "TaylorModel":
        return cls(SparsePolynomial.constant(domain.num_vars, c), rem, domain, order)

    @classmethod
    def variable(cls, index: int, domain: Domain, order: int) -> "TaylorModel":
        return cls(SparsePolynomial.variable(domain.num_vars, index), _ZERO, domain, order)

    @classmethod
    def from_interval(cls, iv: Interval, domain: Domain, order: int) -> "TaylorModel":
        return cls(SparsePolynomial.zero(domain.num_vars), iv, domain, order)

    # -- queries ----------------------------------------------------------

    def bound_poly(self) -> Interval:
        return poly_bound(self.poly, self.domain)

    def range(self) -> Interval:
        return tm_range(self)

    def evaluate(self, point: Sequence[float]) -> Interval:
        """Enclosure at one domain point (polynomial evaluated in floating point)."""
        v = self.poly.evaluate(point)
        return Interval(v + self.rem.lo, v + self.rem.hi)

    def _check(self, other: "TaylorModel") -> None:
        if self.domain != other.domain:
            raise ValueError("Taylor models live on different domains")
        if self.order != other.order:
            raise ValueError(f"Taylor model order mismatch: {self.order} vs {other.order}")

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other: "TaylorModel | Interval | float") -> "TaylorModel":
        if isinstance(other, TaylorModel):
            return tm_add(self, other)
        if isinstance(other, Interval):
            return TaylorModel(self.poly, self.rem + other, self.domain, self.order)
        return self.add_constant(float(other))

    __radd__ = __add__

    def __neg__(self) -> "TaylorModel":
        return TaylorModel(-self.poly, -self.rem, self.domain, self.order)

    def __sub__(self, other: "TaylorModel | Interval | float") -> "TaylorModel":
        return self + (-other)

    def __rsub__(self, other: float) -> "TaylorModel":
        return (-self) + other

    def __mul__(self, other: "TaylorModel | float") -> "TaylorModel":
        if isinstance(other, TaylorModel):
            return tm_mul(self, other)
        return self.scale(float(other))

    __rmul__ = __mul__

    def scale(self, c: float) -> "TaylorModel":
        c = float(c)
        poly = self.poly.scale(c)
        rem = iv_scale(self.rem, c)
        if abs(c) not in (0.0, 1.0):
            rem = rem + _pad(_U * abs(c) * abs_mag_sum(self.poly, self.domain))
        return TaylorModel(poly, rem, self.domain, self.order)

    def add_constant(self, c: float) -> "TaylorModel":
        if c == 0.0:
            return self
        c0 = self.poly.constant_term()
        poly = self.poly + c
        rem = self.rem
        if c0 != 0.0:
            rem = rem + _pad(_U * abs(c0 + c))
        return TaylorModel(poly, rem, self.domain, self.order)

    def truncate(self, k: int | None = None) -> "TaylorModel":
        """Move terms above order ``k`` into the remainder."""
        k = self.order if k is None else k
        low, high = self.poly.truncate(k, self.domain.time_var)
        if high.is_zero():
            return TaylorModel(low, self.rem, self.domain, k)
        return TaylorModel(low, self.rem + poly_bound(high, self.domain), self.domain, k)

    def with_time(self, delta: float) -> "TaylorModel":
        """Same function, viewed on the domain extended by local time ``t in [0, delta]``."""
        dom = self.domain.with_time(delta)
        return TaylorModel(self.poly.extend(dom.num_vars), self.rem, dom, self.order)

    def eval_time(self, t_value: float) -> "TaylorModel":
        return tm_eval_time(self, t_value)

    def integrate_time(self) -> "TaylorModel":
        """TM for ``t -> integral_0^t f(s) ds``, truncated back to ``order``."""
        tv = self.domain.time_var
        if tv is None:
            raise ValueError("Taylor model has no time variable")
        poly = self.poly.integrate(tv)
        pad = _U * abs_mag_sum(poly, self.domain)
        rem = iv_mul(self.domain.boxes[tv], self.rem) + _pad(pad)
        return TaylorModel(poly, rem, self.domain, self.order).truncate()


def tm_add(a: TaylorModel, b: TaylorModel) -> TaylorModel:
    a._check(b)
    poly = a.poly + b.poly
    common, ia, ib = np.intersect1d(a.poly.keys, b.poly.keys, assume_unique=True, return_indices=True)
    pad = 0.0
    if common.size:
        sums = np.abs(a.poly.coeffs[ia] + b.poly.coeffs[ib])
        pad = _U * float(np.dot(sums, a.domain.monomial_mags(common))) * (1 + 4 * _U)
    return TaylorModel(poly, a.rem + b.rem + _pad(pad), a.domain, a.order)


def _is_constant(p: SparsePolynomial) -> bool:
    return p.is_zero() or (p.keys.size == 1 and p.keys[0] == 0)


def tm_mul(a: TaylorModel, b: TaylorModel, k: int | None = None) -> TaylorModel:
    """Order-k product: ``(p_a p_b - r_k, I_a B(p_b) + B(p_a) I_b + I_a I_b + B(r_k))``."""
    if a.domain != b.domain:
        raise ValueError("Taylor models live on different domains")
    k = a.order if k is None else k
    dom = a.domain
    ba = poly_bound(a.poly, dom)
    bb = poly_bound(b.poly, dom)
    rem = iv_add(iv_add(iv_mul(a.rem, bb), iv_mul(ba, b.rem)), iv_mul(a.rem, b.rem))
    if _is_constant(b.poly) or _is_constant(a.poly):
        const, other = (b, a) if _is_constant(b.poly) else (a, b)
        c = const.poly.constant_term()
        scaled = TaylorModel(other.poly, _ZERO, dom, k).scale(c).truncate(k)
        return TaylorModel(scaled.poly, rem + scaled.rem, dom, k)
    res = None
    basis = _basis_for(dom, k)
    if basis is not None:
        res = basis.mul(a.poly, b.poly, dom)
    if res is None:
        low, high = (a.poly * b.poly).truncate(k, dom.time_var)
        res = (low, poly_bound(high, dom))
    low, high_bound = res
    n_acc = min(len(a.poly), len(b.poly)) + 2
    pad = n_acc * _U * abs_mag_sum(a.poly, dom) * abs_mag_sum(b.poly, dom)
    return TaylorModel(low, rem + high_bound + _pad(pad), dom, k)


def tm_range(a: TaylorModel) -> Interval:
    """Minkowski sum of the polynomial's range bound and the remainder."""
    return poly_bound(a.poly, a.domain) + a.rem


def tm_compose_univariate(p_sigma: SparsePolynomial, I_sigma: Interval, t: TaylorModel) -> TaylorModel:
    """TM for ``p_sigma(t) + I_sigma`` by Horner's rule in TM arithmetic."""
    coeffs = p_sigma.univariate_coeffs() if not p_sigma.is_zero() else np.zeros(1)
    acc = TaylorModel.constant(float(coeffs[-1]), t.domain, t.order)
    for c in coeffs[-2::-1]:
        acc = tm_mul(acc, t).add_constant(float(c))
    return TaylorModel(acc.poly, acc.rem + I_sigma, acc.domain, acc.order)


def tm_eval_time(a: TaylorModel, t_value: float) -> TaylorModel:
    """Substitute the local time variable by ``t_value``; the result drops ``t``."""
    tv = a.domain.time_var
    if tv is None:
        raise ValueError("Taylor model has no time variable")
    tbox = a.domain.boxes[tv]
    if not tbox.lo <= t_value <= tbox.hi:
        raise ValueError(f"time {t_value} outside [{tbox.lo}, {tbox.hi}]")
    dom = a.domain.without_time()
    poly = a.poly.substitute(tv, t_value)
    pad = 0.0
    max_t = int(a.poly.exponents[:, tv].max()) if not a.poly.is_zero() else 0
    if t_value != 0.0 and max_t > 0:
        # a t-free polynomial passes through substitution untouched
        pad = (max_t + 2) * _U * abs_mag_sum(a.poly, a.domain)
    return TaylorModel(poly, a.rem + _pad(pad), dom, a.order)


@dataclass(frozen=True)
class TMVector:
    """Vector of Taylor models sharing one domain and order."""

    components: tuple[TaylorModel, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if comps:
            d, k = comps[0].domain, comps[0].order
            for c in comps[1:]:
                if c.domain != d or c.order != k:
                    raise ValueError("TMVector components must share domain and order")

    @classmethod
    def identity(
        cls, center: Sequence[float], halfwidth: Sequence[float], order: int
    ) -> "TMVector":
        """``x_i = center_i + halfwidth_i * z_i`` over the unit box."""
        n = len(center)
        dom = Domain.unit(n)
        comps = []
        for i, (c, h) in enumerate(zip(center, halfwidth)):
            p = SparsePolynomial.variable(n, i, h) + float(c) if h else SparsePolynomial.constant(n, c)
            comps.append(TaylorModel(p, _ZERO, dom, order))
        return cls(tuple(comps))

    @classmethod
    def constants(cls, values: Iterable[float], domain: Domain, order: int) -> "TMVector":
        return cls(tuple(TaylorModel.constant(v, domain, order) for v in values))

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return TMVector(self.components[i])
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    @property
    def domain(self) -> Domain:
        return self.components[0].domain

    @property
    def order(self) -> int:
        return self.components[0].order

    @property
    def polys(self) -> list[SparsePolynomial]:
        return [c.poly for c in self.components]

    @property
    def remainders(self) -> list[Interval]:
        return [c.rem for c in self.components]

    def ranges(self) -> list[Interval]:
        return [tm_range(c) for c in self.components]

    def select(self, indices: Iterable[int]) -> "TMVector":
        return TMVector(tuple(self.components[i] for i in indices))

    def concat(self, other: "TMVector") -> "TMVector":
        return TMVector(self.components + other.components)

    def with_time(self, delta: float) -> "TMVector":
        return TMVector(tuple(c.with_time(delta) for c in self.components))

    def eval_time(self, t_value: float) -> "TMVector":
        return TMVector(tuple(tm_eval_time(c, t_value) for c in self.components))

    def with_remainders(self, rems: Sequence[Interval]) -> "TMVector":
        return TMVector(
            tuple(TaylorModel(c.poly, r, c.domain, c.order) for c, r in zip(self.components, rems))
        )

    def evaluate(self, point: Sequence[float]) -> list[Interval]:
        return [c.evaluate(point) for c in self.components]

    def linear_map(self, W, b=None) -> "TMVector":
        return tm_linear_map(W, self, b)


def coefficient_matrix(v: TMVector) -> tuple[np.ndarray, np.ndarray]:
    """Union of term keys and the dense (components x keys) coefficient matrix."""
    polys = v.polys
    keys = np.unique(np.concatenate([p.keys for p in polys])) if polys else np.zeros(0, np.int64)
    C = np.zeros((len(polys), keys.size))
    for row, p in enumerate(polys):
        C[row, np.searchsorted(keys, p.keys)] = p.coeffs
    return keys, C


def tm_linear_map(W, v: TMVector, b=None) -> TMVector:
    """Component j of the result is ``sum_l W[j, l] * v[l] + b[j]``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[1] != len(v):
        raise ValueError(f"matrix has {W.shape[1]} columns, vector has {len(v)} components")
    b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=float).ravel()
    if b.size != W.shape[0]:
        raise ValueError("bias length does not match the number of rows")
    dom, k = v.domain, v.order
    n = dom.num_vars
    keys, C = coefficient_matrix(v)
    out = W @ C
    if keys.size and keys[0] == 0:
        out[:, 0] += b
    else:
        keys = np.concatenate([[0], keys])
        out = np.concatenate([b[:, None], out], axis=1)
    rems = v.remainders
    rlo, rhi = imatvec(W, np.array([r.lo for r in rems]), np.array([r.hi for r in rems]))
    absW = np.abs(W)
    mags = np.array([abs_mag_sum(p, dom) for p in v.polys])
    nnz = (W != 0).sum(axis=1)
    exact = (nnz <= 1) & (absW.max(axis=1, initial=0.0) <= 1.0) & ((absW == 1.0) | (W == 0)).all(axis=1) & (b == 0)
    pads = (W.shape[1] + 2) * _U * (absW @ mags + np.abs(b)) * (1 + 4 * _U)
    comps = []
    for j in range(W.shape[0]):
        poly = SparsePolynomial(n, keys, out[j])
        if exact[j]:
            # at most one +-1 entry: the remainder is copied, not re-enclosed
            nz = np.flatnonzero(W[j])
            rem = _ZERO if nz.size == 0 else rems[nz[0]] * float(W[j, nz[0]])
        else:
            rem = Interval(float(rlo[j]), float(rhi[j])) + _pad(float(pads[j]))
        comps.append(TaylorModel(poly, rem, dom, k))
    return TMVector(tuple(comps))
