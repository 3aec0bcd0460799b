"""Sparse multivariate polynomials with float coefficients.

A polynomial stores its terms as two parallel numpy arrays: integer keys that
pack the exponent vector (a fixed number of bits per variable, variable 0 in
the most significant slot) and the coefficients.  Packing makes monomial
multiplication an integer addition, so products vectorize.

Coefficient arithmetic is plain floating point.  Callers that need rigorous
enclosures (the Taylor model layer) add their own roundoff padding, see
:func:`abs_mag_sum`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .interval import Interval, iv_add, iv_mul, iv_pow

__all__ = [
    "SparsePolynomial",
    "Domain",
    "MonomialBasis",
    "poly_add",
    "poly_scale",
    "poly_mul",
    "poly_truncate",
    "poly_bound",
    "poly_eval",
    "poly_derivative_1d",
    "poly_integrate_time",
    "poly_compose",
]

_U = 2.0**-53
_INF = math.inf


def key_bits(num_vars: int) -> int:
    return min(16, 63 // max(num_vars, 1))


def encode(exps: np.ndarray, num_vars: int) -> np.ndarray:
    exps = np.asarray(exps, dtype=np.int64).reshape(-1, num_vars)
    bits = key_bits(num_vars)
    if exps.size and exps.max() >= (1 << bits):
        raise OverflowError(f"exponent exceeds {(1 << bits) - 1} for {num_vars} variables")
    if exps.size and exps.min() < 0:
        raise ValueError("negative exponent")
    shifts = bits * np.arange(num_vars - 1, -1, -1, dtype=np.int64)
    return (exps << shifts).sum(axis=1).astype(np.int64)


def decode(keys: np.ndarray, num_vars: int) -> np.ndarray:
    bits = key_bits(num_vars)
    shifts = bits * np.arange(num_vars - 1, -1, -1, dtype=np.int64)
    return (np.asarray(keys, dtype=np.int64)[:, None] >> shifts) & ((1 << bits) - 1)


def order_degrees(keys: np.ndarray, num_vars: int, time_var: int | None = None) -> np.ndarray:
    """Per-term degree used for truncation.

    Without a time variable this is the total degree.  With one, the time
    exponent and the total degree in the remaining variables are limited
    separately, so the order-k degree of a term is the larger of the two.
    """
    exps = decode(keys, num_vars)
    total = exps.sum(axis=1)
    if time_var is None:
        return total
    et = exps[:, time_var]
    return np.maximum(total - et, et)


class SparsePolynomial:
    """Multivariate polynomial in ``num_vars`` variables.

    Terms with zero coefficient are never stored, so two polynomials are equal
    exactly when their term maps are equal.
    """

    __slots__ = ("num_vars", "keys", "coeffs", "_stats")

    def __init__(self, num_vars: int, keys=(), coeffs=(), *, canonical: bool = False):
        self.num_vars = int(num_vars)
        keys = np.asarray(keys, dtype=np.int64).ravel()
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if keys.shape != coeffs.shape:
            raise ValueError("keys and coeffs differ in length")
        if not canonical:
            if keys.size and np.any(keys[1:] <= keys[:-1]):
                keys, inv = np.unique(keys, return_inverse=True)
                coeffs = np.bincount(inv.ravel(), weights=coeffs, minlength=keys.size)
            nz = coeffs != 0.0
            if not nz.all():
                keys, coeffs = keys[nz], coeffs[nz]
        keys.setflags(write=False)
        coeffs.setflags(write=False)
        self.keys = keys
        self.coeffs = coeffs
        self._stats: dict = {}

    # -- construction -----------------------------------------------------

    @classmethod
    def from_terms(cls, num_vars: int, terms: Mapping[Sequence[int], float]) -> "SparsePolynomial":
        if not terms:
            return cls.zero(num_vars)
        exps = np.array([tuple(e) for e in terms.keys()], dtype=np.int64).reshape(-1, num_vars)
        return cls(num_vars, encode(exps, num_vars), np.fromiter(terms.values(), dtype=float))

    @classmethod
    def zero(cls, num_vars: int) -> "SparsePolynomial":
        return cls(num_vars, canonical=True)

    @classmethod
    def constant(cls, num_vars: int, c: float) -> "SparsePolynomial":
        return cls(num_vars, [0], [float(c)])

    @classmethod
    def variable(cls, num_vars: int, index: int, coeff: float = 1.0) -> "SparsePolynomial":
        if not 0 <= index < num_vars:
            raise IndexError(f"variable index {index} out of range for {num_vars} variables")
        e = np.zeros((1, num_vars), dtype=np.int64)
        e[0, index] = 1
        return cls(num_vars, encode(e, num_vars), [float(coeff)])

    @classmethod
    def univariate(cls, coeffs: Sequence[float]) -> "SparsePolynomial":
        """``coeffs[d]`` multiplies ``y**d``."""
        return cls(1, np.arange(len(coeffs), dtype=np.int64), np.asarray(coeffs, dtype=float))

    # -- inspection -------------------------------------------------------

    @property
    def exponents(self) -> np.ndarray:
        return decode(self.keys, self.num_vars)

    def terms(self) -> dict[tuple[int, ...], float]:
        """Term map in graded order (total degree, then packed key)."""
        exps = self.exponents
        order = np.lexsort((self.keys, exps.sum(axis=1)))
        return {tuple(int(v) for v in exps[i]): float(self.coeffs[i]) for i in order}

    def __len__(self) -> int:
        return int(self.keys.size)

    def is_zero(self) -> bool:
        return self.keys.size == 0

    def degree(self) -> int:
        if self.is_zero():
            return 0
        return int(self.exponents.sum(axis=1).max())

    def constant_term(self) -> float:
        if self.keys.size and self.keys[0] == 0:
            return float(self.coeffs[0])
        return 0.0

    def coeff(self, exps: Sequence[int]) -> float:
        k = encode(np.array([exps]), self.num_vars)[0]
        i = np.searchsorted(self.keys, k)
        if i < self.keys.size and self.keys[i] == k:
            return float(self.coeffs[i])
        return 0.0

    def univariate_coeffs(self) -> np.ndarray:
        """Dense coefficient vector of a univariate polynomial, lowest degree first."""
        if self.num_vars != 1:
            raise ValueError("polynomial is not univariate")
        out = np.zeros(self.degree() + 1)
        out[self.keys] = self.coeffs
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparsePolynomial):
            return NotImplemented
        return (
            self.num_vars == other.num_vars
            and np.array_equal(self.keys, other.keys)
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"SparsePolynomial({self.num_vars}, {self})"

    def __str__(self) -> str:
        return self.format()

    def format(self, names: Sequence[str] | None = None) -> str:
        if self.is_zero():
            return "0"
        if names is None:
            names = ["x"] if self.num_vars == 1 else [f"x{i}" for i in range(self.num_vars)]
        parts = []
        for exps, c in self.terms().items():
            mono = "*".join(
                names[v] if e == 1 else f"{names[v]}^{e}" for v, e in enumerate(exps) if e
            )
            if not mono:
                body = repr(abs(c))
            elif abs(c) == 1.0:
                body = mono
            else:
                body = f"{abs(c)!r}*{mono}"
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: "SparsePolynomial") -> None:
        if self.num_vars != other.num_vars:
            raise ValueError(
                f"dimension mismatch: {self.num_vars} vs {other.num_vars} variables"
            )

    def __add__(self, other: "SparsePolynomial | float") -> "SparsePolynomial":
        if not isinstance(other, SparsePolynomial):
            other = SparsePolynomial.constant(self.num_vars, other)
        self._check(other)
        return SparsePolynomial(
            self.num_vars,
            np.concatenate([self.keys, other.keys]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    __radd__ = __add__

    def __neg__(self) -> "SparsePolynomial":
        return SparsePolynomial(self.num_vars, self.keys, -self.coeffs, canonical=True)

    def __sub__(self, other: "SparsePolynomial | float") -> "SparsePolynomial":
        return self + (-other)

    def __rsub__(self, other: float) -> "SparsePolynomial":
        return (-self) + other

    def scale(self, c: float) -> "SparsePolynomial":
        c = float(c)
        if c == 0.0:
            return SparsePolynomial.zero(self.num_vars)
        return SparsePolynomial(self.num_vars, self.keys, self.coeffs * c)

    def __mul__(self, other: "SparsePolynomial | float") -> "SparsePolynomial":
        if not isinstance(other, SparsePolynomial):
            return self.scale(other)
        self._check(other)
        if self.is_zero() or other.is_zero():
            return SparsePolynomial.zero(self.num_vars)
        if self.degree() + other.degree() >= (1 << key_bits(self.num_vars)):
            raise OverflowError("product degree exceeds the exponent packing range")
        keys = np.add.outer(self.keys, other.keys).ravel()
        coeffs = np.multiply.outer(self.coeffs, other.coeffs).ravel()
        return SparsePolynomial(self.num_vars, keys, coeffs)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "SparsePolynomial":
        if n < 0:
            raise ValueError("negative power")
        result = SparsePolynomial.constant(self.num_vars, 1.0)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def truncate(self, k: int, time_var: int | None = None) -> tuple["SparsePolynomial", "SparsePolynomial"]:
        if k < 0:
            raise ValueError("truncation order must be non-negative")
        deg = order_degrees(self.keys, self.num_vars, time_var)
        low = deg <= k
        return (
            SparsePolynomial(self.num_vars, self.keys[low], self.coeffs[low], canonical=True),
            SparsePolynomial(self.num_vars, self.keys[~low], self.coeffs[~low], canonical=True),
        )

    def __call__(self, point: Sequence[float]) -> float:
        return self.evaluate(point)

    def evaluate(self, point: Sequence[float]) -> float:
        x = np.asarray(point, dtype=float).ravel()
        if x.size != self.num_vars:
            raise ValueError(f"point has {x.size} entries, polynomial has {self.num_vars} variables")
        if self.is_zero():
            return 0.0
        mono = np.prod(x[None, :] ** self.exponents, axis=1)
        return float(np.dot(self.coeffs, mono))

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.num_vars:
            raise ValueError("point dimension mismatch")
        if self.is_zero():
            return np.zeros(pts.shape[0])
        exps = self.exponents
        mono = None
        for v in range(self.num_vars):
            col = exps[:, v]
            top = int(col.max())
            if top == 0:
                continue
            powers = np.cumprod(np.repeat(pts[:, v : v + 1], top, axis=1), axis=1)
            powers = np.concatenate([np.ones((pts.shape[0], 1)), powers], axis=1)
            factor = powers[:, col]
            mono = factor if mono is None else mono * factor
        if mono is None:
            return np.full(pts.shape[0], float(np.sum(self.coeffs)))
        return mono @ self.coeffs

    def derivative(self, var: int) -> "SparsePolynomial":
        if not 0 <= var < self.num_vars:
            raise IndexError("variable index out of range")
        exps = self.exponents
        e = exps[:, var]
        keep = e > 0
        new = exps[keep].copy()
        new[:, var] -= 1
        return SparsePolynomial(self.num_vars, encode(new, self.num_vars), self.coeffs[keep] * e[keep])

    def derivative_1d(self) -> "SparsePolynomial":
        if self.num_vars != 1:
            raise ValueError("derivative_1d needs a univariate polynomial")
        return self.derivative(0)

    def integrate(self, var: int) -> "SparsePolynomial":
        """Antiderivative in ``var`` with zero constant of integration."""
        if not 0 <= var < self.num_vars:
            raise IndexError(f"variable index {var} out of range")
        exps = self.exponents.copy()
        exps[:, var] += 1
        return SparsePolynomial(
            self.num_vars, encode(exps, self.num_vars), self.coeffs / exps[:, var], canonical=True
        )

    def substitute(self, var: int, value: float) -> "SparsePolynomial":
        """Fix variable ``var`` to ``value`` and drop it from the variable list."""
        exps = self.exponents
        factor = float(value) ** exps[:, var]
        rest = np.delete(exps, var, axis=1)
        n = self.num_vars - 1
        return SparsePolynomial(n, encode(rest, n), self.coeffs * factor)

    def extend(self, num_vars: int) -> "SparsePolynomial":
        """Embed into a ring with extra trailing variables."""
        if num_vars < self.num_vars:
            raise ValueError("cannot shrink the variable list")
        if num_vars == self.num_vars:
            return self
        exps = np.zeros((self.keys.size, num_vars), dtype=np.int64)
        exps[:, : self.num_vars] = self.exponents
        return SparsePolynomial(num_vars, encode(exps, num_vars), self.coeffs, canonical=True)

    def linear_part(self) -> tuple[np.ndarray, "SparsePolynomial"]:
        """Split off the degree-1 terms: returns (gradient coefficients, rest)."""
        exps = self.exponents
        deg = exps.sum(axis=1)
        lin = deg == 1
        grad = np.zeros(self.num_vars)
        grad[np.argmax(exps[lin], axis=1)] = self.coeffs[lin]
        rest = SparsePolynomial(self.num_vars, self.keys[~lin], self.coeffs[~lin], canonical=True)
        return grad, rest

    def bound(self, domain: "Domain") -> Interval:
        return poly_bound(self, domain)

    def compose(self, g: "SparsePolynomial", k: int, domain: "Domain") -> tuple["SparsePolynomial", Interval]:
        return poly_compose(self, g, k, domain)


# ---------------------------------------------------------------------------
# domains and range bounding


def _vmul_err(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Exact rounding error ``a*b - p`` (Dekker), valid away from over/underflow."""
    split = 134217729.0
    c = split * a
    ah = c - (c - a)
    al = a - ah
    c = split * b
    bh = c - (c - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _vmul_dir(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Products of arrays rounded down and up."""
    p = a * b
    with np.errstate(all="ignore"):
        err = _vmul_err(a, b, p)
    ap = np.abs(p)
    unsafe = ((ap < 2.0**-969) & (p != 0.0)) | (ap > 2.0**995) | ~np.isfinite(err)
    down = np.where((err < 0) | unsafe, np.nextafter(p, -_INF), p)
    up = np.where((err > 0) | unsafe, np.nextafter(p, _INF), p)
    return down, up


_EXACT_SUM_MAX = 64


def _sum_bound(values: np.ndarray) -> tuple[float, float] | None:
    """Floating sum and an upper bound on its rounding error, for long vectors."""
    v = np.ravel(values)
    n = v.size
    if n <= _EXACT_SUM_MAX:
        return None
    s = float(np.sum(v))
    if not math.isfinite(s):
        return s, 0.0
    # recursive summation error <= gamma_{n-1} * sum|v|; the abs-sum is inflated for its own rounding
    err = 1.01 * n * _U * float(np.sum(np.abs(v))) * (1 + 1.01 * n * _U) + 1e-300
    return s, err


def sum_down(values: np.ndarray) -> float:
    fast = _sum_bound(values)
    if fast is not None:
        s, err = fast
        return s if math.isinf(s) else math.nextafter(s - err, -_INF)
    vals = [float(v) for v in np.ravel(values)]
    s = math.fsum(vals)
    if math.isinf(s):
        return s
    vals.append(-s)
    return math.nextafter(s, -_INF) if math.fsum(vals) < 0.0 else s


def sum_up(values: np.ndarray) -> float:
    fast = _sum_bound(values)
    if fast is not None:
        s, err = fast
        return s if math.isinf(s) else math.nextafter(s + err, _INF)
    vals = [float(v) for v in np.ravel(values)]
    s = math.fsum(vals)
    if math.isinf(s):
        return s
    vals.append(-s)
    return math.nextafter(s, _INF) if math.fsum(vals) > 0.0 else s


@lru_cache(maxsize=4096)
def _power_table(box: Interval, max_exp: int) -> tuple[np.ndarray, np.ndarray]:
    pw = [iv_pow(box, e) for e in range(max_exp + 1)]
    return np.array([p.lo for p in pw]), np.array([p.hi for p in pw])


_RANGE_CACHE: dict = {}


@dataclass(frozen=True)
class Domain:
    """Box domain of a polynomial, one interval per variable.

    ``time_var`` marks the local-time variable of flowpipe polynomials; it
    only changes how truncation order is measured.
    """

    boxes: tuple[Interval, ...]
    time_var: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.time_var is not None and not 0 <= self.time_var < len(self.boxes):
            raise ValueError("time variable index out of range")

    @classmethod
    def unit(cls, n: int) -> "Domain":
        return cls(tuple(Interval(-1.0, 1.0) for _ in range(n)))

    @property
    def num_vars(self) -> int:
        return len(self.boxes)

    def with_time(self, delta: float) -> "Domain":
        if self.time_var is not None:
            raise ValueError("domain already has a time variable")
        return Domain(self.boxes + (Interval(0.0, float(delta)),), time_var=len(self.boxes))

    def without_time(self) -> "Domain":
        if self.time_var is None:
            return self
        return Domain(self.boxes[: self.time_var] + self.boxes[self.time_var + 1 :])

    def monomial_ranges(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rigorous range of every monomial ``keys[i]`` over the box."""
        ck = (self, keys.tobytes())
        hit = _RANGE_CACHE.get(ck)
        if hit is None:
            if len(_RANGE_CACHE) > 20000:
                _RANGE_CACHE.clear()
            lo, hi = self._monomial_ranges(keys)
            lo.flags.writeable = False
            hi.flags.writeable = False
            hit = _RANGE_CACHE[ck] = (lo, hi)
        return hit

    def _monomial_ranges(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.num_vars
        exps = decode(keys, n)
        lo = np.ones(exps.shape[0])
        hi = np.ones(exps.shape[0])
        for v in range(n):
            col = exps[:, v]
            if not col.any():
                continue
            tlo, thi = _power_table(self.boxes[v], int(col.max()))
            flo, fhi = tlo[col], thi[col]
            trivial = (np.abs(flo) == 1.0) | (flo == 0.0)
            trivial &= (np.abs(fhi) == 1.0) | (fhi == 0.0)
            cands_d, cands_u = [], []
            for a, b in ((lo, flo), (lo, fhi), (hi, flo), (hi, fhi)):
                d, u = _vmul_dir(a, b)
                exact = a * b
                cands_d.append(np.where(trivial, exact, d))
                cands_u.append(np.where(trivial, exact, u))
            lo = np.minimum.reduce(cands_d)
            hi = np.maximum.reduce(cands_u)
        return lo, hi

    def monomial_mags(self, keys: np.ndarray) -> np.ndarray:
        lo, hi = self.monomial_ranges(keys)
        return np.maximum(np.abs(lo), np.abs(hi))


def _bound_terms(coeffs: np.ndarray, mlo: np.ndarray, mhi: np.ndarray) -> Interval:
    if coeffs.size == 0:
        return Interval(0.0, 0.0)
    d1, u1 = _vmul_dir(coeffs, mlo)
    d2, u2 = _vmul_dir(coeffs, mhi)
    return Interval(sum_down(np.minimum(d1, d2)), sum_up(np.maximum(u1, u2)))


def abs_mag_sum(p: SparsePolynomial, domain: Domain) -> float:
    """Upper bound on ``sum |c_i| * max|monomial_i|`` over the domain."""
    if p.is_zero():
        return 0.0
    key = ("mag", domain)
    hit = p._stats.get(key)
    if hit is None:
        mags = domain.monomial_mags(p.keys)
        hit = p._stats[key] = sum_up(np.nextafter(np.abs(p.coeffs) * mags, _INF))
    return hit


# ---------------------------------------------------------------------------
# fast truncated products over a fixed monomial basis


def _exponent_vectors(num_vars: int, order: int, time_var: int | None) -> np.ndarray:
    rows = []
    space_vars = num_vars - (0 if time_var is None else 1)

    def rec(prefix: list[int], remaining: int, slots: int) -> None:
        if slots == 0:
            rows.append(prefix)
            return
        for e in range(remaining + 1):
            rec(prefix + [e], remaining - e, slots - 1)

    rec([], order, space_vars)
    space = np.array(rows, dtype=np.int64).reshape(-1, space_vars)
    if time_var is None:
        return space
    out = []
    for et in range(order + 1):
        block = np.insert(space, time_var, et, axis=1)
        out.append(block)
    return np.concatenate(out)


class MonomialBasis:
    """All monomials of order-degree <= ``order`` plus a product lookup table.

    ``table[i, j]`` is the index of ``basis[i] * basis[j]`` in ``ext_keys``,
    the sorted set of all such products; multiplication of two polynomials
    living in the basis then reduces to a gather and a ``bincount``.

    Large products take a cheaper route: only the basis pairs whose product
    survives truncation are multiplied, and the dropped part is bounded
    group-wise, grouping monomials by (space degree, time degree).  Inside one
    pair of groups every product is dropped or every product is kept.
    """

    MAX_SIZE = 3000
    EXACT_PAIRS = 40000

    def __init__(self, num_vars: int, order: int, time_var: int | None = None):
        self.num_vars = num_vars
        self.order = order
        self.time_var = time_var
        if 2 * order >= (1 << key_bits(num_vars)):
            raise OverflowError("order too large for exponent packing")
        exps = _exponent_vectors(num_vars, order, time_var)
        self.keys = np.sort(encode(exps, num_vars))
        if self.keys.size > self.MAX_SIZE:
            raise ValueError("basis too large for a product table")
        prods = np.add.outer(self.keys, self.keys)
        self.ext_keys = np.unique(prods)
        self.table = np.searchsorted(self.ext_keys, prods).astype(np.int32)
        self.flat_table = self.table.ravel()
        deg = order_degrees(self.ext_keys, num_vars, time_var)
        self.low_idx = np.flatnonzero(deg <= order)
        self.high_idx = np.flatnonzero(deg > order)
        self._ranges: dict[Domain, tuple[np.ndarray, np.ndarray]] = {}
        self._basis_ranges: dict[Domain, tuple[np.ndarray, np.ndarray]] = {}
        # kept pairs, each with its slot in the low part
        ext_to_low = np.full(self.ext_keys.size, -1, dtype=np.int64)
        ext_to_low[self.low_idx] = np.arange(self.low_idx.size)
        slot = ext_to_low[self.table]
        self.pair_i, self.pair_j = np.nonzero(slot >= 0)
        self.pair_slot = slot[self.pair_i, self.pair_j]
        # degree groups
        bexp = decode(self.keys, num_vars)
        dt = bexp[:, time_var] if time_var is not None else np.zeros(self.keys.size, dtype=np.int64)
        dz = bexp.sum(axis=1) - dt
        width = order + 1
        self.group = dz * width + dt
        gz, gt = np.divmod(np.arange(width * width), width)
        self.num_groups = width * width
        self.group_high = (np.add.outer(gz, gz) > order) | (np.add.outer(gt, gt) > order)

    @staticmethod
    @lru_cache(maxsize=64)
    def get(num_vars: int, order: int, time_var: int | None = None) -> "MonomialBasis":
        return MonomialBasis(num_vars, order, time_var)

    def index_of(self, p: SparsePolynomial) -> np.ndarray | None:
        idx = np.searchsorted(self.keys, p.keys)
        if idx.size and (idx.max() >= self.keys.size or not np.array_equal(self.keys[idx], p.keys)):
            return None
        return idx

    def high_ranges(self, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
        r = self._ranges.get(domain)
        if r is None:
            r = domain.monomial_ranges(self.ext_keys[self.high_idx])
            self._ranges[domain] = r
        return r

    def _group_bounds(self, dense: np.ndarray, domain: Domain) -> tuple[np.ndarray, np.ndarray]:
        """Rigorous range of each degree group of a dense basis polynomial."""
        r = self._basis_ranges.get(domain)
        if r is None:
            r = self._basis_ranges[domain] = domain.monomial_ranges(self.keys)
        d1, u1 = _vmul_dir(dense, r[0])
        d2, u2 = _vmul_dir(dense, r[1])
        lo_t, hi_t = np.minimum(d1, d2), np.maximum(u1, u2)
        G = self.num_groups
        lo = np.bincount(self.group, weights=lo_t, minlength=G)
        hi = np.bincount(self.group, weights=hi_t, minlength=G)
        cnt = np.bincount(self.group, minlength=G)
        alo = np.bincount(self.group, weights=np.abs(lo_t), minlength=G)
        ahi = np.bincount(self.group, weights=np.abs(hi_t), minlength=G)
        lo = np.nextafter(lo - 1.01 * cnt * _U * alo * (1 + 1e-10) - 1e-300, -_INF)
        hi = np.nextafter(hi + 1.01 * cnt * _U * ahi * (1 + 1e-10) + 1e-300, _INF)
        empty = cnt == 0
        lo[empty] = 0.0
        hi[empty] = 0.0
        return lo, hi

    def _mul_pairs(self, fd: np.ndarray, gd: np.ndarray, domain: Domain | None):
        w = fd[self.pair_i] * gd[self.pair_j]
        low_c = np.bincount(self.pair_slot, weights=w, minlength=self.low_idx.size)
        low = SparsePolynomial(self.num_vars, self.ext_keys[self.low_idx], low_c)
        if domain is None:
            return low, Interval(0.0, 0.0)
        flo, fhi = self._group_bounds(fd, domain)
        glo, ghi = self._group_bounds(gd, domain)
        cands = [np.multiply.outer(a, b) for a in (flo, fhi) for b in (glo, ghi)]
        plo = np.nextafter(np.minimum.reduce(cands), -_INF)
        phi = np.nextafter(np.maximum.reduce(cands), _INF)
        plo, phi = plo[self.group_high], phi[self.group_high]
        return low, Interval(sum_down(plo), sum_up(phi))

    def mul(
        self,
        f: SparsePolynomial,
        g: SparsePolynomial,
        domain: Domain | None = None,
    ) -> tuple[SparsePolynomial, Interval] | None:
        """Truncated product and a bound of the dropped part (``None`` if not in basis)."""
        ia = self.index_of(f)
        ib = self.index_of(g)
        if ia is None or ib is None:
            return None
        n = self.num_vars
        if f.is_zero() or g.is_zero():
            return SparsePolynomial.zero(n), Interval(0.0, 0.0)
        size = self.keys.size
        if domain is None or ia.size * ib.size > self.EXACT_PAIRS:
            fd = np.zeros(size)
            gd = np.zeros(size)
            fd[ia] = f.coeffs
            gd[ib] = g.coeffs
            return self._mul_pairs(fd, gd, domain)
        size = self.keys.size
        if ia.size * ib.size > 0.3 * size * size:
            # dense path: scatter into the full basis, no gather of the table
            fd = np.zeros(size)
            gd = np.zeros(size)
            fd[ia] = f.coeffs
            gd[ib] = g.coeffs
            w = np.multiply.outer(fd, gd).ravel()
            acc = np.bincount(self.flat_table, weights=w, minlength=self.ext_keys.size)
        else:
            idx = self.table[np.ix_(ia, ib)].ravel()
            w = np.multiply.outer(f.coeffs, g.coeffs).ravel()
            acc = np.bincount(idx, weights=w, minlength=self.ext_keys.size)
        low = SparsePolynomial(n, self.ext_keys[self.low_idx], acc[self.low_idx], canonical=False)
        if domain is None:
            return low, Interval(0.0, 0.0)
        hc = acc[self.high_idx]
        nz = hc != 0.0
        if not nz.any():
            return low, Interval(0.0, 0.0)
        mlo, mhi = self.high_ranges(domain)
        return low, _bound_terms(hc[nz], mlo[nz], mhi[nz])


# ---------------------------------------------------------------------------
# functional interface


def poly_add(f: SparsePolynomial, g: SparsePolynomial) -> SparsePolynomial:
    return f + g


def poly_scale(f: SparsePolynomial, c: float) -> SparsePolynomial:
    return f.scale(c)


def poly_mul(f: SparsePolynomial, g: SparsePolynomial) -> SparsePolynomial:
    return f * g


def poly_truncate(f: SparsePolynomial, k: int, time_var: int | None = None):
    return f.truncate(k, time_var)


def poly_bound(f: SparsePolynomial, domain: Domain) -> Interval:
    """Interval enclosure of the range of ``f`` by monomial-wise evaluation."""
    if domain.num_vars != f.num_vars:
        raise ValueError(
            f"domain has {domain.num_vars} variables, polynomial has {f.num_vars}"
        )
    if f.is_zero():
        return Interval(0.0, 0.0)
    key = ("bound", domain)
    hit = f._stats.get(key)
    if hit is None:
        mlo, mhi = domain.monomial_ranges(f.keys)
        hit = f._stats[key] = _bound_terms(np.asarray(f.coeffs), mlo, mhi)
    return hit


def poly_eval(f: SparsePolynomial, point: Sequence[float]) -> float:
    return f.evaluate(point)


def poly_derivative_1d(f: SparsePolynomial) -> SparsePolynomial:
    return f.derivative_1d()


def poly_integrate_time(f: SparsePolynomial, t_index: int) -> SparsePolynomial:
    return f.integrate(t_index)


def poly_compose(
    f: SparsePolynomial, g: SparsePolynomial, k: int, domain: Domain | None = None
) -> tuple[SparsePolynomial, Interval]:
    """Substitute ``g`` into univariate ``f`` by Horner's rule, truncating at order ``k``.

    Returns the kept polynomial and an interval enclosing everything that was
    truncated away, evaluated over ``domain`` (the unit box by default).
    """
    if f.num_vars != 1:
        raise ValueError("outer polynomial must be univariate")
    if k < 0:
        raise ValueError("order must be non-negative")
    if domain is None:
        domain = Domain.unit(g.num_vars)
    if domain.num_vars != g.num_vars:
        raise ValueError("domain dimension mismatch")
    c = f.univariate_coeffs() if not f.is_zero() else np.zeros(1)
    n = g.num_vars
    g_range = poly_bound(g, domain)
    acc = SparsePolynomial.constant(n, c[-1])
    rem = Interval(0.0, 0.0)
    for ci in c[-2::-1]:
        prod = acc * g
        low, high = prod.truncate(k, domain.time_var)
        rem = iv_add(iv_mul(rem, g_range), poly_bound(high, domain))
        acc = low + float(ci)
    return acc, rem


def monomial_count(num_vars: int, order: int) -> int:
    return math.comb(num_vars + order, order)


def iter_exponents(num_vars: int, order: int) -> Iterable[tuple[int, ...]]:
    for e in itertools.product(range(order + 1), repeat=num_vars):
        if sum(e) <= order:
            yield e
