"""Closed real intervals with outward-rounded endpoints.

Endpoint arithmetic emulates directed rounding with error-free transformations
(TwoSum / Dekker's TwoProduct): a result endpoint is nudged by one ulp only
when the floating-point operation was inexact in the unsafe direction.  Exact
results (``[1, 2] + [3, 4]``) therefore come back exact.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "Interval",
    "iv_add",
    "iv_sub",
    "iv_mul",
    "iv_scale",
    "iv_pow",
    "iv_hull",
    "iv_contains",
    "iv_subset",
    "iv_width",
    "iv_mid",
    "iv_intersects",
    "imatvec",
    "add_down",
    "add_up",
    "mul_down",
    "mul_up",
]

_INF = math.inf
_SPLITTER = 134217729.0  # 2**27 + 1
# Dekker splitting is exact only away from overflow and the subnormal range.
_SAFE_HI = 2.0**995
_SAFE_LO = 2.0**-969
UNIT_ROUNDOFF = 2.0**-53


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a: float) -> tuple[float, float]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a: float, b: float) -> tuple[float, float]:
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add_down(a: float, b: float) -> float:
    s, err = _two_sum(a, b)
    if math.isinf(s) or math.isnan(err):
        return s
    return _down(s) if err < 0.0 else s


def add_up(a: float, b: float) -> float:
    s, err = _two_sum(a, b)
    if math.isinf(s) or math.isnan(err):
        return s
    return _up(s) if err > 0.0 else s


def _prod_is_safe(a: float, b: float, p: float) -> bool:
    if a == 0.0 or b == 0.0:
        return True
    ap = abs(p)
    return _SAFE_LO < ap < _SAFE_HI and abs(a) < _SAFE_HI and abs(b) < _SAFE_HI


def mul_down(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if not _prod_is_safe(a, b, p):
        if p == math.inf and math.isfinite(a) and math.isfinite(b):
            return sys.float_info.max
        if p == 0.0 and (a > 0.0) == (b > 0.0):
            return 0.0
        return p if math.isinf(p) else _down(p)
    if p == 0.0:
        return p
    _, err = _two_prod(a, b)
    return _down(p) if err < 0.0 else p


def mul_up(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if not _prod_is_safe(a, b, p):
        if p == -math.inf and math.isfinite(a) and math.isfinite(b):
            return -sys.float_info.max
        if p == 0.0 and (a > 0.0) != (b > 0.0):
            return 0.0
        return p if math.isinf(p) else _up(p)
    if p == 0.0:
        return p
    _, err = _two_prod(a, b)
    return _up(p) if err > 0.0 else p


def _pow_up(x: float, n: int) -> float:
    # x >= 0
    r = 1.0
    for _ in range(n):
        r = mul_up(r, x)
    return r


def _pow_down(x: float, n: int) -> float:
    r = 1.0
    for _ in range(n):
        r = mul_down(r, x)
    return r


@dataclass(frozen=True, slots=True)
class Interval:
    """The closed interval ``[lo, hi]``; degenerate intervals are allowed."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoint is NaN")
        if lo > hi:
            raise ValueError(f"invalid interval: lo={lo!r} > hi={hi!r}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @classmethod
    def symmetric(cls, r: float) -> "Interval":
        r = abs(float(r))
        return cls(-r, r)

    @classmethod
    def hull_of(cls, values: Iterable[float]) -> "Interval":
        vals = list(values)
        return cls(min(vals), max(vals))

    @property
    def width(self) -> float:
        return iv_width(self)

    @property
    def mid(self) -> float:
        return iv_mid(self)

    def mag(self) -> float:
        """Largest absolute value in the interval."""
        return max(abs(self.lo), abs(self.hi))

    def is_point(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x: float) -> bool:
        return iv_contains(self, x)

    def __add__(self, other: "Interval | float") -> "Interval":
        return iv_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other: "Interval | float") -> "Interval":
        return iv_sub(self, _coerce(other))

    def __rsub__(self, other: float) -> "Interval":
        return iv_sub(_coerce(other), self)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other: "Interval | float") -> "Interval":
        if isinstance(other, Interval):
            return iv_mul(self, other)
        return iv_scale(self, float(other))

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Interval":
        return iv_pow(self, n)

    def __or__(self, other: "Interval") -> "Interval":
        return iv_hull(self, other)

    def __le__(self, other: "Interval") -> bool:  # type: ignore[override]
        return iv_subset(self, other)

    def inflate(self, amount: float) -> "Interval":
        """Widen both endpoints by ``amount`` (rounded outward)."""
        return Interval(add_down(self.lo, -amount), add_up(self.hi, amount))

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


ZERO = Interval(0.0, 0.0)


def _coerce(x: "Interval | float") -> Interval:
    if isinstance(x, Interval):
        return x
    return Interval(float(x), float(x))


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(add_down(a.lo, b.lo), add_up(a.hi, b.hi))


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(add_down(a.lo, -b.hi), add_up(a.hi, -b.lo))


def iv_mul(a: Interval, b: Interval) -> Interval:
    pairs = ((a.lo, b.lo), (a.lo, b.hi), (a.hi, b.lo), (a.hi, b.hi))
    return Interval(min(mul_down(x, y) for x, y in pairs), max(mul_up(x, y) for x, y in pairs))


def iv_scale(a: Interval, c: float) -> Interval:
    c = float(c)
    if not math.isfinite(c):
        raise ValueError("scale factor must be finite")
    if c >= 0.0:
        return Interval(mul_down(a.lo, c), mul_up(a.hi, c))
    return Interval(mul_down(a.hi, c), mul_up(a.lo, c))


def iv_pow(a: Interval, n: int) -> Interval:
    """Tight enclosure of ``{x**n : x in a}``; even powers never go negative."""
    if n < 0:
        raise ValueError("exponent must be non-negative")
    if n == 0:
        return Interval(1.0, 1.0)
    if n == 1:
        return a
    if n % 2 == 0:
        if a.lo >= 0.0:
            return Interval(_pow_down(a.lo, n), _pow_up(a.hi, n))
        if a.hi <= 0.0:
            return Interval(_pow_down(-a.hi, n), _pow_up(-a.lo, n))
        return Interval(0.0, _pow_up(a.mag(), n))
    lo = _pow_down(a.lo, n) if a.lo >= 0.0 else -_pow_up(-a.lo, n)
    hi = _pow_up(a.hi, n) if a.hi >= 0.0 else -_pow_down(-a.hi, n)
    return Interval(lo, hi)


def iv_hull(a: Interval, b: Interval) -> Interval:
    return Interval(min(a.lo, b.lo), max(a.hi, b.hi))


def iv_contains(a: Interval, x: float) -> bool:
    return a.lo <= x <= a.hi


def iv_subset(a: Interval, b: Interval) -> bool:
    return b.lo <= a.lo and a.hi <= b.hi


def iv_width(a: Interval) -> float:
    return a.hi - a.lo


def iv_mid(a: Interval) -> float:
    return 0.5 * a.lo + 0.5 * a.hi


def iv_intersects(a: Interval, b: Interval) -> bool:
    return a.lo <= b.hi and b.lo <= a.hi


def imatvec(W: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Enclose ``W @ x`` for a real matrix ``W`` and ``lo <= x <= hi``.

    Midpoint-radius evaluation, which is exact in real arithmetic for a point
    matrix; the floating error of the two products is bounded a priori and
    added on both sides.
    """
    W = np.asarray(W, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = 0.5 * lo + 0.5 * hi
    r = np.nextafter(np.maximum(hi - c, c - lo), _INF)
    absW = np.abs(W)
    mid = W @ c
    rad = absW @ r
    n = W.shape[1] if W.ndim == 2 else 1
    err = (n + 3) * UNIT_ROUNDOFF * (absW @ np.abs(c) + rad) + 1e-300
    return np.nextafter(mid - rad - err, -_INF), np.nextafter(mid + rad + err, _INF)
