"""Outward-rounded interval arithmetic.

Endpoints may be Python floats or numpy arrays of equal shape; every
operation broadcasts, so a batch of boxes is just an ``Interval`` whose
endpoints are arrays. After each inexact operation the result is widened
by one unit in the last place (more for libm transcendentals), which keeps
enclosures sound without touching the FPU rounding mode.
"""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

Number = Union[float, np.ndarray]

TWO_PI = 2.0 * math.pi
# beyond this magnitude sin/cos argument reduction is not trusted
TRIG_ARG_LIMIT = 1e6
# libm does not promise correct rounding for transcendentals
TRANSCENDENTAL_ULPS = 4


def _as(x) -> Number:
    a = np.asarray(x, dtype=float)
    return float(a) if a.ndim == 0 else a


def _down(x: Number, ulps: int = 1) -> Number:
    for _ in range(ulps):
        x = np.nextafter(x, -np.inf)
    return _as(x)


def _up(x: Number, ulps: int = 1) -> Number:
    for _ in range(ulps):
        x = np.nextafter(x, np.inf)
    return _as(x)


class Interval:
    """Closed interval ``[lo, hi]`` (or a batch of them)."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        lo, hi = _as(lo), _as(hi)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("interval endpoint is NaN")
        if np.any(lo > hi):
            raise ValueError(f"empty interval: lo={lo!r} > hi={hi!r}")
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> Number:
        return _as(np.subtract(self.hi, self.lo))

    @property
    def mid(self) -> Number:
        return _as(0.5 * (np.asarray(self.lo) + np.asarray(self.hi)))

    def contains(self, x) -> Union[bool, np.ndarray]:
        r = np.logical_and(np.asarray(self.lo) <= x, x <= np.asarray(self.hi))
        return bool(r) if np.ndim(r) == 0 else r

    def subset_of(self, other: "Interval") -> bool:
        return bool(np.all(other.lo <= self.lo) and np.all(self.hi <= other.hi))

    def __getitem__(self, idx) -> "Interval":
        return Interval(np.asarray(self.lo)[idx], np.asarray(self.hi)[idx])

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __add__(self, other):
        return iv_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _coerce(other))

    def __rsub__(self, other):
        return iv_sub(_coerce(other), self)

    def __mul__(self, other):
        return iv_mul(self, _coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return iv_neg(self)


IntervalVector = list  # list[Interval], one component per state dimension


def _coerce(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(x)


def iv_add(a: Interval, b: Interval) -> Interval:
    return Interval(_down(np.add(a.lo, b.lo)), _up(np.add(a.hi, b.hi)))


def iv_sub(a: Interval, b: Interval) -> Interval:
    return Interval(_down(np.subtract(a.lo, b.hi)), _up(np.subtract(a.hi, b.lo)))


def iv_neg(a: Interval) -> Interval:
    return Interval(_as(np.negative(a.hi)), _as(np.negative(a.lo)))


def iv_mul(a: Interval, b: Interval) -> Interval:
    p = (
        np.multiply(a.lo, b.lo),
        np.multiply(a.lo, b.hi),
        np.multiply(a.hi, b.lo),
        np.multiply(a.hi, b.hi),
    )
    lo = np.minimum(np.minimum(p[0], p[1]), np.minimum(p[2], p[3]))
    hi = np.maximum(np.maximum(p[0], p[1]), np.maximum(p[2], p[3]))
    return Interval(_down(lo), _up(hi))


def iv_scale(c: float, a: Interval) -> Interval:
    return iv_mul(Interval.point(c), a)


def iv_sqr(a: Interval) -> Interval:
    lo2 = np.multiply(a.lo, a.lo)
    hi2 = np.multiply(a.hi, a.hi)
    straddle = np.logical_and(np.asarray(a.lo) <= 0.0, np.asarray(a.hi) >= 0.0)
    lo = np.where(straddle, 0.0, np.minimum(lo2, hi2))
    hi = np.maximum(lo2, hi2)
    return Interval(np.maximum(_down(lo), 0.0), _up(hi))


def iv_sqrt(a: Interval) -> Interval:
    if np.any(np.asarray(a.lo) < 0.0):
        raise ValueError("sqrt of an interval reaching below zero")
    return Interval(np.maximum(_down(np.sqrt(a.lo)), 0.0), _up(np.sqrt(a.hi)))


def iv_exp(a: Interval) -> Interval:
    with np.errstate(over="ignore"):
        lo = np.maximum(_down(np.exp(a.lo), TRANSCENDENTAL_ULPS), 0.0)
        hi = _up(np.exp(a.hi), TRANSCENDENTAL_ULPS)
    return Interval(lo, hi)


def _hits(lo, hi, phase: float) -> np.ndarray:
    """True where [lo, hi] may contain ``phase + 2*pi*k`` for some integer k.

    Errs towards True: a spurious hit only widens the result.
    """
    k = np.ceil((np.asarray(lo) - phase) / TWO_PI)
    p = phase + TWO_PI * k
    slack = 1e-9 * np.maximum(1.0, np.abs(hi))
    hit = p <= np.asarray(hi) + slack
    # the candidate just below lo may also qualify after rounding
    p_prev = p - TWO_PI
    hit |= p_prev >= np.asarray(lo) - slack
    return hit


def _periodic(a: Interval, fn, max_phase: float, min_phase: float) -> Interval:
    lo = np.asarray(a.lo, dtype=float)
    hi = np.asarray(a.hi, dtype=float)
    flo, fhi = fn(lo), fn(hi)
    rlo = np.minimum(flo, fhi)
    rhi = np.maximum(flo, fhi)
    rhi = np.where(_hits(lo, hi, max_phase), 1.0, rhi)
    rlo = np.where(_hits(lo, hi, min_phase), -1.0, rlo)
    full = (hi - lo >= TWO_PI) | (np.abs(lo) > TRIG_ARG_LIMIT) | (np.abs(hi) > TRIG_ARG_LIMIT)
    rlo = np.where(full, -1.0, rlo)
    rhi = np.where(full, 1.0, rhi)
    rlo = np.maximum(_down(rlo, TRANSCENDENTAL_ULPS), -1.0)
    rhi = np.minimum(_up(rhi, TRANSCENDENTAL_ULPS), 1.0)
    return Interval(rlo, rhi)


def iv_sin(a: Interval) -> Interval:
    return _periodic(a, np.sin, 0.5 * math.pi, -0.5 * math.pi)


def iv_cos(a: Interval) -> Interval:
    return _periodic(a, np.cos, 0.0, math.pi)


def iv_atan2(y: Interval, x: Interval) -> Interval:
    """Range of ``atan2(y, x)`` over the box ``y × x``.

    The angle over a box that avoids the origin and the branch cut is
    extremal at a corner. Boxes touching either get the full range.
    """
    ylo, yhi = np.asarray(y.lo, float), np.asarray(y.hi, float)
    xlo, xhi = np.asarray(x.lo, float), np.asarray(x.hi, float)
    corners = np.stack(
        [np.arctan2(ylo, xlo), np.arctan2(ylo, xhi), np.arctan2(yhi, xlo), np.arctan2(yhi, xhi)]
    )
    rlo, rhi = corners.min(axis=0), corners.max(axis=0)
    cut = (xlo <= 0.0) & (ylo <= 0.0) & (yhi >= 0.0)
    rlo = np.where(cut, -math.pi, rlo)
    rhi = np.where(cut, math.pi, rhi)
    pi_hi = _up(math.pi)
    rlo = np.maximum(_down(rlo, TRANSCENDENTAL_ULPS), -pi_hi)
    rhi = np.minimum(_up(rhi, TRANSCENDENTAL_ULPS), pi_hi)
    return Interval(rlo, rhi)


_UNARY = {
    "sin": iv_sin,
    "cos": iv_cos,
    "exp": iv_exp,
    "neg": iv_neg,
    "sqr": iv_sqr,
    "sqrt": iv_sqrt,
}


def iv_elem(fn: str, a, b: Interval | None = None) -> Interval:
    """Apply an elementary function by name.

    ``atan2`` takes the pair ``(y, x)`` either as ``a, b`` or as a tuple in ``a``.
    """
    if fn == "atan2":
        if b is None:
            a, b = a
        return iv_atan2(a, b)
    try:
        return _UNARY[fn](a)
    except KeyError:
        raise ValueError(f"unknown elementary function {fn!r}") from None


def hull_of(values: Sequence[float]) -> Interval:
    return Interval(min(values), max(values))
