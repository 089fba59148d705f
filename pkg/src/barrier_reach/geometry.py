"""Boxes, generalized octagons and region complements."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .interval import Interval, IntervalVector, _down, _up


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValueError(f"dimension mismatch: expected {n}, got {x.shape[-1]}")
    return x


@dataclass(frozen=True, eq=False)
class HyperBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lower), _frozen(self.upper)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ValueError("box bounds must be equal-length nonempty vectors")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError(f"invalid box bounds {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_center(cls, center, half_widths) -> "HyperBox":
        c = np.asarray(center, dtype=float)
        h = np.asarray(half_widths, dtype=float)
        return cls(c - h, c + h)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))))

    def contains_box(self, other: "HyperBox") -> bool:
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))

    def intersect(self, other: "HyperBox") -> "HyperBox | None":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        if np.any(lo > hi):
            return None
        return HyperBox(lo, hi)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HyperBox)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self) -> str:
        return f"HyperBox({self.lower.tolist()}, {self.upper.tolist()})"

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "HyperBox":
        return cls(d["lower"], d["upper"])


def box_membership(x, b: HyperBox) -> bool:
    x = _check_point(x, b.dim)
    return bool(np.all(b.lower <= x) and np.all(x <= b.upper))


def box_interval_hull(b: HyperBox) -> IntervalVector:
    return [Interval(lo, hi) for lo, hi in zip(b.lower, b.upper)]


# ---------------------------------------------------------------------------
# octagons


def _term(sign: int, i: int) -> str:
    return f"{'+' if sign > 0 else '-'}x{i}"


@lru_cache(maxsize=None)
def _template(n: int) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Canonical direction names, direction matrix and index of each negation."""
    names: list[str] = []
    rows: list[np.ndarray] = []
    for i in range(n):
        for s in (1, -1):
            d = np.zeros(n)
            d[i] = s
            names.append(_term(s, i))
            rows.append(d)
    for i in range(n):
        for j in range(i + 1, n):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                d = np.zeros(n)
                d[i], d[j] = si, sj
                names.append(_term(si, i) + _term(sj, j))
                rows.append(d)
    dirs = np.array(rows)
    neg = np.array([int(np.flatnonzero(np.all(dirs == -d, axis=1))[0]) for d in dirs])
    dirs.setflags(write=False)
    neg.setflags(write=False)
    return tuple(names), dirs, neg


def octagon_directions(n: int) -> np.ndarray:
    return _template(n)[1]


def _project(points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Dot products with ±1/0 direction rows.

    Built from explicit signed sums so that hull construction and
    membership tests round identically.
    """
    out = np.empty(points.shape[:-1] + (dirs.shape[0],))
    for k, d in enumerate(dirs):
        idx = np.flatnonzero(d)
        acc = d[idx[0]] * points[..., idx[0]]
        for i in idx[1:]:
            acc = acc + d[i] * points[..., i]
        out[..., k] = acc
    return out


class Containment(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    STRADDLES = "straddles"


@dataclass(frozen=True, eq=False)
class OctagonRegion:
    """``{x : d·x <= s_d}`` over the ±e_i and ±e_i±e_j template."""

    dim: int
    offsets: np.ndarray

    def __post_init__(self):
        s = _frozen(self.offsets)
        if s.shape != (len(_template(self.dim)[0]),):
            raise ValueError("offset vector does not cover the octagon template")
        if not np.all(np.isfinite(s)):
            raise ValueError("octagon offsets must be finite")
        object.__setattr__(self, "offsets", s)

    @classmethod
    def from_support(cls, dim: int, support: dict) -> "OctagonRegion":
        names = _template(dim)[0]
        missing = set(names) - set(support)
        if missing:
            raise ValueError(f"support map misses directions {sorted(missing)}")
        return cls(dim, np.array([support[k] for k in names]))

    @property
    def support(self) -> dict:
        return dict(zip(_template(self.dim)[0], self.offsets.tolist()))

    @property
    def directions(self) -> np.ndarray:
        return _template(self.dim)[1]

    @property
    def half_extents(self) -> np.ndarray:
        neg = _template(self.dim)[2]
        return 0.5 * (self.offsets + self.offsets[neg])

    def bounding_box(self) -> HyperBox:
        # interval rows come first: +x0, -x0, +x1, -x1, ...
        s = self.offsets[: 2 * self.dim]
        return HyperBox(-s[1::2], s[0::2])

    def is_empty(self) -> bool:
        neg = _template(self.dim)[2]
        if np.any(self.offsets + self.offsets[neg] < 0):
            return True
        from scipy.optimize import linprog

        res = linprog(
            np.zeros(self.dim),
            A_ub=self.directions,
            b_ub=self.offsets,
            bounds=[(None, None)] * self.dim,
            method="highs",
        )
        return res.status == 2

    def contains(self, points) -> np.ndarray:
        """Vectorized membership for an ``(m, n)`` array of points."""
        pts = _check_point(points, self.dim)
        return np.all(_project(pts, self.directions) <= self.offsets, axis=-1)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OctagonRegion)
            and self.dim == other.dim
            and np.array_equal(self.offsets, other.offsets)
        )

    def __repr__(self) -> str:
        return f"OctagonRegion(dim={self.dim}, support={self.support})"

    def to_json(self) -> dict:
        return {"dim": self.dim, "support": self.support}

    @classmethod
    def from_json(cls, d: dict) -> "OctagonRegion":
        return cls.from_support(int(d["dim"]), d["support"])


def octagon_hull(points) -> OctagonRegion:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[0] == 0:
        raise ValueError("octagon hull of an empty point set")
    n = pts.shape[1]
    return OctagonRegion(n, _project(pts, octagon_directions(n)).max(axis=0))


def bloat(region: OctagonRegion, eps: float) -> OctagonRegion:
    """Grow every offset by ``eps`` times the half-extent along its direction."""
    if eps < 0:
        raise ValueError("bloating factor must be nonnegative")
    if eps == 0:
        return region
    w = np.maximum(region.half_extents, 0.0)
    return OctagonRegion(region.dim, region.offsets + eps * w)


def clip_to_box(region: OctagonRegion, box: HyperBox) -> OctagonRegion:
    """Tighten the axis rows so the region's bounding box lies inside ``box``."""
    s = region.offsets.copy()
    n = region.dim
    s[0 : 2 * n : 2] = np.minimum(s[0 : 2 * n : 2], box.upper)
    s[1 : 2 * n : 2] = np.minimum(s[1 : 2 * n : 2], -box.lower)
    return OctagonRegion(n, s)


def octagon_membership(x, o: OctagonRegion) -> bool:
    x = _check_point(x, o.dim)
    if x.ndim != 1:
        raise ValueError("expected a single state vector")
    return bool(o.contains(x))


def classify_boxes(lo: np.ndarray, hi: np.ndarray, o: OctagonRegion) -> np.ndarray:
    """Batch octagon test for boxes given as ``(m, n)`` bound arrays.

    Returns int codes: 1 inside, -1 outside, 0 straddles.
    """
    dirs = o.directions
    m = lo.shape[0]
    inside = np.ones(m, dtype=bool)
    outside = np.zeros(m, dtype=bool)
    for k, d in enumerate(dirs):
        idx = np.flatnonzero(d)
        # interval of d·x with outward rounding
        plo = np.zeros(m)
        phi = np.zeros(m)
        for i in idx:
            if d[i] > 0:
                plo, phi = _down(plo + lo[:, i]), _up(phi + hi[:, i])
            else:
                plo, phi = _down(plo - hi[:, i]), _up(phi - lo[:, i])
        inside &= phi <= o.offsets[k]
        outside |= plo > o.offsets[k]
    return np.where(outside, -1, np.where(inside, 1, 0))


def octagon_interval_test(box: IntervalVector, o: OctagonRegion) -> Containment:
    if len(box) != o.dim:
        raise ValueError("dimension mismatch between box and octagon")
    lo = np.array([[float(c.lo) for c in box]])
    hi = np.array([[float(c.hi) for c in box]])
    code = int(classify_boxes(lo, hi, o)[0])
    return {1: Containment.INSIDE, -1: Containment.OUTSIDE, 0: Containment.STRADDLES}[code]


@dataclass(frozen=True, eq=False)
class RegionComplement:
    """``domain \\ inner``: the unsafe set used when building training data."""

    inner: OctagonRegion
    domain: HyperBox

    def __post_init__(self):
        if self.inner.dim != self.domain.dim:
            raise ValueError("complement dimension mismatch")
        if not self.domain.contains_box(self.inner.bounding_box()):
            raise ValueError("inner region is not contained in the domain")

    @property
    def dim(self) -> int:
        return self.domain.dim

    def contains(self, points) -> np.ndarray:
        pts = _check_point(points, self.dim)
        in_dom = np.all((self.domain.lower <= pts) & (pts <= self.domain.upper), axis=-1)
        return in_dom & ~self.inner.contains(pts)

    def slabs(self) -> list[HyperBox]:
        """Split ``domain \\ bbox(inner)`` into at most ``2n`` boxes."""
        core = self.inner.bounding_box()
        lo = self.domain.lower.copy()
        hi = self.domain.upper.copy()
        out = []
        for i in range(self.dim):
            if lo[i] < core.lower[i]:
                a, b = lo.copy(), hi.copy()
                b[i] = core.lower[i]
                out.append(HyperBox(a, b))
            if core.upper[i] < hi[i]:
                a, b = lo.copy(), hi.copy()
                a[i] = core.upper[i]
                out.append(HyperBox(a, b))
            lo[i], hi[i] = core.lower[i], core.upper[i]
        return out

    def to_json(self) -> dict:
        return {"inner": self.inner.to_json(), "domain": self.domain.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "RegionComplement":
        return cls(OctagonRegion.from_json(d["inner"]), HyperBox.from_json(d["domain"]))


def complement_membership(x, c: RegionComplement) -> bool:
    x = _check_point(x, c.dim)
    if x.ndim != 1:
        raise ValueError("expected a single state vector")
    return bool(c.contains(x))


def sample_octagon(o: OctagonRegion, rng: np.random.Generator, count: int, max_tries: int = 50) -> np.ndarray:
    """Uniform samples from the octagon by rejection from its bounding box."""
    box = o.bounding_box()
    out: list[np.ndarray] = []
    got = 0
    for _ in range(max_tries):
        cand = box.sample(rng, max(2 * count, 16))
        keep = cand[o.contains(cand)]
        out.append(keep)
        got += len(keep)
        if got >= count:
            break
    pts = np.concatenate(out) if out else np.empty((0, o.dim))
    return pts[:count]


def union_bounds(boxes: Iterable[HyperBox]) -> HyperBox:
    boxes = list(boxes)
    return HyperBox(
        np.min([b.lower for b in boxes], axis=0), np.max([b.upper for b in boxes], axis=0)
    )


def as_box_arrays(boxes: Sequence[HyperBox]) -> tuple[np.ndarray, np.ndarray]:
    if not boxes:
        return np.empty((0, 0)), np.empty((0, 0))
    return np.array([b.lower for b in boxes]), np.array([b.upper for b in boxes])
