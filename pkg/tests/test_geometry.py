import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from barrier_reach.geometry import (
    Containment,
    HyperBox,
    OctagonRegion,
    RegionComplement,
    bloat,
    box_interval_hull,
    box_membership,
    clip_to_box,
    complement_membership,
    octagon_directions,
    octagon_hull,
    octagon_interval_test,
    octagon_membership,
)

UNIT_SQUARE = [(0, 0), (1, 0), (0, 1), (1, 1)]


def support_oracle(points, n):
    """Direction maxima computed by explicit enumeration of template vectors."""
    out = {}
    for i in range(n):
        for s, tag in ((1, "+"), (-1, "-")):
            out[f"{tag}x{i}"] = max(s * p[i] for p in points)
    for i, j in itertools.combinations(range(n), 2):
        for si, sj in itertools.product((1, -1), repeat=2):
            key = f"{'+' if si > 0 else '-'}x{i}{'+' if sj > 0 else '-'}x{j}"
            out[key] = max(si * p[i] + sj * p[j] for p in points)
    return out


def test_hull_unit_square():
    o = octagon_hull(UNIT_SQUARE)
    expected = support_oracle(UNIT_SQUARE, 2)
    assert o.support == pytest.approx(expected)
    assert o.support["+x0+x1"] == 2 and o.support["-x0-x1"] == 0
    assert o.support["+x0-x1"] == 1 and o.support["-x0+x1"] == 1


def test_hull_single_point():
    p = (0.3, -1.2)
    o = octagon_hull([p])
    assert np.allclose(o.half_extents, 0)
    assert octagon_membership(p, o)
    assert not octagon_membership((0.3, -1.1), o)


def test_hull_diagonal_segment():
    pts = [(t, t) for t in np.linspace(0, 1, 11)]
    o = octagon_hull(pts)
    expected = support_oracle(pts, 2)
    assert o.support["+x0-x1"] == expected["+x0-x1"] == 0
    assert o.support["-x0+x1"] == expected["-x0+x1"] == 0


def test_hull_empty_rejected():
    with pytest.raises(ValueError):
        octagon_hull(np.zeros((0, 2)))


def test_template_size():
    for n in (1, 2, 3, 4):
        assert octagon_directions(n).shape == (2 * n + 4 * n * (n - 1) // 2, n)


def test_bloat_examples():
    o = octagon_hull(UNIT_SQUARE)
    b = bloat(o, 0.1).support
    assert b["+x0"] == pytest.approx(1.05) and b["-x0"] == pytest.approx(0.05)
    assert b["+x0+x1"] == pytest.approx(2.1) and b["-x0-x1"] == pytest.approx(0.1)
    assert bloat(o, 0.0) == o
    point = octagon_hull([(2.0, 3.0)])
    assert bloat(point, 1.0) == point
    with pytest.raises(ValueError):
        bloat(o, -0.1)


def test_membership_examples():
    sq = HyperBox([0, 0], [1, 1])
    assert box_membership((0.5, 0.5), sq)
    assert not box_membership((1.5, 0.5), sq)
    assert box_membership((1.0, 0.3), sq)
    assert octagon_membership((1.0, 0.3), octagon_hull(UNIT_SQUARE))
    with pytest.raises(ValueError):
        box_membership((1.0, 0.3, 0.0), sq)


def test_interval_test_examples():
    o = octagon_hull(UNIT_SQUARE)
    t = lambda lo, hi: octagon_interval_test(box_interval_hull(HyperBox(lo, hi)), o)
    assert t([0.1, 0.1], [0.2, 0.2]) is Containment.INSIDE
    assert t([2, 2], [3, 3]) is Containment.OUTSIDE
    assert t([0.5, 0], [1.5, 0.5]) is Containment.STRADDLES


def test_complement_membership():
    inner = octagon_hull(UNIT_SQUARE)
    c = RegionComplement(inner, HyperBox([-2, -2], [2, 2]))
    assert complement_membership((1.5, 1.5), c)
    assert not complement_membership((0.5, 0.5), c)
    assert not complement_membership((3.0, 0.0), c)


def test_json_round_trip():
    o = bloat(octagon_hull(np.random.default_rng(1).normal(size=(20, 3))), 0.3)
    assert OctagonRegion.from_json(o.to_json()) == o
    b = HyperBox([0, 1], [2, 3])
    assert HyperBox.from_json(b.to_json()) == b
    assert set(o.to_json()["support"]) >= {"+x0", "-x2", "+x0+x1", "-x1-x2", "+x0-x2"}


def test_clip_to_box():
    o = bloat(octagon_hull(UNIT_SQUARE), 4.0)
    c = clip_to_box(o, HyperBox([-1, -1], [1.5, 1.5]))
    bb = c.bounding_box()
    assert np.all(bb.lower >= -1) and np.all(bb.upper <= 1.5)


point_clouds = st.integers(0, 2**31).map(
    lambda s: np.random.default_rng(s).normal(size=(np.random.default_rng(s).integers(1, 30), 3))
)


@given(point_clouds)
def test_hull_soundness(pts):
    o = octagon_hull(pts)
    assert np.all(o.contains(pts))


@given(point_clouds, st.floats(0, 2), st.floats(0, 2), st.integers(0, 2**31))
def test_bloat_monotone(pts, e1, e2, seed):
    e1, e2 = sorted((e1, e2))
    o = octagon_hull(pts)
    small, big = bloat(o, e1), bloat(o, e2)
    probe = np.random.default_rng(seed).normal(scale=3, size=(500, 3))
    a, b, c = o.contains(probe), small.contains(probe), big.contains(probe)
    assert np.all(~a | b) and np.all(~b | c)


@given(point_clouds, st.integers(0, 2**31))
def test_interval_test_corner_consistency(pts, seed):
    o = octagon_hull(pts)
    r = np.random.default_rng(seed)
    lo = r.normal(scale=2, size=3)
    hi = lo + r.uniform(0, 2, size=3)
    verdict = octagon_interval_test(box_interval_hull(HyperBox(lo, hi)), o)
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    inside = o.contains(corners)
    if verdict is Containment.INSIDE:
        assert inside.all()
    if verdict is Containment.OUTSIDE:
        assert not inside.any()


@given(point_clouds, st.integers(0, 2**31))
def test_complement_consistency(pts, seed):
    inner = bloat(octagon_hull(pts), 0.2)
    bb = inner.bounding_box()
    dom = HyperBox(bb.lower - 1, bb.upper + 1)
    c = RegionComplement(inner, dom)
    probe = dom.sample(np.random.default_rng(seed), 400)
    both = inner.contains(probe) & c.contains(probe)
    assert not both.any()
    assert np.all(inner.contains(probe) | c.contains(probe))
    # slabs plus the inner bounding box cover the complement
    in_slab = np.zeros(len(probe), dtype=bool)
    for s in c.slabs() + [inner.bounding_box()]:
        in_slab |= np.all((s.lower <= probe) & (probe <= s.upper), axis=1)
    assert np.all(in_slab[c.contains(probe)])
