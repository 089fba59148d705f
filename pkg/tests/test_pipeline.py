import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barrier_reach.barrier import QuadraticCertificate
from barrier_reach.dynamics import integrate_many, lin_complex, lin_real
from barrier_reach.geometry import HyperBox, octagon_hull
from barrier_reach.pipeline import (
    LINEAR_DOMAIN,
    ReachSet,
    RegionError,
    WorkingRegionSpec,
    build_working_region,
    first_exit,
    reach_membership,
    reach_set,
    simulate_cloud,
)

INIT = HyperBox([0.9, -0.1], [1.1, 0.1])
CIRCLE = QuadraticCertificate.from_parts(-1.0, [0, 0], {(0, 0): 1.0, (1, 1): 1.0})


def test_working_region_contains_cloud_and_origin():
    spec = WorkingRegionSpec(LINEAR_DOMAIN, horizon=10.0, eps=0.1)
    region, comp = build_working_region(lin_real(), None, INIT, spec)
    _, states = simulate_cloud(lin_real(), None, INIT, spec)
    assert np.all(region.contains(states.reshape(-1, 2)))
    assert region.contains(np.zeros((1, 2)))[0]
    assert not comp.contains(states.reshape(-1, 2)).any()


def test_degenerate_point_two_states():
    p = HyperBox([1.0, 1.0], [1.0, 1.0])
    spec = WorkingRegionSpec(LINEAR_DOMAIN, interior_samples=0, horizon=0.01, eps=0.0)
    region, _ = build_working_region(lin_real(), None, p, spec)
    _, states = integrate_many(lin_real(), [[1.0, 1.0]], None, 0.01, 0.01)
    assert region == octagon_hull(states.reshape(-1, 2))


def test_zero_eps_is_raw_hull():
    spec = WorkingRegionSpec(LINEAR_DOMAIN, eps=0.0)
    region, _ = build_working_region(lin_real(), None, INIT, spec)
    _, states = simulate_cloud(lin_real(), None, INIT, spec)
    assert region == octagon_hull(states.reshape(-1, 2))


def test_escape_names_start():
    spec = WorkingRegionSpec(LINEAR_DOMAIN, horizon=30.0)
    init = HyperBox([2.5, 2.5], [3.0, 3.0])
    with pytest.raises(RegionError) as err:
        build_working_region(lin_complex(), None, init, spec)
    assert init.contains_box(HyperBox(err.value.start, err.value.start))
    assert str(list(err.value.start)) in str(err.value) or "leaves" in str(err.value)


def test_bbox_complement():
    spec = WorkingRegionSpec(LINEAR_DOMAIN, complement="bbox")
    region, comp = build_working_region(lin_real(), None, INIT, spec)
    assert comp.domain == region.bounding_box()


def test_reach_membership_examples():
    working = octagon_hull(HyperBox([-2, -2], [2, 2]).corners())
    rs = reach_set(CIRCLE, working)
    assert reach_membership(rs, [np.sqrt(0.5), 0.0])  # B = -0.5
    assert not reach_membership(ReachSet(CIRCLE.scaled(-1), working), [3.0, 0.0])
    assert reach_membership(rs, [1.0, 0.0])  # on the level set
    assert not reach_membership(rs, [1.5, 0.0])
    with pytest.raises(ValueError):
        reach_membership(rs, [0.0, 0.0, 0.0])


def test_reach_set_json():
    working = octagon_hull(HyperBox([-2, -2], [2, 2]).corners())
    rs = reach_set(CIRCLE, working)
    back = ReachSet.from_json(rs.to_json())
    assert back.cert == rs.cert and back.working == rs.working


def test_first_exit():
    region = octagon_hull(HyperBox([0, 0], [1, 1]).corners())
    states = np.array([[0.5, 0.5], [0.9, 0.9], [1.2, 0.5], [0.5, 0.5]])
    assert first_exit(region, states) == 2
    assert first_exit(region, states[:2]) == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["lin-real", "lin-complex"]))
def test_sample_containment_and_complement_consistency(seed, name):
    from barrier_reach.dynamics import get_model

    rng = np.random.default_rng(seed)
    init = HyperBox.from_center(rng.uniform(-1.5, 1.5, 2), rng.uniform(0.05, 0.3, 2))
    spec = WorkingRegionSpec(LINEAR_DOMAIN, eps=float(rng.uniform(0, 1)))
    model = get_model(name)
    region, comp = build_working_region(model, None, init, spec, rng_seed=seed)
    _, states = simulate_cloud(model, None, init, spec, rng_seed=seed)
    pts = states.reshape(-1, 2)
    raw = octagon_hull(pts)
    assert np.all(raw.contains(pts)) and np.all(region.contains(pts))
    probe = LINEAR_DOMAIN.sample(rng, 2000)
    assert not np.any(region.contains(probe) & comp.contains(probe))
