import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barrier_reach.barrier import QuadraticCertificate, evaluate, lie_derivative
from barrier_reach.dynamics import ControlInput, car, lin_real, linear_model
from barrier_reach.geometry import (
    HyperBox,
    RegionComplement,
    bloat,
    box_interval_hull,
    octagon_hull,
)
from barrier_reach.verifier import (
    Condition,
    Status,
    VerificationProblem,
    certify,
    find_counterexample_point,
    problem_from_json,
    problem_to_json,
    violates,
)

CIRCLE = QuadraticCertificate.from_parts(-1.0, [0, 0], {(0, 0): 1.0, (1, 1): 1.0})
DOMAIN = HyperBox([-5, -5], [5, 5])


def circle_problem(init, cert=CIRCLE, budget=200_000):
    rng = np.random.default_rng(0)
    disk = rng.uniform(-1, 1, size=(4000, 2))
    disk = disk[evaluate(CIRCLE, disk) <= 0]
    unsafe = RegionComplement(bloat(octagon_hull(disk), 1.5), DOMAIN)
    working = octagon_hull(HyperBox([-2, -2], [2, 2]).corners())
    return VerificationProblem(lin_real(), None, cert, init, unsafe, working, budget=budget)


def fuzz_violations(problem, count, rng):
    """Count sampled points that violate any condition, by plain float evaluation."""
    bad = 0
    pts = problem.init.sample(rng, count)
    bad += int(np.sum(evaluate(problem.cert, pts) > 0))
    wbox = problem.working.bounding_box()
    pts = wbox.sample(rng, count)
    pts = pts[problem.working.contains(pts)]
    if problem.training_mode:
        unsafe = problem.unsafe.contains(pts)
    else:
        unsafe = np.zeros(len(pts), dtype=bool)
        for ob in problem.unsafe:
            unsafe |= np.all((ob.lower <= pts) & (pts <= ob.upper), axis=1)
    bad += int(np.sum(evaluate(problem.cert, pts[unsafe]) <= 0))
    # zero band: project samples onto the level set along the gradient
    b = evaluate(problem.cert, pts)
    band = pts[np.abs(b) <= 1e-3]
    bdot = lie_derivative(problem.cert, problem.model, band, problem.control) if len(band) else []
    bad += int(np.sum(np.asarray(bdot) > -problem.gamma))
    return bad


def test_valid_example():
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]))
    out = certify(p)
    assert out.status is Status.VALID
    assert fuzz_violations(p, 100_000, np.random.default_rng(1)) == 0


def test_init_counterexample_example():
    p = circle_problem(HyperBox([0.9, 0.9], [1.1, 1.1]))
    out = certify(p)
    assert out.status is Status.COUNTEREXAMPLE
    assert out.violated is Condition.INIT
    assert evaluate(CIRCLE, out.witness) > 0
    assert violates(p, Condition.INIT, out.witness)


def test_budget_one_unknown():
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]), budget=1)
    out = certify(p)
    assert out.status is Status.UNKNOWN and out.boxes_explored == 1


def test_init_outside_working_rejected():
    with pytest.raises(ValueError):
        certify(circle_problem(HyperBox([1.5, 1.5], [2.5, 2.5])))


def test_find_point_examples():
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]))
    hot = box_interval_hull(HyperBox([1.5, 1.5], [1.8, 1.8]))
    # the init condition is judged on the init box; use a problem whose init is hot
    hot_problem = circle_problem(HyperBox([1.5, 1.5], [1.8, 1.8]))
    w = find_counterexample_point(hot, Condition.INIT, hot_problem)
    assert w is not None and evaluate(CIRCLE, w) > 0
    assert find_counterexample_point(
        box_interval_hull(HyperBox([0.0, 0.0], [0.2, 0.2])), Condition.LIE, p
    ) is None
    outward = linear_model("outward", np.eye(2))
    p_out = VerificationProblem(
        outward, None, CIRCLE, HyperBox([-0.1, -0.1], [0.1, 0.1]), p.unsafe, p.working
    )
    w = find_counterexample_point(box_interval_hull(HyperBox([0.9, -0.1], [1.1, 0.1])), Condition.LIE, p_out)
    assert w is not None
    assert abs(evaluate(CIRCLE, w)) <= 1e-3
    assert lie_derivative(CIRCLE, outward, w) == pytest.approx(2.0, abs=0.01)
    assert violates(p_out, Condition.LIE, w)


def test_planning_mode_obstacle():
    # an obstacle inside the zero sublevel set must be found
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]))
    p.unsafe = [HyperBox([0.5, 0.5], [0.7, 0.7])]
    out = certify(p)
    assert out.status is Status.COUNTEREXAMPLE and out.violated is Condition.UNSAFE
    assert violates(p, Condition.UNSAFE, out.witness)
    p.unsafe = [HyperBox([1.2, 1.2], [3.0, 3.0])]
    assert certify(p).status is Status.VALID
    p.unsafe = []
    assert certify(p).status is Status.VALID


def test_car_problem_round_trip():
    u = ControlInput(2.0, 0.05)
    cert = QuadraticCertificate(3, np.r_[-1.0, np.zeros(3), 1.0, 0, 0, 1.0, 0, 0.0])
    working = octagon_hull(HyperBox([-2, -2, -1], [2, 2, 1]).corners())
    p = VerificationProblem(car(), u, cert, HyperBox([-0.1] * 3, [0.1] * 3), [], working, budget=500)
    back = problem_from_json(problem_to_json(p))
    a, b = certify(p), certify(back)
    assert a.status == b.status and a.boxes_explored == b.boxes_explored


def test_deterministic_and_threaded_status():
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]))
    a, b = certify(p), certify(p)
    assert a.boxes_explored == b.boxes_explored
    assert certify(p, threads=2).status is a.status


def random_cert(rng):
    # random ellipse around a random center, possibly rotated
    center = rng.uniform(-0.5, 0.5, 2)
    r = rng.uniform(0.5, 1.2)
    A = rng.normal(size=(2, 2)) * 0.2 + np.eye(2)
    Q = A.T @ A
    lin = -2 * Q @ center
    const = float(center @ Q @ center) - r**2
    return QuadraticCertificate.from_forms(const, lin, Q)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_budget(seed):
    rng = np.random.default_rng(seed)
    cert = random_cert(rng)
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]), cert=cert, budget=50)
    small = certify(p)
    p.budget = 5000
    big = certify(p)
    if small.status is not Status.UNKNOWN:
        assert big.status is small.status


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_soundness_and_witnesses(seed):
    rng = np.random.default_rng(seed)
    cert = random_cert(rng)
    p = circle_problem(HyperBox([-0.1, -0.1], [0.1, 0.1]), cert=cert, budget=20_000)
    out = certify(p)
    if out.status is Status.VALID:
        assert fuzz_violations(p, 20_000, rng) == 0
    elif out.status is Status.COUNTEREXAMPLE:
        assert violates(p, out.violated, out.witness)
