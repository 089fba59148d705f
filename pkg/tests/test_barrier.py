from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from barrier_reach import expr as ex
from barrier_reach.barrier import (
    QuadraticCertificate,
    coeff_count,
    evaluate,
    flip_signs,
    gradient,
    interval_evaluate,
    interval_lie,
    lie_derivative,
    lie_features,
    monomials,
    translate,
)
from barrier_reach.dynamics import ControlInput, car, integrate, lin_complex, lin_real, linear_model
from barrier_reach.geometry import HyperBox, box_interval_hull

CIRCLE = QuadraticCertificate.from_parts(-1.0, [0, 0], {(0, 0): 1.0, (1, 1): 1.0})
NORM2 = QuadraticCertificate.from_parts(0.0, [0, 0], {(0, 0): 1.0, (1, 1): 1.0})


def poly_oracle(coeffs, x):
    """Explicit graded-lex expansion in rational arithmetic."""
    n = len(x)
    xs = [Fraction(v) for v in x]
    terms = [Fraction(1)] + xs + [xs[i] * xs[j] for i in range(n) for j in range(i, n)]
    return sum(Fraction(c) * t for c, t in zip(coeffs, terms))


def test_coefficient_order():
    c = QuadraticCertificate(2, [1, 2, 3, 4, 5, 6])
    x = np.array([0.5, -2.0])
    assert np.allclose(monomials(x), [1, 0.5, -2, 0.25, -1.0, 4.0])
    assert evaluate(c, x) == float(poly_oracle(c.coeffs, x))
    assert coeff_count(3) == 10
    with pytest.raises(ValueError):
        QuadraticCertificate(2, [1, 2, 3])
    with pytest.raises(ValueError):
        QuadraticCertificate(2, [1, 2, 3, 4, 5, np.nan])


def test_evaluate_examples():
    assert evaluate(CIRCLE, [0, 0]) == -1
    assert evaluate(QuadraticCertificate.zero(2), [3.0, -4.0]) == 0
    assert evaluate(CIRCLE, [1.1, 1.1]) == pytest.approx(float(poly_oracle(CIRCLE.coeffs, [1.1, 1.1])))
    assert float(poly_oracle(CIRCLE.coeffs, [Fraction(11, 10)] * 2)) == pytest.approx(1.42)
    with pytest.raises(ValueError):
        evaluate(CIRCLE, [1.0, 2.0, 3.0])


def test_gradient_examples():
    assert np.allclose(gradient(NORM2, [1, 1]), [2, 2])
    const = QuadraticCertificate(3, np.r_[5.0, np.zeros(9)])
    assert np.array_equal(gradient(const, [1, 2, 3]), [0, 0, 0])


def test_gradient_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(100):
        c = QuadraticCertificate(3, rng.normal(size=10))
        x = rng.uniform(-3, 3, 3)
        fd = np.array([(evaluate(c, x + h * e) - evaluate(c, x - h * e)) / (2 * h) for e in np.eye(3)])
        assert np.max(np.abs(fd - gradient(c, x))) <= 1e-6


def test_lie_derivative_examples():
    assert lie_derivative(NORM2, lin_real(), [1, 1]) == pytest.approx(-6.0, abs=1e-15)
    zero_field = linear_model("zero", np.zeros((2, 2)))
    assert lie_derivative(CIRCLE, zero_field, [0.7, -0.2]) == 0


def test_lie_derivative_along_flow_first_order():
    x0 = np.array([0.8, -0.6])
    bdot = lie_derivative(NORM2, lin_real(), x0)
    errs = []
    hs = [1e-2, 1e-3, 1e-4]
    for h in hs:
        x1 = integrate(lin_real(), x0, None, h, h).final
        errs.append(abs((evaluate(NORM2, x1) - evaluate(NORM2, x0)) / h - bdot))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - 1) < 0.2


def test_interval_evaluate_examples():
    box = box_interval_hull(HyperBox([-0.1, -0.1], [0.1, 0.1]))
    r = interval_evaluate(CIRCLE, box)
    assert r.lo <= -1 and r.hi >= -0.98 and r.hi < 0
    p = np.array([0.3, -0.4])
    pr = interval_evaluate(CIRCLE, box_interval_hull(HyperBox(p, p)))
    assert pr.contains(evaluate(CIRCLE, p)) and pr.hi - pr.lo < 1e-12
    lr = interval_lie(NORM2, lin_real(), box_interval_hull(HyperBox([0.5, 0.5], [1, 1])))
    assert lr.hi < 0 and lr.hi >= -3.0 - 1e-12


def test_car_interval_lie_contains_samples():
    rng = np.random.default_rng(2)
    u = ControlInput(4.0, 0.1)
    c = QuadraticCertificate(3, rng.normal(size=10))
    box = HyperBox([-1, 0, 0.5], [0, 1, 2.5])
    r = interval_lie(c, car(), box_interval_hull(box), u)
    pts = box.sample(rng, 2000)
    vals = lie_derivative(c, car(), pts, u)
    assert np.all((r.lo <= vals) & (vals <= r.hi))


def test_lie_features_match_lie_derivative():
    rng = np.random.default_rng(4)
    for model, u in ((lin_real(), None), (lin_complex(), None), (car(), ControlInput(2.0, -0.05))):
        c = QuadraticCertificate(model.n, rng.normal(size=coeff_count(model.n)))
        x = rng.uniform(-3, 3, size=(50, model.n))
        assert np.allclose(lie_features(model, x, u) @ c.coeffs, lie_derivative(c, model, x, u), atol=1e-12)


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(5)
    c = QuadraticCertificate(3, rng.normal(size=10) / 3)
    import json

    back = QuadraticCertificate.from_json(json.loads(json.dumps(c.to_json())))
    assert back == c


def test_translate_and_flip():
    rng = np.random.default_rng(6)
    c = QuadraticCertificate(3, rng.normal(size=10))
    off = np.array([1.5, -2.0, 0.0])
    t = translate(c, off)
    x = rng.normal(size=(20, 3))
    assert np.allclose(evaluate(t, x + off), evaluate(c, x))
    f = flip_signs(c, [1, -1, -1])
    assert np.allclose(evaluate(f, x), evaluate(c, x * [1, -1, -1]))


coeff_vectors = st.lists(st.floats(-10, 10), min_size=6, max_size=6)
points = st.lists(st.floats(-5, 5), min_size=2, max_size=2)


@given(coeff_vectors, st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0, 2), st.floats(0, 2))
def test_interval_evaluate_containment(coeffs, corner, w0, w1):
    c = QuadraticCertificate(2, coeffs)
    lo = np.array(corner[:2])
    box = HyperBox(lo, lo + [w0, w1])
    r = interval_evaluate(c, box_interval_hull(box))
    pts = box.sample(np.random.default_rng(0), 200)
    v = evaluate(c, pts)
    assert np.all((r.lo <= v) & (v <= r.hi))


@given(coeff_vectors, coeff_vectors, points)
def test_linearity_in_coefficients(a1, a2, x):
    c1, c2 = QuadraticCertificate(2, a1), QuadraticCertificate(2, a2)
    # exact in rational arithmetic
    xs = [Fraction(v) for v in x]
    lhs = ex.evaluate((c1 + c2).expression(), xs, backend=ex.FRACTION)
    s1 = poly_oracle(np.asarray(a1) + np.asarray(a2), x)
    assert lhs == s1
    assert evaluate(c1 + c2, x) == pytest.approx(evaluate(c1, x) + evaluate(c2, x), rel=1e-12, abs=1e-9)


@given(coeff_vectors, points)
def test_lie_equals_gradient_dot_field(coeffs, x):
    c = QuadraticCertificate(2, coeffs)
    for m in (lin_real(), lin_complex()):
        ref = float(gradient(c, x) @ m(np.asarray(x)))
        assert lie_derivative(c, m, x) == pytest.approx(ref, rel=1e-12, abs=1e-12)
