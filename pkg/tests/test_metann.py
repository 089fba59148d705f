import io
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barrier_reach.barrier import QuadraticCertificate, evaluate, flip_signs, translate
from barrier_reach.dynamics import ControlInput, lin_real
from barrier_reach.geometry import HyperBox
from barrier_reach.metann import (
    BOX_ENCODING,
    CAR_ENCODING,
    Dataset,
    EncodingError,
    Mlp,
    SweepItem,
    TrainingPair,
    _activations,
    decode_certificate,
    encode_initial_set,
    forward,
    generate_dataset,
    l1_loss,
    loss_gradients,
    network_for,
    predict,
    refine,
    train,
)
from barrier_reach.pipeline import LINEAR_DOMAIN, WorkingRegionSpec
from barrier_reach.synthesis import SynthesisConfig

FAST = SynthesisConfig(eps_schedule=(0.4, 0.8))
SPEC = WorkingRegionSpec(LINEAR_DOMAIN)


def test_encode_box():
    x, frame = encode_initial_set(HyperBox([0, 2], [1, 4]))
    assert np.array_equal(x, [0.5, 3, 0.5, 1]) and not frame.offset


def test_encode_car_shift_and_reflect():
    u = ControlInput(4.0, 0.1)
    a, fa = encode_initial_set(HyperBox.from_center([7, 3, 1.0], [0.1, 0.2, 0.05]), u, CAR_ENCODING)
    b, _ = encode_initial_set(HyperBox.from_center([0, 0, 1.0], [0.1, 0.2, 0.05]), u, CAR_ENCODING)
    assert np.allclose(a, b) and fa.offset == (7.0, 3.0)
    r, fr = encode_initial_set(
        HyperBox.from_center([0, 0, -1.0], [0.1, 0.2, 0.05]), ControlInput(4.0, -0.1), CAR_ENCODING
    )
    assert fr.reflect and r[1] == pytest.approx(0.1) and r[2] == pytest.approx(1.0)


@pytest.mark.parametrize(
    "center,u",
    [([0, 0, 1.0], ControlInput(0.5, 0.1)), ([0, 0, 1.0], ControlInput(4.0, 0.3))],
)
def test_encode_car_refuses_extrapolation(center, u):
    with pytest.raises(EncodingError):
        encode_initial_set(HyperBox.from_center(center, [0.1, 0.1, 0.05]), u, CAR_ENCODING)
    with pytest.raises(EncodingError):
        encode_initial_set(HyperBox.from_center([0, 0, 1], [0.5, 0.1, 0.05]), ControlInput(4, 0.1), CAR_ENCODING)


def test_forward_identity_relu():
    eye = np.eye(2)
    net = Mlp([2, 2, 2], [eye, eye], [np.zeros(2), np.zeros(2)])
    acts = _activations(net, np.array([[1.0, -1.0]]))
    assert np.array_equal(acts[1][0], [1.0, 0.0])
    assert np.array_equal(forward(net, [1.0, -1.0]), [1.0, 0.0])


def test_forward_zero_weights_gives_bias():
    net = Mlp([3, 4, 2], [np.zeros((4, 3)), np.zeros((2, 4))], [np.ones(4), np.array([0.5, -2.0])])
    assert np.array_equal(forward(net, [1, 2, 3]), [0.5, -2.0])


def test_forward_hand_matrix():
    W = np.array([[1.0, 2.0], [3.0, 4.0]])
    net = Mlp([2, 2], [W], [np.array([0.5, -1.0])])
    # 1*1 + 2*1 + 0.5 = 3.5 ; 3*1 + 4*1 - 1 = 6
    assert np.array_equal(forward(net, [1.0, 1.0]), [3.5, 6.0])
    with pytest.raises(ValueError):
        forward(net, [1.0, 1.0, 1.0])


def test_shape_chain_checked():
    with pytest.raises(ValueError):
        Mlp([2, 3, 2], [np.zeros((3, 2)), np.zeros((3, 3))], [np.zeros(3), np.zeros(2)])


def _const_net(output):
    output = np.asarray(output, dtype=float)
    return Mlp([1, output.size], [np.zeros((output.size, 1))], [output])


def test_l1_loss_examples():
    net = _const_net([1.5, 1.5])
    assert l1_loss(net, [TrainingPair([0.0], [1.0, 2.0])]) == pytest.approx(1.0)
    assert l1_loss(net, [TrainingPair([0.0], [1.5, 1.5])]) == 0
    batch = [TrainingPair([0.0], [1.0, 2.0]), TrainingPair([0.0], [3.0, 0.0])]
    assert l1_loss(net, batch) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        l1_loss(net, [])


def test_train_zero_epochs_unchanged():
    net = network_for(2)
    ds = Dataset([TrainingPair([0.1, 0.2, 0.1, 0.1], np.arange(6.0))], BOX_ENCODING, "lin-real")
    out, hist = train(net, ds, epochs=0)
    assert hist == [] and all(np.array_equal(a, b) for a, b in zip(out.params(), net.params()))


def test_train_memorizes_single_pair():
    net = network_for(2, hidden=(16, 16))
    ds = Dataset([TrainingPair([0.1, 0.2, 0.1, 0.1], [0.3, -0.2, 0.1, 0.5, 0.0, 0.4])], BOX_ENCODING, "x")
    out, hist = train(net, ds, epochs=3000, rate=1e-3, batch_size=1)
    assert hist[-1] <= 1e-3
    assert l1_loss(out, ds.pairs) == hist[-1]


def test_train_history_non_increasing():
    rng = np.random.default_rng(0)
    pairs = [TrainingPair(rng.normal(size=4), rng.normal(size=6)) for _ in range(40)]
    out, hist = train(network_for(2, hidden=(8,)), Dataset(pairs, BOX_ENCODING, "x"), epochs=300, rate=1e-2)
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    net = Mlp.create([3, 5, 4, 2], rng_seed=2)
    X = rng.normal(size=(6, 3))
    Y = rng.normal(size=(6, 2))
    _, grads = loss_gradients(net, X, Y)
    h = 1e-5
    worst = 0.0
    for p, g in zip(net.params(), grads):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = loss_gradients(net, X, Y)
            p[idx] = old - h
            down, _ = loss_gradients(net, X, Y)
            p[idx] = old
            fd = (up - down) / (2 * h)
            if abs(fd) > 1e-3:
                worst = max(worst, abs(fd - g[idx]) / abs(fd))
    assert worst <= 1e-4


def test_save_load_bit_identical(tmp_path):
    net = Mlp.create([6, 64, 64, 10], rng_seed=3, encoding_id=CAR_ENCODING)
    path = tmp_path / "net.json"
    net.save(path)
    back = Mlp.load(path)
    x = np.random.default_rng(0).normal(size=6)
    assert np.array_equal(forward(net, x), forward(back, x))
    assert back.encoding_id == CAR_ENCODING


def test_dataset_round_trip():
    pairs = [TrainingPair([0.1, 0.2, 0.3, 0.4], np.linspace(0, 1, 6) / 3)]
    ds = Dataset(pairs, BOX_ENCODING, "lin-real")
    buf = io.StringIO()
    ds.write(buf)
    back = Dataset.read(buf.getvalue().splitlines())
    assert back.encoding_id == BOX_ENCODING and back.model_id == "lin-real"
    assert np.array_equal(back.pairs[0].target, pairs[0].target)
    with pytest.raises(ValueError):
        Dataset([pairs[0], TrainingPair([0.1], [1.0])], BOX_ENCODING, "x")


ITEM = SweepItem(HyperBox.from_center([1.0, 1.0], [0.2, 0.2]))


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(lin_real(), [ITEM], FAST, SPEC)


def test_generate_single_item(small_dataset):
    assert len(small_dataset) >= 1 and small_dataset.misses == []


def test_generate_duplicates_with_zero_sigma():
    ds = generate_dataset(lin_real(), [ITEM], FAST, SPEC, sigma=0.0, count=5)
    assert len(ds) == 6
    assert all(np.array_equal(p.target, ds.pairs[0].target) for p in ds.pairs)


def test_generate_records_miss_and_continues():
    escaping = SweepItem(HyperBox.from_center([4.9, 4.9], [0.2, 0.2]))
    ds = generate_dataset(lin_real(), [escaping, ITEM], FAST, SPEC)
    assert ds.misses == [0] and len(ds) == 1


def test_generate_empty_sweep():
    with pytest.raises(ValueError):
        generate_dataset(lin_real(), [], FAST, SPEC)


def _problem_for(cert):
    from barrier_reach.metann import validation_problem

    return validation_problem(lin_real(), None, ITEM.init, cert, SPEC.with_eps(0.8), 200_000)


def test_refine_contracts(small_dataset):
    pair = small_dataset.pairs[0]
    cert = QuadraticCertificate(2, pair.target)
    problem = _problem_for(cert)
    net, _ = train(network_for(2, hidden=(16,)), small_dataset, epochs=50)
    before = np.abs(forward(net, pair.input) - pair.target).sum()
    ds = Dataset(list(small_dataset.pairs), BOX_ENCODING, "lin-real")
    same = refine(net, ds, pair.input, cert, problem, epochs=0)
    assert all(np.array_equal(a, b) for a, b in zip(same.params(), net.params()))
    ds = Dataset(list(small_dataset.pairs), BOX_ENCODING, "lin-real")
    tuned = refine(net, ds, pair.input, cert, problem, epochs=50)
    after = np.abs(forward(tuned, pair.input) - pair.target).sum()
    assert after <= before
    assert after < before or before == 0


def test_refine_rejects_invalid(small_dataset):
    pair = small_dataset.pairs[0]
    bad = QuadraticCertificate(2, -np.asarray(pair.target))
    problem = _problem_for(bad)
    with pytest.raises(ValueError):
        refine(network_for(2), small_dataset, pair.input, bad, problem)


car_sets = st.tuples(
    st.floats(-20, 20),
    st.floats(-20, 20),
    st.floats(-6.0, 6.0),
    st.floats(1.5, 10),
    st.floats(0.001, 0.125),
)


@given(car_sets)
def test_car_shift_equivariance(args):
    x, y, th, v, w = args
    net = Mlp.create([6, 8, 10], rng_seed=4, encoding_id=CAR_ENCODING)
    u = ControlInput(v, w)
    moved_box = HyperBox.from_center([x, y, th], [0.1, 0.2, 0.05])
    vec, frame = encode_initial_set(moved_box, u, CAR_ENCODING)
    origin = decode_certificate(forward(net, vec), 3, replace(frame, offset=(0.0, 0.0)))
    moved = predict(net, moved_box, u)
    assert np.array_equal(moved.coeffs, translate(origin, [*frame.offset, 0.0]).coeffs)
    pts = np.random.default_rng(0).normal(size=(10, 3))
    scale = 1e-9 * (1 + abs(x) + abs(y)) ** 2 * (1 + np.abs(origin.coeffs).max())
    assert np.allclose(evaluate(moved, pts + [x, y, 0]), evaluate(origin, pts), atol=scale)
    # a box built directly at the origin encodes to the same input up to rounding
    near, _ = encode_initial_set(HyperBox.from_center([0, 0, th], [0.1, 0.2, 0.05]), u, CAR_ENCODING)
    assert np.allclose(near, vec, atol=1e-12)


@given(car_sets)
def test_car_reflection_contract(args):
    _, _, th, v, w = args
    net = Mlp.create([6, 8, 10], rng_seed=5, encoding_id=CAR_ENCODING)
    hw = [0.1, 0.2, 0.05]
    flagged = predict(net, HyperBox.from_center([0, 0, th], hw), ControlInput(v, -w))
    plain = predict(net, HyperBox.from_center([0, 0, -th], hw), ControlInput(v, w))
    assert np.array_equal(flagged.coeffs, flip_signs(plain, [1, -1, -1]).coeffs)


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.lists(st.integers(1, 12), min_size=1, max_size=3))
def test_serialization_round_trip(seed, hidden):
    net = Mlp.create([4, *hidden, 6], rng_seed=seed)
    back = Mlp.from_json(net.to_json())
    x = np.random.default_rng(seed).normal(size=4)
    assert np.array_equal(forward(net, x), forward(back, x))
