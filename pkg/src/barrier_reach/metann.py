"""Meta-network: a small ReLU MLP from initial-set parameters to certificates.

Includes the input encodings (with the car's shift/reflection canonical
frame), L1 training with backpropagation, dataset generation by chained
synthesis, and refinement on verifier feedback.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .barrier import QuadraticCertificate, coeff_count, flip_signs, translate
from .dynamics import ControlInput, SystemModel
from .geometry import HyperBox
from .pipeline import WorkingRegionSpec, build_working_region
from .synthesis import SynthesisConfig, SynthesisResult, augment, seed_from, synthesize_with_bloating
from .verifier import VerificationProblem, certify

log = logging.getLogger(__name__)

BOX_ENCODING = "box-center-halfwidth"
CAR_ENCODING = "car-shift-reflect"

# trained domain of the car network
CAR_SPEED = (1.5, 10.0)
CAR_TURN = (0.0, 0.125)
CAR_HEADING = (0.0, 6.5)
CAR_POS_HALF = (0.05, 0.3)
CAR_ANGLE_HALF = (0.02, 0.1)
TWO_PI = 2.0 * math.pi


class EncodingError(ValueError):
    """Parameters outside the domain the network was trained on."""


# ---------------------------------------------------------------------------
# network


@dataclass(eq=False)
class Mlp:
    """Fully connected net, ReLU on hidden layers and identity on the output."""

    layer_sizes: list
    weights: list
    biases: list
    encoding_id: str = BOX_ENCODING

    def __post_init__(self):
        self.layer_sizes = [int(h) for h in self.layer_sizes]
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}, expected {shape}")

    @classmethod
    def create(cls, layer_sizes: Sequence[int], rng_seed: int = 0, encoding_id: str = BOX_ENCODING) -> "Mlp":
        """He-initialized weights, zero biases."""
        rng = np.random.default_rng(rng_seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            ws.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
            bs.append(np.zeros(fan_out))
        return cls(list(layer_sizes), ws, bs, encoding_id)

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_width(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.encoding_id)

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def to_json(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "encoding_id": self.encoding_id,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Mlp":
        return cls(d["layer_sizes"], d["weights"], d["biases"], d.get("encoding_id", BOX_ENCODING))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _activations(net: Mlp, X: np.ndarray) -> list[np.ndarray]:
    zs = [X]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = zs[-1] @ w.T + b
        zs.append(z if i == last else np.maximum(z, 0.0))
    return zs


def forward(net: Mlp, x) -> np.ndarray:
    """Raw network output for one input vector or an ``(m, h0)`` batch."""
    X = np.asarray(x, dtype=float)
    if X.shape[-1] != net.input_width:
        raise ValueError(f"input width {X.shape[-1]} != network input width {net.input_width}")
    return _activations(net, np.atleast_2d(X))[-1] if X.ndim > 1 else _activations(net, X[None, :])[-1][0]


def l1_loss_arrays(net: Mlp, X: np.ndarray, Y: np.ndarray) -> float:
    if len(X) == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.sum(np.abs(forward(net, X) - Y), axis=1)))


def loss_gradients(net: Mlp, X: np.ndarray, Y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Batch L1 loss and its gradient for each of ``net.params()``."""
    zs = _activations(net, X)
    diff = zs[-1] - Y
    m = X.shape[0]
    loss = float(np.mean(np.sum(np.abs(diff), axis=1)))
    delta = np.sign(diff) / m
    gw: list[np.ndarray] = [None] * len(net.weights)
    gb: list[np.ndarray] = [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = delta.T @ zs[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i]) * (zs[i] > 0)
    return loss, gw + gb


# ---------------------------------------------------------------------------
# data


@dataclass
class TrainingPair:
    input: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=float)
        self.target = np.asarray(self.target, dtype=float)

    def to_json(self) -> dict:
        return {"input": self.input.tolist(), "target": self.target.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "TrainingPair":
        return cls(d["input"], d["target"])


@dataclass
class Dataset:
    pairs: list
    encoding_id: str
    model_id: str
    misses: list = field(default_factory=list)

    def __post_init__(self):
        if self.pairs:
            wi = {p.input.shape for p in self.pairs}
            wt = {p.target.shape for p in self.pairs}
            if len(wi) > 1 or len(wt) > 1:
                raise ValueError("dataset pairs have mixed widths")

    def __len__(self) -> int:
        return len(self.pairs)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pairs:
            raise ValueError("empty dataset")
        return np.stack([p.input for p in self.pairs]), np.stack([p.target for p in self.pairs])

    def append(self, pair: TrainingPair) -> None:
        if self.pairs and (pair.input.shape != self.pairs[0].input.shape
                           or pair.target.shape != self.pairs[0].target.shape):
            raise ValueError("pair width does not match the dataset")
        self.pairs.append(pair)

    def write(self, out: TextIO) -> None:
        for p in self.pairs:
            rec = dict(p.to_json(), encoding_id=self.encoding_id, model_id=self.model_id)
            out.write(json.dumps(rec) + "\n")

    @classmethod
    def read(cls, lines: Iterable[str]) -> "Dataset":
        pairs, enc, model = [], None, None
        for line in lines:
            if not line.strip():
                continue
            rec = json.loads(line)
            if enc is None:
                enc, model = rec["encoding_id"], rec["model_id"]
            elif (rec["encoding_id"], rec["model_id"]) != (enc, model):
                raise ValueError("dataset lines disagree on encoding or model")
            pairs.append(TrainingPair.from_json(rec))
        return cls(pairs, enc or BOX_ENCODING, model or "")


def l1_loss(net: Mlp, batch: Sequence[TrainingPair]) -> float:
    """Mean over pairs of the summed absolute coefficient error."""
    if not batch:
        raise ValueError("empty batch")
    X = np.stack([p.input for p in batch])
    Y = np.stack([p.target for p in batch])
    return l1_loss_arrays(net, X, Y)


# ---------------------------------------------------------------------------
# encodings


@dataclass(frozen=True)
class Frame:
    """How an initial set was mapped into the network's canonical frame."""

    offset: tuple = ()
    reflect: bool = False
    # the canonical heading is the original minus turns * 2 pi (after reflection)
    turns: int = 0


def _in(value: float, bounds: tuple, what: str) -> None:
    lo, hi = bounds
    if not (lo - 1e-12 <= value <= hi + 1e-12):
        raise EncodingError(f"{what} = {value:g} outside the trained range [{lo:g}, {hi:g}]")


def encode_box(init: HyperBox) -> np.ndarray:
    return np.concatenate([init.center, init.half_widths])


def canonical_car_set(init: HyperBox, control: ControlInput) -> tuple[HyperBox, ControlInput, Frame]:
    """Shift to the origin, reflect for right turns, wrap the heading."""
    if init.dim != 3:
        raise ValueError("car initial sets are 3-dimensional")
    c = init.center
    hw = init.half_widths
    offset = (float(c[0]), float(c[1]))
    reflect = control.omega < 0
    theta = -c[2] if reflect else c[2]
    turns = math.floor(theta / TWO_PI)
    theta -= turns * TWO_PI
    canon = HyperBox.from_center([0.0, 0.0, theta], hw)
    return canon, ControlInput(control.v, abs(control.omega)), Frame(offset, reflect, turns)


def encode_car(init: HyperBox, control: ControlInput, check: bool = True) -> tuple[np.ndarray, Frame]:
    canon, u, frame = canonical_car_set(init, control)
    hw = canon.half_widths
    theta = float(canon.center[2])
    if check:
        _in(u.v, CAR_SPEED, "speed")
        _in(u.omega, CAR_TURN, "|turn rate|")
        _in(theta, CAR_HEADING, "heading")
        for i, bounds in ((0, CAR_POS_HALF), (1, CAR_POS_HALF), (2, CAR_ANGLE_HALF)):
            _in(float(hw[i]), bounds, f"half-width {i}")
    return np.array([u.v, u.omega, theta, *hw]), frame


def encode_initial_set(
    init: HyperBox, control: Optional[ControlInput] = None, encoding_id: str = BOX_ENCODING
) -> tuple[np.ndarray, Frame]:
    """Network input for ``init`` and the frame needed to decode the output."""
    if encoding_id == BOX_ENCODING:
        return encode_box(init), Frame()
    if encoding_id == CAR_ENCODING:
        if control is None:
            raise ValueError("the car encoding needs the control input")
        return encode_car(init, control)
    raise ValueError(f"unknown encoding {encoding_id!r}")


def decode_certificate(coeffs, dim: int, frame: Frame) -> QuadraticCertificate:
    """Certificate in original coordinates from one in the canonical frame."""
    cert = QuadraticCertificate(dim, coeffs)
    if not frame.offset:
        return cert
    if frame.turns:
        cert = translate(cert, [0.0, 0.0, frame.turns * TWO_PI])
    if frame.reflect:
        cert = flip_signs(cert, [1.0, -1.0, -1.0])
    return translate(cert, [frame.offset[0], frame.offset[1], 0.0])


def predict(net: Mlp, init: HyperBox, control: Optional[ControlInput] = None) -> QuadraticCertificate:
    x, frame = encode_initial_set(init, control, net.encoding_id)
    out = forward(net, x)
    return decode_certificate(out, init.dim, frame)


# ---------------------------------------------------------------------------
# training


class _Adam:
    def __init__(self, params: list[np.ndarray], rate: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.rate, self.beta1, self.beta2, self.eps = rate, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(
    net: Mlp,
    dataset: Dataset,
    epochs: int = 20_000,
    rate: float = 1e-3,
    batch_size: int = 32,
    rng_seed: int = 0,
    patience: int = 200,
) -> tuple[Mlp, list[float]]:
    """Mini-batch Adam on the L1 loss; returns the best network and loss history.

    After every epoch the full-dataset loss is compared with the best seen.
    If it has not improved for ``patience`` epochs (or blows up past twice
    the best), the best weights are restored and the rate halved. The
    history records the best loss after each epoch, so it never increases.
    """
    if not dataset.pairs:
        raise ValueError("cannot train on an empty dataset")
    X, Y = dataset.arrays()
    if X.shape[1] != net.input_width or Y.shape[1] != net.output_width:
        raise ValueError("dataset widths do not match the network")
    net = net.copy()
    if epochs <= 0:
        return net, []
    rng = np.random.default_rng(rng_seed)
    best = net.copy()
    best_loss = l1_loss_arrays(net, X, Y)
    opt = _Adam(net.params(), rate)
    history: list[float] = []
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start : start + batch_size]
            _, grads = loss_gradients(net, X[idx], Y[idx])
            opt.step(net.params(), grads)
        loss = l1_loss_arrays(net, X, Y)
        if loss < best_loss:
            best_loss = loss
            best = net.copy()
            stale = 0
        else:
            stale += 1
            if stale >= patience or not math.isfinite(loss) or loss > 2.0 * best_loss:
                net = best.copy()
                opt = _Adam(net.params(), opt.rate * 0.5)
                stale = 0
                log.debug("epoch %d: rate halved to %g", epoch, opt.rate)
        history.append(best_loss)
    return best, history


def refine(
    net: Mlp,
    dataset: Dataset,
    failed_input,
    verified_cert: QuadraticCertificate,
    problem: VerificationProblem,
    epochs: int = 200,
    rate: float = 1e-3,
) -> Mlp:
    """Add a freshly verified pair and fine-tune on it.

    ``problem`` is the verification problem the cert must pass; a cert that
    does not certify Valid is rejected. Steps that would increase the loss
    on the new pair are rejected and the rate halved, so the network's
    output for ``failed_input`` never moves away from the target.
    """
    if not certify(replace(problem, cert=verified_cert)).valid:
        raise ValueError("refine needs a certificate that verifies Valid")
    pair = TrainingPair(failed_input, verified_cert.coeffs)
    dataset.append(pair)
    net = net.copy()
    if epochs <= 0:
        return net
    x = pair.input[None, :]
    y = pair.target[None, :]
    X, Y = dataset.arrays()

    def objective(n: Mlp) -> tuple[float, float]:
        own = l1_loss_arrays(n, x, y)
        return own, own + l1_loss_arrays(n, X, Y)

    own, total = objective(net)
    for _ in range(epochs):
        _, g_own = loss_gradients(net, x, y)
        _, g_all = loss_gradients(net, X, Y)
        trial = net.copy()
        for p, a, b in zip(trial.params(), g_own, g_all):
            p -= rate * (a + b)
        t_own, t_total = objective(trial)
        if t_own <= own and t_total <= total:
            net, own, total = trial, t_own, t_total
        else:
            rate *= 0.5
            if rate < 1e-12:
                break
    return net


# ---------------------------------------------------------------------------
# dataset generation


@dataclass(frozen=True)
class SweepItem:
    init: HyperBox
    control: Optional[ControlInput] = None


def generate_dataset(
    model: SystemModel,
    sweep: Sequence[SweepItem],
    config: SynthesisConfig,
    region_spec: WorkingRegionSpec,
    sigma: float = 0.0,
    count: int = 0,
    encoding_id: str = BOX_ENCODING,
    obstacles_mode: bool = False,
    progress: Optional[TextIO] = None,
) -> Dataset:
    """Chain synthesis through the sweep, seeding each run with the last result.

    Successful certificates are stored in the canonical frame (for the car)
    together with up to ``count`` verified noisy copies; failures are
    recorded in ``misses`` and the seed chain continues.
    ``obstacles_mode`` verifies with an empty obstacle list and hands the
    learner soft unsafe samples around the working region instead.
    """
    if not sweep:
        raise ValueError("empty sweep")
    data = Dataset([], encoding_id, model.name)
    previous: Optional[SynthesisResult] = None
    for k, item in enumerate(sweep):
        init, control = item.init, item.control
        x, frame = encode_initial_set(init, control, encoding_id)
        if frame.offset:
            # synthesize directly in the canonical frame
            init, control, _ = canonical_car_set(init, control)
        cfg = replace(config, rng_seed=config.rng_seed + k,
                      seed_coeffs=seed_from(previous, model.n, config.rng_seed + k) if previous else None)
        try:
            result = synthesize_with_bloating(
                model, control, init, region_spec.domain, cfg, region_spec,
                obstacles=[] if obstacles_mode else None, hint_shell=obstacles_mode,
            )
        except (ValueError, RuntimeError) as err:
            log.info("sweep item %d skipped: %s", k, err)
            data.misses.append(k)
            continue
        previous = result
        status = "ok" if result.verified else "miss"
        if progress is not None:
            progress.write(f"{k} {status} eps={result.eps_used:g} rounds={result.rounds}\n")
            progress.flush()
        if not result.verified:
            data.misses.append(k)
            continue
        context = VerificationProblem(
            model, control, result.cert, init, result.unsafe, result.working, budget=config.budget
        )
        target = result.cert
        unit = target.normalized()
        if unit != target and certify(replace(context, cert=unit)).valid:
            target = unit
        data.append(TrainingPair(x, target.coeffs))
        for extra in augment(target, sigma, count, replace(context, cert=target), config.rng_seed + k):
            data.append(TrainingPair(x, extra.coeffs))
    return data


def network_for(dim: int, encoding_id: str = BOX_ENCODING, hidden=(64, 64), rng_seed: int = 0) -> Mlp:
    width = 2 * dim if encoding_id == BOX_ENCODING else 6
    return Mlp.create([width, *hidden, coeff_count(dim)], rng_seed, encoding_id)


def validation_problem(
    model: SystemModel,
    control: Optional[ControlInput],
    init: HyperBox,
    cert: QuadraticCertificate,
    region_spec: WorkingRegionSpec,
    budget: int,
    rng_seed: int = 0,
) -> VerificationProblem:
    """Certificate check inside the working region with an empty unsafe set."""
    working, _ = build_working_region(model, control, init, region_spec, rng_seed)
    return VerificationProblem(model, control, cert, init, [], working, budget=budget)
