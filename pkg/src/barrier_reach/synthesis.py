"""Counterexample-guided synthesis of quadratic certificates.

The learner runs gradient descent (Adam steps) on a hinge loss over sampled points;
the interval verifier either certifies the candidate or hands back a point
where it fails, which is added to the training samples for the next round.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, TextIO

import numpy as np

from .barrier import QuadraticCertificate, coeff_count, lie_features, monomials
from .dynamics import ControlInput, SystemModel
from .geometry import HyperBox, OctagonRegion, RegionComplement, bloat, sample_octagon
from .pipeline import WorkingRegionSpec, build_working_region
from .verifier import (
    OFFLINE_BUDGET,
    Condition,
    Status,
    UnsafeSpec,
    VerificationOutcome,
    VerificationProblem,
    certify,
)

log = logging.getLogger(__name__)

MARGIN = 0.05
LIE_MARGIN = 0.05
BAND = 0.1


@dataclass(frozen=True)
class SynthesisConfig:
    sample_count: int = 500
    learner_rate: float = 1e-2
    learner_steps: int = 200
    max_cegis_rounds: int = 20
    seed_coeffs: Optional[QuadraticCertificate] = None
    eps_schedule: tuple = (0.1, 0.2, 0.4)
    rng_seed: int = 0
    margin: float = MARGIN
    lie_margin: float = LIE_MARGIN
    band: float = BAND
    # copies of each counterexample added to its sample set
    counterexample_weight: float = 10.0
    # extra learner steps allowed to push fresh counterexamples below the margin
    extra_steps: int = 2000
    budget: int = OFFLINE_BUDGET
    # per-sample weight of the soft unsafe hints (never checked by the verifier)
    hint_weight: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "eps_schedule", tuple(float(e) for e in self.eps_schedule))
        if self.sample_count < 1 or self.learner_steps < 1 or self.max_cegis_rounds < 1:
            raise ValueError("sample_count, learner_steps and max_cegis_rounds must be positive")
        if self.learner_rate <= 0:
            raise ValueError("learner_rate must be positive")
        if not self.eps_schedule:
            raise ValueError("eps_schedule must not be empty")
        if any(e < 0 for e in self.eps_schedule):
            raise ValueError("bloating factors must be nonnegative")
        if any(b < a for a, b in zip(self.eps_schedule, self.eps_schedule[1:])):
            raise ValueError("eps_schedule must be nondecreasing")
        if min(self.margin, self.lie_margin, self.band) <= 0:
            raise ValueError("margins and band must be positive")


@dataclass
class SynthesisResult:
    cert: QuadraticCertificate
    eps_used: float
    rounds: int
    verified: bool
    outcome: Optional[VerificationOutcome] = None
    working: Optional[OctagonRegion] = None
    unsafe: Optional[UnsafeSpec] = None
    log: list = field(default_factory=list)
    # (eps, verified, rounds) for every cegis run, in order
    attempts: list = field(default_factory=list)

    def __post_init__(self):
        if self.verified and (self.outcome is None or self.outcome.status is not Status.VALID):
            raise ValueError("a verified result needs a Valid verifier outcome")


# ---------------------------------------------------------------------------
# learner


def _relu_grad(values: np.ndarray) -> np.ndarray:
    return (values > 0).astype(float)


class _Samples:
    """Feature matrices for a fixed set of training points.

    ``B`` at the points is ``phi @ a`` and ``Bdot`` is ``psi @ a``, so every
    learner step is a handful of matrix-vector products.
    """

    def __init__(self, model, control, init, unsafe, domain, weights=None):
        self.phi_init = monomials(init)
        self.phi_unsafe = monomials(unsafe) if len(unsafe) else np.zeros((0, coeff_count(model.n)))
        self.phi_dom = monomials(domain)
        self.psi_dom = lie_features(model, domain, control)
        w = weights or {}
        self.w_init = w.get("init", np.ones(len(init)))
        self.w_unsafe = w.get("unsafe", np.ones(len(unsafe)))
        self.w_dom = w.get("domain", np.ones(len(domain)))

    def terms(self, a, m, mlie, band):
        b_init = self.phi_init @ a + m
        b_uns = m - self.phi_unsafe @ a
        b_dom = self.phi_dom @ a
        in_band = np.abs(b_dom) <= band
        lie = self.psi_dom @ a + mlie
        return b_init, b_uns, in_band, lie

    def loss_and_grad(self, a, m, mlie, band):
        b_init, b_uns, in_band, lie = self.terms(a, m, mlie, band)
        g_init = self.w_init * _relu_grad(b_init)
        g_uns = self.w_unsafe * _relu_grad(b_uns)
        g_lie = self.w_dom * _relu_grad(lie) * in_band
        loss = (
            float(g_init @ b_init)
            + float(g_uns @ b_uns)
            + float(g_lie @ lie)
        )
        grad = g_init @ self.phi_init - g_uns @ self.phi_unsafe + g_lie @ self.psi_dom
        return loss, grad


class _Adam:
    """Adaptive per-coefficient step sizes for the learner phase."""

    def __init__(self, size: int, rate: float, beta1: float = 0.9, beta2: float = 0.999):
        self.rate, self.beta1, self.beta2 = rate, beta1, beta2
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, a: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        return a - self.rate * mh / (np.sqrt(vh) + 1e-12)


def learner_step(
    cert: QuadraticCertificate,
    samples_init,
    samples_unsafe,
    samples_domain,
    model: SystemModel,
    control: Optional[ControlInput],
    rate: float,
    margin: float = MARGIN,
    lie_margin: float = LIE_MARGIN,
    band: float = BAND,
) -> QuadraticCertificate:
    """One gradient step on the summed hinge loss.

    The loss is piecewise linear in the coefficients, so its gradient is a
    sum of feature vectors over the points whose hinge is active.
    """
    s = _Samples(
        model,
        control,
        np.atleast_2d(np.asarray(samples_init, dtype=float)),
        np.asarray(samples_unsafe, dtype=float).reshape(-1, model.n),
        np.atleast_2d(np.asarray(samples_domain, dtype=float)),
    )
    _, grad = s.loss_and_grad(cert.coeffs, margin, lie_margin, band)
    if rate == 0.0 or not np.any(grad):
        return cert
    return QuadraticCertificate(cert.dim, cert.coeffs - rate * grad)


# ---------------------------------------------------------------------------
# sampling


def _sample_unsafe(unsafe: UnsafeSpec, working: OctagonRegion, count: int, rng) -> np.ndarray:
    n = working.dim
    if isinstance(unsafe, RegionComplement):
        # half near the working region (where the boundary matters), half anywhere
        near = bloat(working, 1.0).bounding_box().intersect(unsafe.domain) or unsafe.domain
        parts = []
        for box in (near, unsafe.domain):
            pts = box.sample(rng, 8 * count)
            pts = pts[unsafe.contains(pts)]
            parts.append(pts[: count // 2 + 1])
        return np.concatenate(parts)
    wb = working.bounding_box()
    boxes = [ob.intersect(wb) for ob in unsafe]
    boxes = [b for b in boxes if b is not None]
    if not boxes:
        return np.zeros((0, n))
    per = max(1, count // len(boxes))
    return np.concatenate([b.sample(rng, per) for b in boxes])


def shell_samples(working: OctagonRegion, count: int, rng) -> np.ndarray:
    """Points of the working region's bounding box that lie outside it."""
    box = working.bounding_box()
    pts = box.sample(rng, 8 * count)
    return pts[~working.contains(pts)][:count]


def seed_from(previous: Optional[SynthesisResult], dim: int, rng_seed: int = 0) -> QuadraticCertificate:
    """Starting coefficients: the latest solution if any, else small random ones."""
    if previous is not None:
        return previous.cert
    rng = np.random.default_rng(rng_seed)
    return QuadraticCertificate(dim, 0.1 * rng.standard_normal(coeff_count(dim)))


# ---------------------------------------------------------------------------
# the loop


def _violations(cert, model, control, pts, condition, band) -> np.ndarray:
    """Which of ``pts`` still fail ``condition`` by the learner's own hinge."""
    a = cert.coeffs
    if condition is Condition.INIT:
        return monomials(pts) @ a > 0
    if condition is Condition.UNSAFE:
        return monomials(pts) @ a <= 0
    near = np.abs(monomials(pts) @ a) <= band
    return near & (lie_features(model, pts, control) @ a >= 0)


# extra-step interval after which a still-violated fresh counterexample doubles its weight
ESCALATE_EVERY = 100
WEIGHT_ATTR = {Condition.INIT: "w_init", Condition.UNSAFE: "w_unsafe", Condition.LIE: "w_dom"}


def cegis(
    model: SystemModel,
    control: Optional[ControlInput],
    init: HyperBox,
    unsafe: UnsafeSpec,
    working: OctagonRegion,
    config: SynthesisConfig = SynthesisConfig(),
    hint_unsafe: Optional[np.ndarray] = None,
    run_log: Optional[TextIO] = None,
    threads: int = 1,
) -> SynthesisResult:
    """Alternate learner epochs and verifier calls until Valid or out of rounds.

    ``hint_unsafe`` adds soft unsafe samples that the verifier never checks;
    it steers the learner towards tight certificates when the verified
    unsafe set is empty.
    """
    n = model.n
    problem = VerificationProblem(
        model, control, QuadraticCertificate.zero(n), init, unsafe, working, budget=config.budget
    )
    problem.validate()
    rng = np.random.default_rng(config.rng_seed)
    cfg = config
    cert = cfg.seed_coeffs if cfg.seed_coeffs is not None else seed_from(None, n, cfg.rng_seed)
    if cert.dim != n:
        raise ValueError("seed certificate dimension mismatch")
    records: list[dict] = []

    def emit(rec):
        records.append(rec)
        if run_log is not None:
            run_log.write(json.dumps(rec, sort_keys=True) + "\n")

    # a seed that already works needs no learning
    if cfg.seed_coeffs is not None:
        out = certify(replace(problem, cert=cert), threads=threads, seed=cfg.rng_seed)
        if out.valid:
            emit(
                {
                    "round": 1,
                    "loss": 0.0,
                    "counterexamples_added": 0,
                    "verifier_status": out.status.value,
                    "violated": None,
                    "witness": None,
                    "coeffs": cert.coeffs.tolist(),
                }
            )
            return SynthesisResult(cert, 0.0, 1, True, out, working, unsafe, records)

    x_init = np.concatenate([init.corners(), init.sample(rng, cfg.sample_count)])
    x_unsafe = _sample_unsafe(unsafe, working, cfg.sample_count, rng)
    x_dom = sample_octagon(working, rng, 4 * cfg.sample_count)
    sets = {"init": [x_init], "unsafe": [x_unsafe], "domain": [x_dom]}
    weights = {k: [np.ones(len(v[0]))] for k, v in sets.items()}
    if hint_unsafe is not None and len(hint_unsafe):
        sets["unsafe"].append(np.asarray(hint_unsafe, dtype=float))
        weights["unsafe"].append(np.full(len(hint_unsafe), cfg.hint_weight))
    key_of = {Condition.INIT: "init", Condition.UNSAFE: "unsafe", Condition.LIE: "domain"}
    fresh: list[tuple[Condition, np.ndarray]] = []
    out: Optional[VerificationOutcome] = None

    a = cert.normalized().coeffs
    for rnd in range(1, cfg.max_cegis_rounds + 1):
        samples = _Samples(
            model,
            control,
            np.concatenate(sets["init"]),
            np.concatenate(sets["unsafe"]),
            np.concatenate(sets["domain"]),
            {k: np.concatenate(v) for k, v in weights.items()},
        )
        loss = 0.0
        steps = 0
        opt = _Adam(a.size, cfg.learner_rate)
        while True:
            loss, grad = samples.loss_and_grad(a, cfg.margin, cfg.lie_margin, cfg.band)
            if not np.any(grad):
                break
            a = opt.step(a, grad)
            steps += 1
            if steps < cfg.learner_steps:
                continue
            if steps >= cfg.learner_steps + cfg.extra_steps:
                break
            cand = QuadraticCertificate(n, a)
            stuck = [
                c for c, p in fresh if _violations(cand, model, control, p[None, :], c, cfg.band)[0]
            ]
            if not stuck:
                break
            if (steps - cfg.learner_steps) % ESCALATE_EVERY == 0:
                # fresh counterexamples sit in the last row of their sample set
                for c in stuck:
                    w = getattr(samples, WEIGHT_ATTR[c])
                    w[-1] *= 2.0
        cert = QuadraticCertificate(n, a)
        out = certify(replace(problem, cert=cert), threads=threads, seed=cfg.rng_seed + rnd)
        added = 0
        fresh = []
        if out.status is Status.COUNTEREXAMPLE:
            key = key_of[out.violated]
            sets[key].append(out.witness[None, :])
            weights[key].append(np.array([cfg.counterexample_weight]))
            fresh.append((out.violated, out.witness))
            added = 1
        emit(
            {
                "round": rnd,
                "loss": loss,
                "counterexamples_added": added,
                "verifier_status": out.status.value,
                "violated": None if out.violated is None else out.violated.value,
                "witness": None if out.witness is None else out.witness.tolist(),
                "coeffs": cert.coeffs.tolist(),
            }
        )
        log.debug("cegis round %d: loss %.4g, %s", rnd, loss, out.status.value)
        if out.valid:
            return SynthesisResult(cert, 0.0, rnd, True, out, working, unsafe, records)
        a = cert.coeffs
    return SynthesisResult(cert, 0.0, cfg.max_cegis_rounds, False, out, working, unsafe, records)


# bloating schedule used by the benchmarks; the rotating field needs the wider levels
BENCH_EPS_SCHEDULE = (0.1, 0.2, 0.4, 0.8, 1.6)

RegionBuilder = Callable[..., tuple[OctagonRegion, RegionComplement]]


def synthesize_with_bloating(
    model: SystemModel,
    control: Optional[ControlInput],
    init: HyperBox,
    domain: HyperBox,
    config: SynthesisConfig = SynthesisConfig(),
    region_spec: Optional[WorkingRegionSpec] = None,
    build_region: RegionBuilder = build_working_region,
    obstacles: Optional[Sequence[HyperBox]] = None,
    hint_shell: bool = False,
    run_log: Optional[TextIO] = None,
    threads: int = 1,
) -> SynthesisResult:
    """Grow the working region through ``eps_schedule`` until cegis succeeds.

    With ``obstacles=None`` the unsafe set is the complement of the working
    region in ``domain``; otherwise the given obstacles are checked and
    ``hint_shell`` feeds the learner soft unsafe samples around the region.
    Each attempt is seeded with the previous attempt's final certificate.
    """
    spec = region_spec or WorkingRegionSpec(domain)
    if spec.domain != domain:
        spec = replace(spec, domain=domain)
    previous: Optional[SynthesisResult] = None
    attempts: list = []
    records: list = []
    for eps in config.eps_schedule:
        working, complement = build_region(model, control, init, spec.with_eps(eps), config.rng_seed)
        unsafe = complement if obstacles is None else list(obstacles)
        hint = None
        if hint_shell:
            hint = shell_samples(working, config.sample_count, np.random.default_rng(config.rng_seed))
        seeded = replace(config, seed_coeffs=seed_from(previous, model.n, config.rng_seed)) if previous else config
        result = cegis(model, control, init, unsafe, working, seeded, hint, run_log, threads)
        result.eps_used = eps
        attempts.append((eps, result.verified, result.rounds))
        records.extend(dict(r, eps=eps) for r in result.log)
        previous = result
        if result.verified:
            break
    previous.attempts = attempts
    previous.log = records
    return previous


def augment(
    cert: QuadraticCertificate,
    sigma: float,
    count: int,
    context: VerificationProblem,
    rng_seed: int = 0,
) -> list[QuadraticCertificate]:
    """Multiplicative-noise copies of ``cert`` that still verify Valid."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(rng_seed)
    kept = []
    for k in range(count):
        c = rng.normal(1.0, sigma, cert.coeffs.shape)
        cand = QuadraticCertificate(cert.dim, cert.coeffs * c)
        if certify(replace(context, cert=cand), seed=rng_seed + k).valid:
            kept.append(cand)
    return kept
