"""Sound branch-and-bound certification of barrier conditions.

Three conditions are checked over a working region ``W``:

* init: ``B <= 0`` on the initial box,
* unsafe: ``B > 0`` on the unsafe set intersected with ``W``,
* lie: ``dB/dt <= -gamma`` wherever ``B = 0`` inside ``W``.

Boxes are processed breadth-first in batches. Interval enclosures decide a
box, prune it, or send its two halves (widest side bisected) to the back
of the queue. Undecided boxes are also probed for concrete witnesses,
which are re-checked in exact (or high-precision) arithmetic before a
counterexample is reported.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

import mpmath
import numpy as np

from . import expr as ex
from .barrier import QuadraticCertificate, evaluate, gradient, lie_derivative
from .dynamics import ControlInput, SystemModel
from .geometry import HyperBox, OctagonRegion, RegionComplement, classify_boxes
from .interval import Interval, IntervalVector

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1e-4
OFFLINE_BUDGET = 200_000
ONLINE_BUDGET = 20_000
ZERO_BAND = 1e-3
RANDOM_PROBES = 4
EXACT_DPS = 50


class Condition(enum.Enum):
    INIT = "init"
    UNSAFE = "unsafe"
    LIE = "lie"


class Status(enum.Enum):
    VALID = "valid"
    COUNTEREXAMPLE = "counterexample"
    UNKNOWN = "unknown"


UnsafeSpec = Union[RegionComplement, Sequence[HyperBox]]


@dataclass
class VerificationProblem:
    model: SystemModel
    control: Optional[ControlInput]
    cert: QuadraticCertificate
    init: HyperBox
    unsafe: UnsafeSpec
    working: OctagonRegion
    gamma: float = DEFAULT_GAMMA
    budget: int = OFFLINE_BUDGET
    zero_band: float = ZERO_BAND

    @property
    def training_mode(self) -> bool:
        return isinstance(self.unsafe, RegionComplement)

    def validate(self) -> None:
        n = self.model.n
        if self.cert.dim != n or self.init.dim != n or self.working.dim != n:
            raise ValueError("problem components have mismatched dimensions")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not np.all(self.working.contains(self.init.corners())):
            raise ValueError("initial set is not contained in the working region")
        if self.training_mode:
            if self.unsafe.dim != n:
                raise ValueError("unsafe region dimension mismatch")
        else:
            for ob in self.unsafe:
                if ob.dim != n:
                    raise ValueError("obstacle dimension mismatch")


@dataclass
class VerificationOutcome:
    status: Status
    witness: Optional[np.ndarray] = None
    violated: Optional[Condition] = None
    boxes_explored: int = 0

    @property
    def valid(self) -> bool:
        return self.status is Status.VALID

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "witness": None if self.witness is None else [float(v) for v in self.witness],
            "violated": None if self.violated is None else self.violated.value,
            "boxes_explored": self.boxes_explored,
        }


# ---------------------------------------------------------------------------
# exact re-evaluation


def _exact_backend(problem: VerificationProblem):
    if all(ex.is_polynomial(e) for e in problem.model.symbolic_form):
        return ex.FRACTION, Fraction
    return ex.MPMATH, mpmath.mpf


def _exact_values(problem: VerificationProblem, x) -> tuple:
    """``(B(x), Bdot(x))`` evaluated exactly (rationals) or at 50 digits."""
    backend, num = _exact_backend(problem)
    xs = [num(float(v)) for v in x]
    with mpmath.workdps(EXACT_DPS):
        b = ex.evaluate(problem.cert.expression(), xs, backend=backend)
        bdot = ex.evaluate(
            problem.cert.lie_expression(problem.model),
            xs,
            problem.model.params(problem.control),
            backend,
        )
    return b, bdot


def in_unsafe(problem: VerificationProblem, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    if problem.training_mode:
        return problem.unsafe.contains(pts)
    hit = np.zeros(pts.shape[0], dtype=bool)
    for ob in problem.unsafe:
        hit |= np.all((ob.lower <= pts) & (pts <= ob.upper), axis=1)
    return hit & problem.working.contains(pts)


def violates(problem: VerificationProblem, condition: Condition, x) -> bool:
    """Exact check that ``x`` witnesses a violation of ``condition``."""
    x = np.asarray(x, dtype=float)
    if condition is Condition.INIT:
        if not (np.all(problem.init.lower <= x) and np.all(x <= problem.init.upper)):
            return False
        b, _ = _exact_values(problem, x)
        return b > 0
    if condition is Condition.UNSAFE:
        if not bool(in_unsafe(problem, x[None, :])[0]):
            return False
        b, _ = _exact_values(problem, x)
        return b <= 0
    if not bool(problem.working.contains(x[None, :])[0]):
        return False
    b, bdot = _exact_values(problem, x)
    band = Fraction(problem.zero_band) if isinstance(b, Fraction) else mpmath.mpf(problem.zero_band)
    gamma = Fraction(problem.gamma) if isinstance(b, Fraction) else mpmath.mpf(problem.gamma)
    return abs(b) <= band and bdot >= -gamma


# ---------------------------------------------------------------------------
# witness probing


def _probe_points(lo: np.ndarray, hi: np.ndarray, unit: np.ndarray) -> np.ndarray:
    """Centers, corners and random points for each box: ``(m, c, n)``."""
    m, n = lo.shape
    center = 0.5 * (lo + hi)
    corners = []
    for k in range(2**n):
        bits = np.array([(k >> i) & 1 for i in range(n)], dtype=bool)
        corners.append(np.where(bits, hi, lo))
    rand = lo[:, None, :] + unit * (hi - lo)[:, None, :]
    return np.concatenate([center[:, None, :], np.stack(corners, axis=1), rand], axis=1)


def _project_to_zero(cert: QuadraticCertificate, pts: np.ndarray, lo, hi, iters: int = 3) -> np.ndarray:
    shape = pts.shape
    flat = pts.reshape(-1, shape[-1])
    lo_f = np.broadcast_to(lo[:, None, :], shape).reshape(-1, shape[-1])
    hi_f = np.broadcast_to(hi[:, None, :], shape).reshape(-1, shape[-1])
    for _ in range(iters):
        b = evaluate(cert, flat)
        g = gradient(cert, flat)
        gg = np.sum(g * g, axis=1)
        step = np.where(gg > 0, b / np.where(gg > 0, gg, 1.0), 0.0)
        flat = np.clip(flat - step[:, None] * g, lo_f, hi_f)
    return flat.reshape(shape)


def _float_violations(problem: VerificationProblem, condition: Condition, pts: np.ndarray) -> np.ndarray:
    m, c, n = pts.shape
    flat = pts.reshape(-1, n)
    b = evaluate(problem.cert, flat)
    if condition is Condition.INIT:
        bad = b > 0
    elif condition is Condition.UNSAFE:
        bad = (b <= 0) & in_unsafe(problem, flat)
    else:
        bdot = lie_derivative(problem.cert, problem.model, flat, problem.control)
        bad = (
            (np.abs(b) <= problem.zero_band)
            & (bdot >= -problem.gamma)
            & problem.working.contains(flat)
        )
    return bad.reshape(m, c)


def _search_witness(
    problem: VerificationProblem,
    condition: Condition,
    lo: np.ndarray,
    hi: np.ndarray,
    unit: np.ndarray,
    max_exact: int = 8,
) -> Optional[np.ndarray]:
    if lo.shape[0] == 0:
        return None
    pts = _probe_points(lo, hi, unit)
    if condition is Condition.LIE:
        pts = _project_to_zero(problem.cert, pts, lo, hi)
    bad = _float_violations(problem, condition, pts)
    tried = 0
    for bi, ci in zip(*np.nonzero(bad)):
        x = pts[bi, ci]
        if violates(problem, condition, x):
            return x.copy()
        tried += 1
        if tried >= max_exact:
            break
    return None


def find_counterexample_point(
    box: IntervalVector,
    condition: Condition,
    problem: VerificationProblem,
    k: int = 32,
    rng: Optional[np.random.Generator] = None,
) -> Optional[np.ndarray]:
    """Probe one box for a point that exactly violates ``condition``."""
    rng = rng or np.random.default_rng(0)
    lo = np.array([[float(c.lo) for c in box]])
    hi = np.array([[float(c.hi) for c in box]])
    unit = rng.random((1, k, lo.shape[1]))
    return _search_witness(problem, condition, lo, hi, unit, max_exact=k)


# ---------------------------------------------------------------------------
# branch and bound


@dataclass
class _Compiled:
    b_expr: ex.Expr
    lie_expr: ex.Expr
    params: dict


def _as_vector(lo: np.ndarray, hi: np.ndarray) -> list[Interval]:
    return [Interval(lo[:, i], hi[:, i]) for i in range(lo.shape[1])]


def _judge(
    problem: VerificationProblem, comp: _Compiled, condition: Condition, lo: np.ndarray, hi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(undecided, probe)`` masks for a batch of boxes."""
    box = _as_vector(lo, hi)
    bint = ex.evaluate(comp.b_expr, box, backend=ex.INTERVAL)
    blo = np.broadcast_to(bint.lo, (lo.shape[0],))
    bhi = np.broadcast_to(bint.hi, (lo.shape[0],))
    if condition is Condition.INIT:
        undecided = bhi > 0
        return undecided, undecided
    if condition is Condition.UNSAFE:
        if problem.training_mode:
            place = classify_boxes(lo, hi, problem.unsafe.inner)
            relevant = place != 1
        else:
            place = classify_boxes(lo, hi, problem.working)
            relevant = place != -1
        undecided = relevant & ~(blo > 0)
        return undecided, undecided
    place = classify_boxes(lo, hi, problem.working)
    relevant = (place != -1) & (blo <= 0) & (bhi >= 0)
    undecided = relevant.copy()
    if np.any(relevant):
        sub_lo, sub_hi = lo[relevant], hi[relevant]
        lint = ex.evaluate(comp.lie_expr, _as_vector(sub_lo, sub_hi), comp.params, ex.INTERVAL)
        lhi = np.broadcast_to(lint.hi, (sub_lo.shape[0],))
        undecided[relevant] = lhi > -problem.gamma
    return undecided, undecided


def _bisect(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = hi - lo
    axis = np.argmax(width, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, axis] + hi[rows, axis])
    left_hi = hi.copy()
    left_hi[rows, axis] = mid
    right_lo = lo.copy()
    right_lo[rows, axis] = mid
    new_lo = np.empty((2 * lo.shape[0], lo.shape[1]))
    new_hi = np.empty_like(new_lo)
    new_lo[0::2], new_hi[0::2] = lo, left_hi
    new_lo[1::2], new_hi[1::2] = right_lo, hi
    return new_lo, new_hi


def _initial_chunks(problem: VerificationProblem) -> list[tuple[Condition, np.ndarray, np.ndarray]]:
    chunks = [(Condition.INIT, problem.init.lower[None, :].copy(), problem.init.upper[None, :].copy())]
    if problem.training_mode:
        comp = problem.unsafe
        boxes = comp.slabs()
        core = comp.domain.intersect(comp.inner.bounding_box())
        if core is not None:
            boxes.append(core)
    else:
        wbox = problem.working.bounding_box()
        boxes = [c for c in (ob.intersect(wbox) for ob in problem.unsafe) if c is not None]
    if boxes:
        chunks.append(
            (Condition.UNSAFE, np.array([b.lower for b in boxes]), np.array([b.upper for b in boxes]))
        )
    wbox = problem.working.bounding_box()
    chunks.append((Condition.LIE, wbox.lower[None, :].copy(), wbox.upper[None, :].copy()))
    return chunks


def certify(problem: VerificationProblem, threads: int = 1, seed: int = 0) -> VerificationOutcome:
    """Decide the barrier conditions for ``problem`` within its box budget."""
    problem.validate()
    comp = _Compiled(
        problem.cert.expression(),
        problem.cert.lie_expression(problem.model),
        problem.model.params(problem.control),
    )
    queue = deque(_initial_chunks(problem))
    explored = 0
    serial = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    n = problem.model.n
    try:
        while queue:
            condition, lo, hi = queue.popleft()
            full = lo.shape[0]
            rng = np.random.default_rng([seed, serial])
            serial += 1
            unit = rng.random((full, RANDOM_PROBES, n))
            take = min(full, problem.budget - explored)
            lo, hi, unit = lo[:take], hi[:take], unit[:take]
            explored += take
            if pool is not None and take > 256:
                parts = np.array_split(np.arange(take), threads)
                results = list(
                    pool.map(lambda idx: _judge(problem, comp, condition, lo[idx], hi[idx]), parts)
                )
                undecided = np.concatenate([r[0] for r in results])
                probe = np.concatenate([r[1] for r in results])
            else:
                undecided, probe = _judge(problem, comp, condition, lo, hi)
            if np.any(probe):
                w = _search_witness(problem, condition, lo[probe], hi[probe], unit[probe])
                if w is not None:
                    return VerificationOutcome(Status.COUNTEREXAMPLE, w, condition, explored)
            if np.any(undecided):
                queue.append((condition, *_bisect(lo[undecided], hi[undecided])))
            if take < full or (queue and explored >= problem.budget):
                return VerificationOutcome(Status.UNKNOWN, boxes_explored=explored)
        return VerificationOutcome(Status.VALID, boxes_explored=explored)
    finally:
        if pool is not None:
            pool.shutdown()


def problem_to_json(problem: VerificationProblem) -> dict:
    unsafe = (
        {"complement": problem.unsafe.to_json()}
        if problem.training_mode
        else {"obstacles": [b.to_json() for b in problem.unsafe]}
    )
    return {
        "model": problem.model.name,
        "control": None
        if problem.control is None
        else {"v": problem.control.v, "omega": problem.control.omega},
        "cert": problem.cert.to_json(),
        "init": problem.init.to_json(),
        "unsafe": unsafe,
        "working": problem.working.to_json(),
        "gamma": problem.gamma,
        "budget": problem.budget,
    }


def problem_from_json(d: dict) -> VerificationProblem:
    from .dynamics import get_model

    u = d.get("control")
    unsafe_d = d["unsafe"]
    unsafe: UnsafeSpec = (
        RegionComplement.from_json(unsafe_d["complement"])
        if "complement" in unsafe_d
        else [HyperBox.from_json(b) for b in unsafe_d["obstacles"]]
    )
    return VerificationProblem(
        get_model(d["model"]),
        None if u is None else ControlInput(u["v"], u["omega"]),
        QuadraticCertificate.from_json(d["cert"]),
        HyperBox.from_json(d["init"]),
        unsafe,
        OctagonRegion.from_json(d["working"]),
        d.get("gamma", DEFAULT_GAMMA),
        d.get("budget", OFFLINE_BUDGET),
    )
