"""Online planning loop with per-step certification and a safe fallback."""

from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .barrier import QuadraticCertificate
from .dynamics import (
    ControlInput,
    ControllerParams,
    SystemModel,
    Trajectory,
    base_controller,
    integrate,
    safe_controller,
    wrap_angle,
)
from .geometry import HyperBox, OctagonRegion
from .metann import EncodingError, Mlp, predict
from .pipeline import CAR_DOMAIN, WorkingRegionSpec, build_working_region, first_exit
from .verifier import ONLINE_BUDGET, VerificationOutcome, VerificationProblem, certify

log = logging.getLogger(__name__)

# heading range used when a planar obstacle is lifted into the car's state space
_HEADING_SPAN = 1e3


class Source(enum.Enum):
    BASE = "Base"
    SAFE = "Safe"


class Outcome(enum.Enum):
    CERTIFIED = "Certified"
    FALLBACK_CERTIFIED = "FallbackCertified"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class Scenario:
    """A planar driving scene; obstacles and target are boxes over (x, y)."""

    start: HyperBox
    target: HyperBox
    obstacles: tuple
    total_horizon: float = 20.0
    step_horizon: float = 2.0
    sensing_bloat: tuple = (0.05, 0.02)
    controller: ControllerParams = ControllerParams()
    deadline_per_step: float = 2.0
    # controls are clamped to the range the network was trained on
    speed_range: tuple = (1.5, 10.0)
    max_turn: float = 0.125
    working_eps: float = 0.1
    interior_samples: int = 20
    domain: HyperBox = CAR_DOMAIN

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "sensing_bloat", tuple(float(b) for b in self.sensing_bloat))
        if self.start.dim != 3 or self.target.dim != 2:
            raise ValueError("start is a box over (x, y, theta); target is a box over (x, y)")
        if any(o.dim != 2 for o in self.obstacles):
            raise ValueError("obstacles are boxes over (x, y)")
        if self.step_horizon <= 0 or self.total_horizon <= 0:
            raise ValueError("horizons must be positive")
        ratio = self.total_horizon / self.step_horizon
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("total horizon must be a whole number of step horizons")
        if len(self.sensing_bloat) != 2 or min(self.sensing_bloat) <= 0:
            raise ValueError("sensing_bloat is (position, angle), both positive")
        if self.deadline_per_step <= 0:
            raise ValueError("deadline must be positive")

    def start_overlaps_obstacle(self) -> bool:
        flat = HyperBox(self.start.lower[:2], self.start.upper[:2])
        return any(flat.intersect(o) is not None for o in self.obstacles)

    @property
    def steps(self) -> int:
        return int(round(self.total_horizon / self.step_horizon))

    @property
    def reference(self) -> tuple:
        return tuple(self.target.center.tolist())

    def half_widths(self) -> np.ndarray:
        p, a = self.sensing_bloat
        return np.array([p, p, a])

    def to_json(self) -> dict:
        return {
            "start": self.start.to_json(),
            "target": self.target.to_json(),
            "obstacles": [o.to_json() for o in self.obstacles],
            "total_horizon": self.total_horizon,
            "step_horizon": self.step_horizon,
            "sensing_bloat": list(self.sensing_bloat),
            "controller": self.controller.to_json(),
            "deadline_per_step": self.deadline_per_step,
            "speed_range": list(self.speed_range),
            "max_turn": self.max_turn,
            "working_eps": self.working_eps,
            "interior_samples": self.interior_samples,
            "domain": self.domain.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Scenario":
        kw = {}
        for key in ("total_horizon", "step_horizon", "deadline_per_step", "max_turn", "working_eps"):
            if key in d:
                kw[key] = float(d[key])
        if "interior_samples" in d:
            kw["interior_samples"] = int(d["interior_samples"])
        if "sensing_bloat" in d:
            kw["sensing_bloat"] = tuple(d["sensing_bloat"])
        if "speed_range" in d:
            kw["speed_range"] = tuple(d["speed_range"])
        if "controller" in d:
            kw["controller"] = ControllerParams.from_json(d["controller"])
        if "domain" in d:
            kw["domain"] = HyperBox.from_json(d["domain"])
        scene = cls(
            HyperBox.from_json(d["start"]),
            HyperBox.from_json(d["target"]),
            tuple(HyperBox.from_json(o) for o in d.get("obstacles", [])),
            **kw,
        )
        # a scene file must describe a feasible start; plan() itself stops on overlap
        if scene.start_overlaps_obstacle():
            raise ValueError("start set overlaps an obstacle")
        return scene


@dataclass
class PlanStep:
    index: int
    control_used: Optional[ControlInput]
    source: Source
    outcome: Outcome
    cert: Optional[QuadraticCertificate]
    executed: Optional[Trajectory]
    wall_time: float
    init: HyperBox
    working: Optional[OctagonRegion] = None
    verifier_status: str = ""
    boxes_explored: int = 0
    # the executed segment left the working region and was cut at the exit
    exited_working: bool = False
    base_failure: str = ""

    def __post_init__(self):
        if self.outcome is not Outcome.STOPPED and (self.cert is None or self.working is None):
            raise ValueError("a certified step needs its certificate and working region")

    def to_json(self) -> dict:
        """Primary record; wall time lives in the metadata file."""
        ex = self.executed
        return {
            "index": self.index,
            "source": self.source.value,
            "outcome": self.outcome.value,
            "control": None if self.control_used is None else
            {"v": self.control_used.v, "omega": self.control_used.omega},
            "init": self.init.to_json(),
            "cert": None if self.cert is None else self.cert.to_json(),
            "working": None if self.working is None else self.working.to_json(),
            "verifier_status": self.verifier_status,
            "boxes_explored": self.boxes_explored,
            "exited_working": self.exited_working,
            "base_failure": self.base_failure,
            "executed": None if ex is None else {
                "times": ex.times.tolist(),
                "states": ex.states.tolist(),
            },
        }


def lift_obstacle(ob: HyperBox) -> HyperBox:
    return HyperBox([ob.lower[0], ob.lower[1], -_HEADING_SPAN], [ob.upper[0], ob.upper[1], _HEADING_SPAN])


def step_problem(
    current_box: HyperBox,
    control: ControlInput,
    scenario: Scenario,
    working: OctagonRegion,
    model: SystemModel,
    cert: Optional[QuadraticCertificate] = None,
    budget: int = ONLINE_BUDGET,
) -> VerificationProblem:
    """Verification problem for one step: obstacles clipped to the working region."""
    if not np.all(working.contains(current_box.corners())):
        raise ValueError("current set is not inside the working region")
    wb = working.bounding_box()
    unsafe = []
    for ob in scenario.obstacles:
        clipped = lift_obstacle(ob).intersect(wb)
        if clipped is not None:
            unsafe.append(clipped)
    cert = cert if cert is not None else QuadraticCertificate.zero(model.n)
    return VerificationProblem(model, control, cert, current_box, unsafe, working, budget=budget)


def clamp_control(u: ControlInput, scenario: Scenario) -> ControlInput:
    lo, hi = scenario.speed_range
    v = min(max(u.v, lo), hi)
    w = min(max(u.omega, -scenario.max_turn), scenario.max_turn)
    return ControlInput(v, w)


def nearest_obstacle(state, obstacles: Sequence[HyperBox]) -> Optional[np.ndarray]:
    if not obstacles:
        return None
    pos = np.asarray(state[:2], dtype=float)
    centers = np.array([o.center for o in obstacles])
    return centers[int(np.argmin(np.linalg.norm(centers - pos, axis=1)))]


def _in_target(states: np.ndarray, target: HyperBox) -> np.ndarray:
    pos = states[:, :2]
    return np.all((target.lower <= pos) & (pos <= target.upper), axis=1)


@dataclass
class _Attempt:
    control: ControlInput
    cert: Optional[QuadraticCertificate]
    working: Optional[OctagonRegion]
    outcome: Optional[VerificationOutcome]
    wall_time: float
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.outcome is not None and self.outcome.valid


def _attempt(model, net, scenario, box, u, budget, seed) -> _Attempt:
    t0 = time.perf_counter()
    spec = WorkingRegionSpec(
        scenario.domain,
        interior_samples=scenario.interior_samples,
        horizon=2.0 * scenario.step_horizon,
        eps=scenario.working_eps,
        complement="bbox",
    )
    try:
        working, _ = build_working_region(model, u, box, spec, seed)
    except (ValueError, RuntimeError) as err:
        return _Attempt(u, None, None, None, time.perf_counter() - t0, f"working region: {err}")
    try:
        cert = predict(net, box, u)
    except EncodingError as err:
        return _Attempt(u, None, working, None, time.perf_counter() - t0, f"encoding: {err}")
    problem = step_problem(box, u, scenario, working, model, cert, budget)
    out = certify(problem, seed=seed)
    wall = time.perf_counter() - t0
    reason = "" if out.valid else f"verifier: {out.status.value}"
    if out.valid and wall > scenario.deadline_per_step:
        reason = f"deadline: {wall:.3f}s"
    return _Attempt(u, cert, working, out, wall, reason)


def plan(
    scenario: Scenario,
    model: SystemModel,
    net: Mlp,
    budget: int = ONLINE_BUDGET,
    rng_seed: int = 0,
) -> list[PlanStep]:
    """Run the certify-then-execute loop until the target, a stop, or time out."""
    state = scenario.start.center.copy()
    # the controller always steers at the target's reference point
    params = scenario.controller.retarget(scenario.reference)
    steps: list[PlanStep] = []
    for k in range(scenario.steps):
        state[2] = wrap_angle(float(state[2]))
        box = HyperBox.from_center(state, scenario.half_widths())
        u = clamp_control(base_controller(state, params), scenario)
        att = _attempt(model, net, scenario, box, u, budget, rng_seed + k)
        source, outcome = Source.BASE, Outcome.CERTIFIED
        base_failure = ""
        wall = att.wall_time
        if not att.valid or att.reason:
            base_failure = att.reason
            target = nearest_obstacle(state, scenario.obstacles)
            if target is not None:
                u = clamp_control(safe_controller(state, tuple(target), params), scenario)
                att = _attempt(model, net, scenario, box, u, budget, rng_seed + k)
                wall += att.wall_time
                source, outcome = Source.SAFE, Outcome.FALLBACK_CERTIFIED
            if not att.valid or att.reason:
                log.info("step %d stopped: %s", k, att.reason or base_failure)
                steps.append(
                    PlanStep(k, att.control, source, Outcome.STOPPED, None, None, wall, box,
                             att.working,
                             "" if att.outcome is None else att.outcome.status.value,
                             0 if att.outcome is None else att.outcome.boxes_explored,
                             base_failure=base_failure)
                )
                break
        seg = integrate(model, state, att.control, scenario.step_horizon)
        keep = first_exit(att.working, seg.states)
        exited = keep < len(seg)
        reached = _in_target(seg.states[:keep], scenario.target)
        if np.any(reached):
            keep = int(np.flatnonzero(reached)[0]) + 1
        seg = seg.truncate(keep)
        steps.append(
            PlanStep(k, att.control, source, outcome, att.cert, seg, wall, box, att.working,
                     att.outcome.status.value, att.outcome.boxes_explored, exited, base_failure)
        )
        state = seg.final.copy()
        if np.any(reached):
            break
    return steps


def target_reached(steps: Sequence[PlanStep], scenario: Scenario) -> bool:
    return any(
        s.executed is not None and np.any(_in_target(s.executed.states, scenario.target))
        for s in steps
    )


def obstacle_hits(steps: Sequence[PlanStep], scenario: Scenario) -> int:
    """Executed grid states inside any obstacle (closed boxes)."""
    hits = 0
    for s in steps:
        if s.executed is None:
            continue
        pos = s.executed.states[:, :2]
        for ob in scenario.obstacles:
            hits += int(np.sum(np.all((ob.lower <= pos) & (pos <= ob.upper), axis=1)))
    return hits


def recheck(step: PlanStep, scenario: Scenario, model: SystemModel, budget: int = ONLINE_BUDGET) -> bool:
    """Re-verify an executed step's stored certificate from scratch."""
    if step.cert is None or step.working is None:
        return False
    problem = step_problem(step.init, step.control_used, scenario, step.working, model, step.cert, budget)
    return certify(problem, seed=step.index).valid


def write_plan(steps: Sequence[PlanStep], out: TextIO) -> None:
    for s in steps:
        out.write(json.dumps(s.to_json(), sort_keys=True) + "\n")


def plan_metadata(steps: Sequence[PlanStep]) -> dict:
    return {"wall_times": [s.wall_time for s in steps]}
