"""Simulation engine: working regions from trajectory clouds, and reach sets."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .barrier import QuadraticCertificate, evaluate
from .dynamics import DEFAULT_STEP, ControlInput, IntegrationError, SystemModel, integrate_many
from .geometry import HyperBox, OctagonRegion, RegionComplement, bloat, clip_to_box, octagon_hull

LINEAR_DOMAIN = HyperBox([-5.0, -5.0], [5.0, 5.0])
CAR_DOMAIN = HyperBox([-10.0, -10.0, -7.0], [30.0, 30.0, 7.0])


class RegionError(RuntimeError):
    """Simulated states left the global domain."""

    def __init__(self, start: np.ndarray, message: str):
        super().__init__(message)
        self.start = start


@dataclass(frozen=True)
class WorkingRegionSpec:
    domain: HyperBox
    interior_samples: int = 20
    horizon: float = 10.0
    step: float = DEFAULT_STEP
    eps: float = 0.1
    # "global": unsafe = domain minus region; "bbox": bounding box of the region minus region
    complement: str = "global"

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.interior_samples < 0:
            raise ValueError("interior_samples must be nonnegative")
        if self.complement not in ("global", "bbox"):
            raise ValueError("complement must be 'global' or 'bbox'")

    def with_eps(self, eps: float) -> "WorkingRegionSpec":
        return replace(self, eps=eps)


def default_spec(model_name: str, **overrides) -> WorkingRegionSpec:
    if model_name == "car":
        base = WorkingRegionSpec(CAR_DOMAIN, horizon=4.0, complement="bbox")
    else:
        base = WorkingRegionSpec(LINEAR_DOMAIN)
    return replace(base, **overrides)


def start_points(init: HyperBox, count: int, rng: np.random.Generator) -> np.ndarray:
    corners = init.corners()
    if count == 0:
        return corners
    return np.concatenate([corners, init.sample(rng, count)])


def simulate_cloud(
    model: SystemModel,
    control: Optional[ControlInput],
    init: HyperBox,
    spec: WorkingRegionSpec,
    rng_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """All grid states of trajectories from the corners and random interior starts.

    Returns ``(starts, states)`` with ``states`` shaped ``(steps + 1, starts, n)``.
    """
    if not spec.domain.contains_box(init):
        raise ValueError("initial set is not inside the domain")
    rng = np.random.default_rng(rng_seed)
    starts = start_points(init, spec.interior_samples, rng)
    try:
        _, states = integrate_many(model, starts, control, spec.horizon, spec.step)
    except IntegrationError as err:
        raise RegionError(starts[0], f"trajectory blew up at t={err.t:g}") from err
    inside = np.all((spec.domain.lower <= states) & (states <= spec.domain.upper), axis=2)
    if not np.all(inside):
        bad = int(np.flatnonzero(~np.all(inside, axis=0))[0])
        raise RegionError(
            starts[bad], f"trajectory from {starts[bad].tolist()} leaves the domain"
        )
    return starts, states


def build_working_region(
    model: SystemModel,
    control: Optional[ControlInput],
    init: HyperBox,
    spec: WorkingRegionSpec,
    rng_seed: int = 0,
) -> tuple[OctagonRegion, RegionComplement]:
    """Simulate, take the octagon of the cloud, bloat it, and complement it."""
    _, states = simulate_cloud(model, control, init, spec, rng_seed)
    hull = octagon_hull(states.reshape(-1, model.n))
    region = bloat(hull, spec.eps)
    if spec.complement == "bbox":
        domain = region.bounding_box()
    else:
        # the sampled states are inside the domain, so clipping keeps all of them
        domain = spec.domain
        region = clip_to_box(region, domain)
    return region, RegionComplement(region, domain)


@dataclass(frozen=True)
class ReachSet:
    """``{x in working : B(x) <= 0}``."""

    cert: QuadraticCertificate
    working: OctagonRegion

    def __post_init__(self):
        if self.cert.dim != self.working.dim:
            raise ValueError("certificate and region dimensions differ")

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.working.contains(pts) & (evaluate(self.cert, pts) <= 0)

    def to_json(self) -> dict:
        return {"cert": self.cert.to_json(), "working": self.working.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "ReachSet":
        return cls(QuadraticCertificate.from_json(d["cert"]), OctagonRegion.from_json(d["working"]))


def reach_set(cert: QuadraticCertificate, working: OctagonRegion) -> ReachSet:
    return ReachSet(cert, working)


def reach_membership(rs: ReachSet, x) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (rs.working.dim,):
        raise ValueError("dimension mismatch")
    return bool(rs.contains(x)[0])


def first_exit(region: OctagonRegion, states: np.ndarray) -> int:
    """Number of leading states inside ``region`` (index of the first exit)."""
    inside = region.contains(states)
    out = np.flatnonzero(~inside)
    return int(out[0]) if out.size else states.shape[0]
