"""Vector fields, controllers and a fixed-step RK4 integrator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import Callable, Optional, Sequence, TextIO, Union

import numpy as np

from .expr import Add, Const, Cos, Mul, Neg, Param, Sin, Var, evaluate

DEFAULT_STEP = 0.01


@dataclass(frozen=True)
class ControlInput:
    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError("control inputs must be finite")

    def params(self) -> dict:
        return {"v": self.v, "omega": self.omega}


@dataclass(frozen=True)
class SystemModel:
    """``dx/dt = f(x, u)`` with a numeric evaluator and a symbolic twin.

    ``field`` maps an ``(m, n)`` array of states and a control (or None)
    to an ``(m, n)`` array of derivatives.
    """

    name: str
    n: int
    field: Callable[[np.ndarray, Optional[ControlInput]], np.ndarray] = dc_field(repr=False)
    symbolic_form: tuple = dc_field(repr=False)
    control_arity: int = 0

    def params(self, u: Optional[ControlInput]) -> dict:
        if self.control_arity and u is None:
            raise ValueError(f"model {self.name!r} needs a control input")
        return u.params() if u is not None else {}

    def evaluate_symbolic(self, x, u: Optional[ControlInput] = None, backend=None) -> list:
        from .expr import FLOAT

        p = self.params(u)
        return [evaluate(e, x, p, backend or FLOAT) for e in self.symbolic_form]

    def __call__(self, x, u: Optional[ControlInput] = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"state dimension {x.shape[-1]} != model dimension {self.n}")
        if self.control_arity and u is None:
            raise ValueError(f"model {self.name!r} needs a control input")
        return self.field(x, u)


def _lin(a: np.ndarray):
    def f(x, u=None):
        return x @ a.T

    return f


def linear_model(name: str, a) -> SystemModel:
    a = np.array(a, dtype=float)
    sym = []
    for row in a:
        terms = []
        for j, c in enumerate(row):
            if c == 0.0:
                continue
            if c == 1.0:
                terms.append(Var(j))
            elif c == -1.0:
                terms.append(Neg(Var(j)))
            else:
                terms.append(Mul(Const(c), Var(j)))
        sym.append(terms[0] if len(terms) == 1 else Add(tuple(terms)))
    return SystemModel(name, a.shape[0], _lin(a), tuple(sym))


def lin_real() -> SystemModel:
    """x' = -x, y' = -2y."""
    return linear_model("lin-real", [[-1.0, 0.0], [0.0, -2.0]])


def lin_complex() -> SystemModel:
    """x' = y, y' = -0.2x - 0.2y."""
    return linear_model("lin-complex", [[0.0, 1.0], [-0.2, -0.2]])


def _car_field(x, u):
    out = np.empty_like(x)
    out[..., 0] = u.v * np.cos(x[..., 2])
    out[..., 1] = u.v * np.sin(x[..., 2])
    out[..., 2] = u.omega
    return out


def car() -> SystemModel:
    """Kinematic car: x' = v cos(theta), y' = v sin(theta), theta' = omega."""
    sym = (
        Mul(Param("v"), Cos(Var(2))),
        Mul(Param("v"), Sin(Var(2))),
        Param("omega"),
    )
    return SystemModel("car", 3, _car_field, sym, control_arity=2)


MODELS: dict[str, Callable[[], SystemModel]] = {
    "lin-real": lin_real,
    "lin-complex": lin_complex,
    "car": car,
}


def get_model(name: str) -> SystemModel:
    try:
        return MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# ---------------------------------------------------------------------------
# integration


class IntegrationError(RuntimeError):
    def __init__(self, t: float, message: str = ""):
        super().__init__(message or f"non-finite state at t={t:g}")
        self.t = t


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    control: Optional[ControlInput] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] != t.shape[0]:
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def truncate(self, count: int) -> "Trajectory":
        return Trajectory(self.times[:count], self.states[:count], self.control)

    def write_csv(self, out: TextIO, header: bool = True) -> None:
        n = self.states.shape[1]
        if header:
            out.write(",".join(["t"] + [f"x{i}" for i in range(n)]) + "\n")
        for t, row in zip(self.times, self.states):
            out.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")


Feedback = Callable[[np.ndarray], ControlInput]
ControlArg = Union[ControlInput, Feedback, None]


def _steps(horizon: float, step: float) -> int:
    if step <= 0:
        raise ValueError("integration step must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    return int(math.floor(horizon / step + 1e-9))


def rk4_step(model: SystemModel, x: np.ndarray, u, h: float) -> np.ndarray:
    # overflow surfaces as a non-finite state, which callers report
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = model.field(x, u)
        k2 = model.field(x + 0.5 * h * k1, u)
        k3 = model.field(x + 0.5 * h * k2, u)
        k4 = model.field(x + h * k3, u)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_many(
    model: SystemModel,
    x0: np.ndarray,
    u: Optional[ControlInput],
    horizon: float,
    step: float = DEFAULT_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate a batch of starts at once; returns ``(times, states[k, m, n])``."""
    x = np.array(x0, dtype=float, ndmin=2)
    if x.shape[1] != model.n:
        raise ValueError("initial state dimension mismatch")
    if model.control_arity and u is None:
        raise ValueError(f"model {model.name!r} needs a control input")
    count = _steps(horizon, step)
    out = np.empty((count + 1,) + x.shape)
    out[0] = x
    for k in range(count):
        x = rk4_step(model, x, u, step)
        if not np.all(np.isfinite(x)):
            raise IntegrationError((k + 1) * step)
        out[k + 1] = x
    return step * np.arange(count + 1), out


def integrate(
    model: SystemModel,
    x0,
    u: ControlArg = None,
    horizon: float = 1.0,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Classical fixed-step RK4.

    ``u`` is either a constant :class:`ControlInput` or a feedback law that
    is re-evaluated at the start of every step (zero-order hold).
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"initial state must have dimension {model.n}")
    if callable(u) and not isinstance(u, ControlInput):
        count = _steps(horizon, step)
        states = np.empty((count + 1, model.n))
        states[0] = x0
        x = x0[None, :]
        for k in range(count):
            uk = u(x[0])
            x = rk4_step(model, x, uk, step)
            if not np.all(np.isfinite(x)):
                raise IntegrationError((k + 1) * step)
            states[k + 1] = x[0]
        return Trajectory(step * np.arange(count + 1), states, None)
    times, states = integrate_many(model, x0[None, :], u, horizon, step)
    return Trajectory(times, states[:, 0, :], u)


# ---------------------------------------------------------------------------
# controllers


@dataclass(frozen=True)
class ControllerParams:
    alpha1: float = 0.2
    alpha2: float = 3.54
    alpha3: float = 0.06
    target: tuple = (0.0, 0.0)

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) <= 0:
            raise ValueError("controller gains must be positive")
        object.__setattr__(self, "target", tuple(float(t) for t in self.target))

    def retarget(self, target: Sequence[float]) -> "ControllerParams":
        return ControllerParams(self.alpha1, self.alpha2, self.alpha3, tuple(target))

    def to_json(self) -> dict:
        return {
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "alpha3": self.alpha3,
            "target": list(self.target),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ControllerParams":
        return cls(d["alpha1"], d["alpha2"], d["alpha3"], tuple(d["target"]))


def wrap_angle(a: float) -> float:
    """Map an angle to ``(-pi, pi]``."""
    r = math.remainder(a, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


def bearing(state, target) -> float:
    """Direction from the car towards ``target``."""
    return math.atan2(target[1] - state[1], target[0] - state[0])


def base_controller(state, params: ControllerParams) -> ControlInput:
    x, y, theta = (float(s) for s in state[:3])
    xr, yr = params.target
    dist = math.hypot(x - xr, y - yr)
    if dist == 0.0:
        return ControlInput(0.0, 0.0)
    v = params.alpha1 * (1.0 - math.exp(-params.alpha2 * dist))
    omega = params.alpha3 * wrap_angle(bearing((x, y), (xr, yr)) - theta)
    return ControlInput(v, omega)


def safe_controller(state, obstacle_center, params: ControllerParams) -> ControlInput:
    """Aim the base law at the obstacle and turn the other way."""
    u = base_controller(state, params.retarget(obstacle_center))
    return ControlInput(u.v, -u.omega)


def shift_state(x, dx) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("shift_state expects a car state (x, y, theta)")
    out = x.copy()
    out[..., 0] -= dx[0]
    out[..., 1] -= dx[1]
    return out


def reflect_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 3:
        raise ValueError("reflect_state expects a car state (x, y, theta)")
    out = x.copy()
    out[..., 1] = -out[..., 1]
    out[..., 2] = -out[..., 2]
    return out
