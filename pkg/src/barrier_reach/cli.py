"""Command-line entry point: ``barrier-reach <command> [options]``.

Every command takes ``--seed``, ``--threads`` and ``--out``; options can also
come from a JSON file given with ``--config`` (flags override the file).
Primary outputs are deterministic for a fixed seed in single-threaded mode;
wall-clock measurements go to ``*_meta.json`` files next to them.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .barrier import evaluate
from .dynamics import MODELS, ControlInput, IntegrationError, get_model, integrate, wrap_angle
from .geometry import HyperBox
from .metann import (
    BOX_ENCODING,
    CAR_ANGLE_HALF,
    CAR_ENCODING,
    CAR_HEADING,
    CAR_POS_HALF,
    CAR_SPEED,
    CAR_TURN,
    Dataset,
    EncodingError,
    Mlp,
    SweepItem,
    generate_dataset,
    network_for,
    predict,
    train,
    validation_problem,
)
from .pipeline import LINEAR_DOMAIN, RegionError, WorkingRegionSpec
from .planner import Outcome, Scenario, Source, obstacle_hits, plan, plan_metadata, target_reached, write_plan
from .svg import Canvas, zero_level_segments
from .synthesis import BENCH_EPS_SCHEDULE, SynthesisConfig
from .verifier import OFFLINE_BUDGET, ONLINE_BUDGET, certify

log = logging.getLogger("barrier_reach")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CERT = 0, 1, 2, 3
THREADS_ENV = "BARRIER_REACH_THREADS"

# canonical-frame domain for car data generation: trajectories start at the
# origin and travel up to 40 units within the 4 s working horizon
CAR_CANONICAL_DOMAIN = HyperBox([-45.0, -45.0, -1.0], [45.0, 45.0, 8.0])
# random held-out car sets start in [0, 20]^2 and may travel 40 units
CAR_VALIDATION_DOMAIN = HyperBox([-45.0, -45.0, -7.0], [65.0, 65.0, 7.0])


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# shipped resources


def resource_path(*parts: str) -> Path:
    return Path(str(resources.files("barrier_reach").joinpath(*parts)))


def load_schema(name: str) -> dict:
    with open(resource_path("schemas", f"{name}.schema.json")) as fh:
        return json.load(fh)


def check_schema(obj, name: str) -> None:
    jsonschema.validate(obj, load_schema(name))


def default_car_model() -> Path:
    return resource_path("data", "car_metann.json")


def default_scenario() -> Path:
    return resource_path("data", "two_obstacles.json")


def write_json(path: Path, obj, schema: Optional[str] = None) -> None:
    if schema:
        check_schema(obj, schema)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# helpers


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def random_linear_sets(count: int, center_range: float, half_range, rng) -> list[HyperBox]:
    out = []
    for _ in range(count):
        c = rng.uniform(-center_range, center_range, 2)
        hw = rng.uniform(half_range[0], half_range[1], 2)
        out.append(HyperBox.from_center(c, hw))
    return out


def snake_grid(k: int, center_range: float, half_range, rng) -> list[HyperBox]:
    """k x k centers visited row by row, alternating direction, random sizes."""
    g = np.linspace(-center_range, center_range, k) if k > 1 else np.zeros(k)
    out = []
    for i, x in enumerate(g):
        for y in g if i % 2 == 0 else g[::-1]:
            out.append(HyperBox.from_center([x, y], rng.uniform(half_range[0], half_range[1], 2)))
    return out


def random_car_case(rng, position_range=(0.0, 20.0)) -> tuple[HyperBox, ControlInput]:
    """A car set inside the trained domain, at a random position, turning either way."""
    v = rng.uniform(*CAR_SPEED)
    w = rng.uniform(*CAR_TURN) * rng.choice([-1.0, 1.0])
    theta = rng.uniform(*CAR_HEADING)
    hw = np.r_[rng.uniform(*CAR_POS_HALF, 2), rng.uniform(*CAR_ANGLE_HALF)]
    pos = rng.uniform(position_range[0], position_range[1], 2)
    # reflection flips the heading; wrapping keeps the world heading small
    if w < 0:
        theta = -theta
    theta = wrap_angle(theta)
    return HyperBox.from_center([pos[0], pos[1], theta], hw), ControlInput(v, w)


def car_sweep(count: int, rng) -> list[SweepItem]:
    """Canonical-frame car sets ordered so neighbours have similar parameters."""
    items = []
    for _ in range(count):
        v = rng.uniform(*CAR_SPEED)
        w = rng.uniform(*CAR_TURN)
        theta = rng.uniform(*CAR_HEADING)
        hw = np.r_[rng.uniform(*CAR_POS_HALF, 2), rng.uniform(*CAR_ANGLE_HALF)]
        items.append((theta, v, w, hw))
    bins = max(1, int(round(math.sqrt(count))))
    width = (CAR_HEADING[1] - CAR_HEADING[0]) / bins

    def key(it):
        b = min(bins - 1, int((it[0] - CAR_HEADING[0]) / width))
        return (b, it[1] if b % 2 == 0 else -it[1])

    items.sort(key=key)
    return [SweepItem(HyperBox.from_center([0.0, 0.0, t], hw), ControlInput(v, w)) for t, v, w, hw in items]


def load_net(path: Path) -> tuple[Mlp, str]:
    with open(path) as fh:
        d = json.load(fh)
    check_schema(d, "model")
    net = Mlp.from_json(d)
    model_id = d.get("model_id") or ("car" if net.encoding_id == CAR_ENCODING else "")
    return net, model_id


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    model = get_model(args.model)
    rng = np.random.default_rng(args.seed)
    init = HyperBox.from_center(args.center, args.half_widths)
    if init.dim != model.n:
        raise UsageError(f"initial set has dimension {init.dim}, model {args.model!r} needs {model.n}")
    u = ControlInput(args.v, args.omega) if model.control_arity else None
    starts = np.concatenate([init.corners(), init.sample(rng, args.samples)])
    trajs = []
    try:
        for x0 in starts:
            trajs.append(integrate(model, x0, u, args.horizon, args.step))
    except IntegrationError as err:
        log.error("integration failed: %s", err)
        return EXIT_RUNTIME
    out = args.out
    with open(out / "simulate.csv", "w") as fh:
        fh.write(",".join(["run", "t"] + [f"x{i}" for i in range(model.n)]) + "\n")
        for k, tr in enumerate(trajs):
            for t, row in zip(tr.times, tr.states):
                fh.write(",".join([str(k)] + [f"{v:.17g}" for v in (t, *row)]) + "\n")
    pts = np.concatenate([tr.states[:, :2] for tr in trajs])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * max(float(np.max(hi - lo)), 1.0)
    canvas = Canvas(lo - pad, hi + pad)
    canvas.rect(init.lower[:2], init.upper[:2], "none", stroke="blue")
    for tr in trajs:
        canvas.polyline(tr.states[:, :2], "green", 1.0)
    (out / "simulate.svg").write_text(canvas.render())
    print(f"simulated {len(trajs)} trajectories of {len(trajs[0])} states -> {out / 'simulate.csv'}")
    return EXIT_OK


def _synthesis_config(args) -> SynthesisConfig:
    return SynthesisConfig(
        eps_schedule=tuple(args.eps_schedule),
        max_cegis_rounds=args.rounds,
        rng_seed=args.seed,
        budget=args.budget,
    )


def cmd_gen_data(args) -> int:
    model = get_model(args.model)
    rng = np.random.default_rng(args.seed)
    cfg = _synthesis_config(args)
    if args.model == "car":
        sweep = car_sweep(args.count, rng)
        spec = WorkingRegionSpec(CAR_CANONICAL_DOMAIN, horizon=args.region_horizon or 4.0, complement="bbox")
        encoding = CAR_ENCODING
    else:
        sweep = [SweepItem(b) for b in snake_grid(args.grid, args.center_range, args.half_range, rng)]
        spec = WorkingRegionSpec(LINEAR_DOMAIN, horizon=args.region_horizon or 10.0)
        encoding = BOX_ENCODING
    out = args.out
    if not sweep:
        data = Dataset([], encoding, model.name)
    else:
        with open(out / "gen_data_progress.txt", "w") as progress:
            data = generate_dataset(
                model, sweep, cfg, spec, args.sigma, args.augment_count, encoding,
                obstacles_mode=args.model == "car", progress=progress,
            )
    with open(out / "dataset.jsonl", "w") as fh:
        data.write(fh)
    report = {
        "model": model.name,
        "sweep_size": len(sweep),
        "pairs": len(data),
        "successes": len(sweep) - len(data.misses),
        "misses": data.misses,
    }
    write_json(out / "gen_data_report.json", report, "gen_data_report")
    print(f"{report['successes']}/{len(sweep)} sets certified, {len(data)} pairs -> {out / 'dataset.jsonl'}")
    return EXIT_OK


def cmd_train(args) -> int:
    with open(args.dataset) as fh:
        data = Dataset.read(fh)
    if not data.pairs:
        raise UsageError("dataset is empty")
    n = get_model(data.model_id).n
    net = network_for(n, data.encoding_id, tuple(args.hidden), args.seed)
    t0 = time.perf_counter()
    net, history = train(net, data, args.epochs, args.rate, args.batch_size, args.seed)
    wall = time.perf_counter() - t0
    d = net.to_json()
    d["model_id"] = data.model_id
    write_json(args.out / "model.json", d, "model")
    with open(args.out / "loss.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for k, loss in enumerate(history):
            fh.write(f"{k},{loss:.17g}\n")
    write_json(args.out / "train_meta.json", {"wall_time": wall})
    final = history[-1] if history else float("nan")
    print(f"trained on {len(data)} pairs for {len(history)} epochs, final L1 loss {final:.6g}")
    return EXIT_OK


def car_validation_spec() -> WorkingRegionSpec:
    return WorkingRegionSpec(CAR_VALIDATION_DOMAIN, horizon=4.0, eps=0.1, complement="bbox")


def _case(model, net, init, u, spec, budget, seed, threads):
    """Predict and certify one held-out set; returns (status, boxes, wall)."""
    t0 = time.perf_counter()
    try:
        cert = predict(net, init, u)
        problem = validation_problem(model, u, init, cert, spec, budget, seed)
    except (EncodingError, RegionError) as err:
        return f"skipped: {err}", 0, time.perf_counter() - t0
    out = certify(problem, threads=threads, seed=seed)
    return out.status.value, out.boxes_explored, time.perf_counter() - t0


def cmd_validate(args) -> int:
    if args.n_test <= 0:
        raise UsageError("--n-test must be positive")
    net, model_id = load_net(args.model_file)
    model = get_model(args.model or model_id)
    rng = np.random.default_rng(args.seed)
    cases, walls = [], []
    successes = 0
    for k in range(args.n_test):
        if model.name == "car":
            init, u = random_car_case(rng)
            spec = car_validation_spec()
        else:
            init = random_linear_sets(1, args.center_range, args.half_range, rng)[0]
            u = None
            spec = WorkingRegionSpec(LINEAR_DOMAIN, eps=args.eps)
        status, boxes, wall = _case(model, net, init, u, spec, args.budget, args.seed + k, args.threads)
        successes += status == "valid"
        cases.append({"index": k, "init": init.to_json(), "status": status, "boxes_explored": boxes})
        walls.append(wall)
    lo, hi = wilson_interval(successes, args.n_test)
    report = {
        "model": model.name,
        "n_test": args.n_test,
        "successes": successes,
        "rate": successes / args.n_test,
        "wilson95": [lo, hi],
        "cases": cases,
    }
    write_json(args.out / "validate.json", report, "validate_report")
    write_json(args.out / "validate_meta.json", {"wall_times": walls})
    with open(args.out / "validate_cases.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "status", "boxes_explored"])
        for c in cases:
            w.writerow([c["index"], c["status"], c["boxes_explored"]])
    print(
        f"{model.name}: {successes}/{args.n_test} valid, rate {report['rate']:.3f} "
        f"(95% Wilson [{lo:.3f}, {hi:.3f}])"
    )
    if args.assert_rate is not None and report["rate"] < args.assert_rate:
        print(f"success rate below required {args.assert_rate}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def plan_svg(steps, scenario: Scenario) -> str:
    pts = [scenario.start.center[:2], scenario.target.lower, scenario.target.upper]
    for ob in scenario.obstacles:
        pts += [ob.lower, ob.upper]
    for s in steps:
        if s.executed is not None:
            pts += list(s.executed.states[:, :2])
    pts = np.array(pts)
    lo, hi = pts.min(axis=0) - 2.0, pts.max(axis=0) + 2.0
    canvas = Canvas(lo, hi)
    for ob in scenario.obstacles:
        canvas.rect(ob.lower, ob.upper, "red", opacity=0.8)
    canvas.rect(scenario.target.lower, scenario.target.upper, "none", stroke="blue")
    for s in steps:
        if s.cert is None or s.working is None:
            continue
        wb = s.working.bounding_box()
        theta = float(s.init.center[2])

        def field(xy, cert=s.cert, working=s.working, theta=theta):
            full = np.column_stack([xy, np.full(len(xy), theta)])
            vals = evaluate(cert, full)
            # outside the working region the reach set is empty
            return np.where(working.contains(full), vals, np.abs(vals) + 1.0)

        canvas.segments(zero_level_segments(field, wb.lower[:2], wb.upper[:2]), "black", 0.8)
    for s in steps:
        if s.executed is None:
            continue
        safe = s.source is Source.SAFE
        canvas.polyline(s.executed.states[:, :2], "green", 2.0, dash="6,3" if safe else "")
        if safe:
            x, y = s.executed.states[0, :2]
            canvas.text(x, y, f"safe {s.index}", 11, "darkorange")
    stop = [s for s in steps if s.outcome is Outcome.STOPPED]
    if stop:
        x, y = stop[0].init.center[:2]
        canvas.text(x, y, "STOP", 14, "red")
    return canvas.render()


def cmd_plan(args) -> int:
    path = args.scenario or default_scenario()
    with open(path) as fh:
        raw = json.load(fh)
    check_schema(raw, "scenario")
    scenario = Scenario.from_json(raw)
    net, _ = load_net(args.model_file or default_car_model())
    model = get_model("car")
    steps = plan(scenario, model, net, args.budget, args.seed)
    with open(args.out / "plan.jsonl", "w") as fh:
        for s in steps:
            check_schema(s.to_json(), "plan_step")
        write_plan(steps, fh)
    write_json(args.out / "plan_meta.json", plan_metadata(steps))
    (args.out / "plan.svg").write_text(plan_svg(steps, scenario))
    fallbacks = sum(s.source is Source.SAFE and s.outcome is not Outcome.STOPPED for s in steps)
    print(
        f"{len(steps)} steps, {fallbacks} safe fallbacks, target reached: "
        f"{target_reached(steps, scenario)}, obstacle hits: {obstacle_hits(steps, scenario)}, "
        f"stopped: {any(s.outcome is Outcome.STOPPED for s in steps)}"
    )
    return EXIT_OK


def bench_summary(walls: Sequence[float], deadline: float) -> dict:
    w = np.asarray(walls, dtype=float)
    return {
        "calls": int(w.size),
        "within_deadline": int(np.sum(w <= deadline)),
        "fraction_within_deadline": float(np.mean(w <= deadline)),
        "deadline": deadline,
        "total": float(w.sum()),
        "avg": float(w.mean()),
        "min": float(w.min()),
        "max": float(w.max()),
    }


def cmd_bench(args) -> int:
    if args.n <= 0:
        raise UsageError("--n must be positive")
    net, model_id = load_net(args.model_file or default_car_model())
    model = get_model(model_id or "car")
    rng = np.random.default_rng(args.seed)
    rows, walls = [], []
    for k in range(args.n):
        if model.name == "car":
            init, u = random_car_case(rng)
            spec = car_validation_spec()
        else:
            init = random_linear_sets(1, 2.0, (0.05, 0.3), rng)[0]
            u = None
            spec = WorkingRegionSpec(LINEAR_DOMAIN, eps=args.eps)
        status, boxes, wall = _case(model, net, init, u, spec, args.budget, args.seed + k, args.threads)
        rows.append((k, status, boxes))
        walls.append(wall)
    # statuses and box counts are deterministic; timings live in separate files
    with open(args.out / "bench_calls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "status", "boxes_explored"])
        w.writerows(rows)
    with open(args.out / "bench_latency.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "wall_time", "boxes_explored"])
        for (k, _, boxes), t in zip(rows, walls):
            w.writerow([k, f"{t:.6f}", boxes])
    summary = bench_summary(walls, args.deadline)
    summary["model"] = model.name
    summary["valid"] = sum(r[1] == "valid" for r in rows)
    write_json(args.out / "bench_meta.json", summary, "bench_report")
    print(
        f"{summary['within_deadline']}/{summary['calls']} calls within {args.deadline:g}s; "
        f"Total {summary['total']:.3f}s Avg {summary['avg']:.3f}s "
        f"min {summary['min']:.3f}s max {summary['max']:.3f}s"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _threads_default() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if value < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"verifier threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--config", type=Path, default=None, help="JSON file of option values")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="barrier-reach", description="Reach sets from quadratic barrier certificates.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="simulate trajectories from a box")
    s.add_argument("--model", default="lin-real", choices=sorted(MODELS))
    s.add_argument("--center", type=float, nargs="+", default=[1.0, 1.0])
    s.add_argument("--half-widths", type=float, nargs="+", default=[0.1, 0.1])
    s.add_argument("--samples", type=int, default=20, help="interior starts besides the corners")
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--step", type=float, default=0.01)
    s.add_argument("--v", type=float, default=2.0, help="car speed")
    s.add_argument("--omega", type=float, default=0.05, help="car turn rate")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-data", parents=[common], help="synthesize a training dataset")
    g.add_argument("--model", default="lin-real", choices=sorted(MODELS))
    g.add_argument("--grid", type=int, default=5, help="k for a k x k sweep (linear models)")
    g.add_argument("--count", type=int, default=300, help="sweep size (car)")
    g.add_argument("--center-range", type=float, default=2.0)
    g.add_argument("--half-range", type=float, nargs=2, default=[0.05, 0.3])
    g.add_argument("--eps-schedule", type=float, nargs="+", default=list(BENCH_EPS_SCHEDULE))
    g.add_argument("--rounds", type=int, default=20)
    g.add_argument("--budget", type=int, default=OFFLINE_BUDGET)
    g.add_argument("--region-horizon", type=float, default=None)
    g.add_argument("--augment-count", type=int, default=0)
    g.add_argument("--sigma", type=float, default=0.05)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train the meta-network")
    t.add_argument("--dataset", type=Path, required=False)
    t.add_argument("--epochs", type=int, default=20_000)
    t.add_argument("--rate", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("validate", parents=[common], help="held-out success rate of a network")
    v.add_argument("--model-file", type=Path, required=False)
    v.add_argument("--model", default=None, choices=sorted(MODELS),
                   help="system (default: from the model file)")
    v.add_argument("--n-test", type=int, default=100)
    v.add_argument("--center-range", type=float, default=2.0)
    v.add_argument("--half-range", type=float, nargs=2, default=[0.05, 0.3])
    v.add_argument("--eps", type=float, default=0.1, help="working-region bloating")
    v.add_argument("--budget", type=int, default=OFFLINE_BUDGET)
    v.add_argument("--assert-rate", type=float, default=None)
    v.set_defaults(func=cmd_validate)

    pl = sub.add_parser("plan", parents=[common], help="run the online planner on a scene")
    pl.add_argument("--scenario", type=Path, default=None, help="scene JSON (default: shipped scene)")
    pl.add_argument("--model-file", type=Path, default=None, help="car network (default: shipped)")
    pl.add_argument("--budget", type=int, default=ONLINE_BUDGET)
    pl.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", parents=[common], help="online certification latency")
    b.add_argument("--model-file", type=Path, default=None, help="network (default: shipped car)")
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--budget", type=int, default=ONLINE_BUDGET)
    b.add_argument("--deadline", type=float, default=2.0)
    b.add_argument("--eps", type=float, default=0.1, help="working-region bloating (linear models)")
    b.set_defaults(func=cmd_bench)
    return p


_REQUIRED = {"train": ["dataset"], "validate": ["model_file"]}


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            with open(args.config) as fh:
                conf = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config {args.config}: {err}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(k.replace("-", "_") for k in conf if k.replace("-", "_") not in known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in conf.items()})
        args = parser.parse_args(argv)
    for key in _REQUIRED.get(args.command, []):
        if getattr(args, key) is None:
            raise UsageError(f"{args.command}: --{key.replace('_', '-')} is required")
    for key in ("dataset", "model_file", "scenario", "out"):
        if isinstance(getattr(args, key, None), str):
            setattr(args, key, Path(getattr(args, key)))
    if args.threads is None:
        args.threads = _threads_default()
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FileNotFoundError, jsonschema.ValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, RegionError) as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
