"""Search two-obstacle scenes for one that exercises the safe fallback.

Obstacles are square boxes centred near the straight line from the start to
the target, displaced sideways by a few offsets. A scene is accepted when
the plan reaches the target without stopping or touching an obstacle and at
least one executed step came from the safe controller.

    python3 scripts/search_scene.py --out src/barrier_reach/data/two_obstacles.json
"""

import argparse
import itertools
import json
import logging
import time
from pathlib import Path

import numpy as np

from barrier_reach import cli
from barrier_reach.dynamics import ControllerParams, car
from barrier_reach.geometry import HyperBox
from barrier_reach.planner import Outcome, Scenario, Source, obstacle_hits, plan, target_reached

log = logging.getLogger("search_scene")

START = (25.0, 25.0)
TARGET = HyperBox([0.0, 0.0], [4.0, 4.0])


def obstacle_at(fraction: float, offset: float, half: float) -> HyperBox:
    """Square centred ``fraction`` of the way to the target, ``offset`` to the left."""
    start = np.array(START)
    goal = TARGET.center
    along = goal - start
    normal = np.array([-along[1], along[0]]) / np.linalg.norm(along)
    c = start + fraction * along + offset * normal
    return HyperBox.from_center(c, [half, half])


def scene(obstacles, heading: float, alpha3: float) -> Scenario:
    return Scenario(
        HyperBox.from_center([START[0], START[1], heading], [0.05, 0.05, 0.02]),
        TARGET,
        tuple(obstacles),
        controller=ControllerParams(alpha1=2.0, alpha3=alpha3),
    )


def score(sc: Scenario, net) -> dict:
    t0 = time.perf_counter()
    steps = plan(sc, car(), net)
    return {
        "steps": len(steps),
        "fallbacks": sum(s.source is Source.SAFE and s.outcome is not Outcome.STOPPED for s in steps),
        "stopped": any(s.outcome is Outcome.STOPPED for s in steps),
        "hits": obstacle_hits(steps, sc),
        "reached": target_reached(steps, sc),
        "wall": time.perf_counter() - t0,
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model-file", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--heading", type=float, default=-2.36)
    p.add_argument("--alpha3", type=float, default=0.5, help="steering gain")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    net, _ = cli.load_net(args.model_file or cli.default_car_model())

    # sideways gap between the path and the nearest obstacle corner, most robust first;
    # the corner must reach into the base step's working region but clear a full safe turn
    gaps = (0.15, 0.1, 0.2, 0.05)
    half = 1.0
    corner = half * np.sqrt(2.0)
    first = [(f, g) for f in (0.2, 0.15) for g in gaps]
    second = [(f, g) for f in (0.8, 0.75) for g in gaps]
    for (f1, g1), (f2, g2) in itertools.product(first, second):
        # the two obstacles sit on opposite sides of the path
        o1, o2 = corner + g1, -(corner + g2)
        obstacles = [obstacle_at(f1, o1, half), obstacle_at(f2, o2, half)]
        sc = scene(obstacles, args.heading, args.alpha3)
        if sc.start_overlaps_obstacle():
            continue
        s = score(sc, net)
        log.info("obstacles at %s/%+.2f and %s/%+.2f: %s", f1, o1, f2, o2, s)
        if s["fallbacks"] >= 1 and not s["stopped"] and s["hits"] == 0 and s["reached"]:
            args.out.write_text(json.dumps(sc.to_json(), indent=1, sort_keys=True) + "\n")
            log.info("wrote %s", args.out)
            return
    raise SystemExit("no scene met the requirements")


if __name__ == "__main__":
    main()
