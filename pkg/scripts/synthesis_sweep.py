"""Synthesis success rate over random linear initial sets.

    python3 scripts/synthesis_sweep.py lin-real --count 50
"""

import argparse
import time

import numpy as np

from barrier_reach.dynamics import get_model
from barrier_reach.geometry import HyperBox
from barrier_reach.pipeline import LINEAR_DOMAIN, WorkingRegionSpec
from barrier_reach.synthesis import BENCH_EPS_SCHEDULE, SynthesisConfig, synthesize_with_bloating


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("model", choices=["lin-real", "lin-complex"])
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--center-range", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--time-limit", type=float, default=60.0)
    args = p.parse_args()

    model = get_model(args.model)
    rng = np.random.default_rng(args.seed)
    spec = WorkingRegionSpec(LINEAR_DOMAIN)
    ok = 0
    for k in range(args.count):
        init = HyperBox.from_center(
            rng.uniform(-args.center_range, args.center_range, 2), rng.uniform(0.05, 0.3, 2)
        )
        cfg = SynthesisConfig(eps_schedule=BENCH_EPS_SCHEDULE, rng_seed=k)
        t0 = time.perf_counter()
        res = synthesize_with_bloating(model, None, init, LINEAR_DOMAIN, cfg, spec)
        wall = time.perf_counter() - t0
        hit = res.verified and wall <= args.time_limit
        ok += hit
        tries = " ".join(f"{eps:g}:{'ok' if good else 'no'}/{rounds}" for eps, good, rounds in res.attempts)
        print(f"{k:3d} center={np.round(init.center, 2)} verified={res.verified} {wall:6.1f}s  {tries}", flush=True)
    print(f"{ok}/{args.count} verified within {args.time_limit:g}s")


if __name__ == "__main__":
    main()
