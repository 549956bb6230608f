"""Median wall time of one environment step on a 2-floor, ~100k-CV building.

    python scripts/benchmark_step.py --steps 100
"""

import argparse
import time

import numpy as np

from sbsim.env import BuildingEnv
from sbsim.policies import default_schedule
from sbsim.synth import benchmark_building


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--cvs-per-floor", type=int, default=50_000)
    ap.add_argument("--floors", type=int, default=2)
    args = ap.parse_args()

    b = benchmark_building(args.cvs_per_floor, args.floors)
    t = time.perf_counter()
    env = BuildingEnv(b, seed=0)
    env.reset()
    print(f"{sum(g.cells.size for g in b.floors)} CVs on {len(b.floors)} floors, "
          f"setup {time.perf_counter() - t:.2f} s")
    policy = default_schedule(b)
    times, sweeps = [], []
    for _ in range(args.steps):
        t = time.perf_counter()
        _, _, _, info = env.step(policy(env.t))
        times.append(time.perf_counter() - t)
        sweeps.append(max(info["sweeps"]))
    times = np.array(times)
    print(f"median {np.median(times):.4f} s, p95 {np.percentile(times, 95):.4f} s, "
          f"max {times.max():.4f} s, mean sweeps {np.mean(sweeps):.1f}")


if __name__ == "__main__":
    main()
