"""Twin calibration: recover hidden material parameters from a synthetic episode.

Generates a 2-day episode on a 37x37-CV office with parameters drawn inside
the tuning bounds, calibrates on day 1 and reports day-2 TS-MAE for default
and calibrated parameters.

    python scripts/twin_calibration.py --draws 3 --budget 500
"""

import argparse
import time

import numpy as np

from sbsim import synth
from sbsim.building import WeatherConfig
from sbsim.calibration import ParamBounds, ReplayEpisode, calibrate, n_step_replay, replay_error, ts_mae
from sbsim.env import BuildingEnv, run_episode
from sbsim.grid import MaterialParams
from sbsim.hvac import ZoneSetpoints
from sbsim.policies import default_schedule

DAY = 288


def twin_building():
    synth.MIN_AIRFLOW_SHARE = 0.3
    return synth.office_building(2, 2, 15, 15, cv_size=0.25,
                                 setpoints=ZoneSetpoints(21, 23, 10, 32),
                                 weather=WeatherConfig("sinusoid", 8, 8, 15, ""))


def hidden_params(draw: int, bounds: ParamBounds, swap_prob: float, swap_radius: float):
    rng = np.random.default_rng(draw)
    hidden = dict(zip(bounds.names, rng.uniform(bounds.lower(), bounds.upper())))
    hidden.update(swap_prob=swap_prob, swap_radius=swap_radius)
    return MaterialParams().replace(**hidden)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=1, help="hidden parameter draws (seeds 0..n-1)")
    ap.add_argument("--budget", type=int, default=500)
    ap.add_argument("--optimizer", choices=["random", "golden"], default="golden")
    ap.add_argument("--swap-prob", type=float, default=0.003)
    ap.add_argument("--swap-radius", type=float, default=5.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    b = twin_building()
    pb = ParamBounds()
    print(f"building {b.floors[0].cells.shape}, {len(b.zones)} zones")
    print(f"{'draw':>4} {'sec':>5} {'train':>7} {'uncal':>7} {'cal':>7} {'ratio':>6} {'day2 ratio':>10}")
    for draw in range(args.draws):
        truth = b.with_params(hidden_params(draw, pb, args.swap_prob, args.swap_radius))
        ep = run_episode(BuildingEnv(truth, seed=4), default_schedule(b), 2 * DAY)
        train = ReplayEpisode.from_archive(ep, b, 0, DAY)
        val = ReplayEpisode.from_archive(ep, b, DAY, 2 * DAY, warmup=DAY)
        day2 = ReplayEpisode.from_archive(ep, b, DAY, 2 * DAY)
        t = time.perf_counter()
        best, _ = calibrate(b, train, pb, args.budget, args.optimizer, args.workers, seed=1)
        secs = time.perf_counter() - t
        cal = MaterialParams().replace(**best.params)
        u, c = replay_error(b, MaterialParams(), val), replay_error(b, cal, val)
        u2 = ts_mae(day2.T_real, n_step_replay(b, MaterialParams(), day2))
        c2 = ts_mae(day2.T_real, n_step_replay(b, cal, day2))
        print(f"{draw:>4} {secs:>5.0f} {best.train_eps:>7.4f} {u:>7.4f} {c:>7.4f} "
              f"{c / u:>6.3f} {c2 / u2:>10.3f}", flush=True)


if __name__ == "__main__":
    main()
