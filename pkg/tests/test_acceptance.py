"""Acceptance checks. Each test prints one PASS/FAIL line with its measured value."""

import datetime as dt
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from PIL import Image

from sbsim import synth
from sbsim.building import SimulationConfig, WeatherConfig
from sbsim.calibration import ParamBounds, ReplayEpisode, calibrate, n_step_replay, replay_error, ts_mae
from sbsim.env import BuildingEnv, RewardContext, run_episode
from sbsim.episode import load_episode, save_episode
from sbsim.fd import BoundaryConditions, ThermalState, energy_audit, fd_step
from sbsim.grid import CellClass, FloorplanGrid, MaterialParams, build_oriented_fields, classify_cvs
from sbsim.hvac import DevicePower, SetpointVector, ZoneSetpoints
from sbsim.ingest import build_from_image
from sbsim.policies import ConstantPolicy, default_schedule
from sbsim.reward import (AirQualityParams, ComfortParams, OccupancyModel, RewardWeights,
                          comfort_loss, energy_cost, min_outside_airflow, reward_3c, simulate_day)
from sbsim.synth import benchmark_building, office_building, random_grid, synthetic_floorplan

from conftest import slab_fields
from test_ingest import wall_runs

IA = int(CellClass.INTERIOR_AIR)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def test_01_slab_reaches_linear_profile(report):
    n, T_left, T_right = 20, 10.0, 30.0
    start = time.perf_counter()
    f = slab_fields(n, k=1.4, rho=2300.0, c=880.0, dx=0.01)
    T_inf = np.zeros((1, n + 2))
    T_inf[0, 0], T_inf[0, -1] = T_left, T_right
    s = ThermalState.uniform((1, n + 2), 20.0)
    s.T[0, 1:-1] = 0.0
    s = fd_step(s, f, BoundaryConditions(T_inf, dt=1e9), epsilon=1e-7, max_sweeps=100_000)
    elapsed = time.perf_counter() - start
    # pinned values sit at the centres of the end cells, n + 1 spacings apart
    x = np.arange(1, n + 1) / (n + 1)
    err = float(np.abs(s.T[0, 1:-1] - (T_left + (T_right - T_left) * x)).max())
    ok = report(1, err <= 1e-3 and elapsed < 1.0,
                f"max error {err:.2e} C, {s.sweeps} sweeps, {elapsed:.3f} s")
    assert ok


def test_02_energy_conservation(report):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(1000 + seed)
        h, w = (int(v) for v in rng.integers(8, 31, size=2))
        cells = random_grid(rng, h, w)
        grid = FloorplanGrid(cells, float(rng.uniform(0.25, 1.0)), 3.0)
        f = build_oriented_fields(grid, classify_cvs(grid), MaterialParams())
        s = ThermalState.uniform(cells.shape, 20.0)
        for step in range(100):
            T_inf = 10.0 + 10.0 * math.sin(step / 10)
            Q = np.where(cells == IA, rng.uniform(-5e4, 5e4, cells.shape), 0.0)
            before = s.T.copy()
            before[f.exterior] = T_inf
            s = fd_step(s, f, BoundaryConditions(T_inf, 300.0), Q, epsilon=1e-10)
            stored, supplied = energy_audit(f, before, s.T, Q, T_inf, 300.0)
            worst = max(worst, abs(stored - supplied) / max(abs(stored), abs(supplied), 1.0))
    ok = report(2, worst <= 1e-6, f"worst relative residual {worst:.2e} over 1000 steps")
    assert ok


def test_03_every_committed_step_meets_epsilon(report, four_room_building):
    b = four_room_building
    eps = b.simulation.epsilon
    env = BuildingEnv(b, seed=3)
    ep = []
    run_episode(env, default_schedule(b), 288,
                progress=lambda i, info: ep.append(max(info["max_delta"])))
    ok = report(3, eps <= 0.01 and len(ep) == 288 and max(ep) <= eps,
                f"epsilon {eps} C, largest committed max_delta {max(ep):.2e} C over {len(ep)} steps")
    assert ok


def test_04_step_time_on_100k_cvs(report):
    b = benchmark_building()
    n_cv = sum(g.cells.size for g in b.floors)
    env = BuildingEnv(b, seed=0)
    env.reset()
    policy = default_schedule(b)
    times = []
    for _ in range(100):
        t = time.perf_counter()
        env.step(policy(env.t))
        times.append(time.perf_counter() - t)
    med = float(np.median(times))
    ok = report(4, med <= 0.5 and len(b.floors) == 2,
                f"median step {med:.3f} s on {len(b.floors)} floors, {n_cv} CVs")
    assert ok


@pytest.mark.slow
def test_05_twin_calibration(report, monkeypatch):
    monkeypatch.setattr(synth, "MIN_AIRFLOW_SHARE", 0.3)
    b = office_building(2, 2, 15, 15, cv_size=0.25, setpoints=ZoneSetpoints(21, 23, 10, 32),
                        weather=WeatherConfig("sinusoid", 8, 8, 15, ""))
    assert max(b.floors[0].cells.shape) <= 40
    pb = ParamBounds()
    rng = np.random.default_rng(0)
    hidden = dict(zip(pb.names, rng.uniform(pb.lower(), pb.upper())))
    hidden.update(swap_prob=0.003, swap_radius=5.0)
    truth = b.with_params(MaterialParams().replace(**hidden))
    episode = run_episode(BuildingEnv(truth, seed=4), default_schedule(b), 576)
    train = ReplayEpisode.from_archive(episode, b, 0, 288)
    val = ReplayEpisode.from_archive(episode, b, 288, 576, warmup=288)
    best, _ = calibrate(b, train, pb, budget=500, optimizer="golden", seed=1)
    calibrated = MaterialParams().replace(**best.params)
    u = replay_error(b, MaterialParams(), val)
    c = replay_error(b, calibrated, val)
    # day 2 replayed on its own from the midnight observation, for reference
    day2 = ReplayEpisode.from_archive(episode, b, 288, 576)
    u2 = ts_mae(day2.T_real, n_step_replay(b, MaterialParams(), day2))
    c2 = ts_mae(day2.T_real, n_step_replay(b, calibrated, day2))
    ok = report(5, c <= 0.5 * u,
                f"validation TS-MAE {u:.4f} -> {c:.4f} C, ratio {c / u:.3f} "
                f"(day-2-only replay ratio {c2 / u2:.3f}, train {best.train_eps:.4f} C)")
    assert ok


def test_06_self_replay_identity(report):
    b = office_building(2, 2, 5, 6, weather=WeatherConfig("sinusoid", 8.0, 6.0, 15.0, ""))
    b = b.with_params(MaterialParams(swap_prob=0.0))
    ep = run_episode(BuildingEnv(b, seed=11), default_schedule(b), 288)
    eps = replay_error(b, b.params, ReplayEpisode.from_archive(ep, b))
    ok = report(6, eps <= 1e-9, f"TS-MAE {eps:.2e} C over 288 steps")
    assert ok


def test_07_reward_suite(report):
    cp = ComfortParams()
    checks = {
        "loss 0.5 at offset": math.isclose(comfort_loss(24.0 + cp.offset, 20, 24, 1, cp), 0.5)
        and math.isclose(comfort_loss(20.0 - cp.offset, 20, 24, 1, cp), 0.5),
        "zero inside band": comfort_loss(22.0, 20, 24, 3, cp) == 0.0,
        "zero unoccupied": comfort_loss(35.0, 20, 24, 0, cp) == 0.0,
        "V_min 110 CFM": math.isclose(min_outside_airflow(10, 1000.0, AirQualityParams()), 110.0),
    }
    rng = np.random.default_rng(7)
    lo, hi = 0.0, -1.0
    for _ in range(100_000):
        c1, c2, c3 = -rng.random(3)
        wts = RewardWeights(*rng.random(3), air_quality=float(rng.random()) * (rng.random() < 0.5))
        if wts.u + wts.v + wts.w + wts.air_quality == 0:
            continue
        r = reward_3c(c1, c2, c3, wts, float(rng.random()))
        lo, hi = min(lo, r), max(hi, r)
    checks["R_3C in [-1, 0]"] = -1.0 <= lo and hi <= 0.0
    p = DevicePower(300, 2000, 100, 9000, 1000, 4000, 500, 20000)
    checks["price scaling"] = all(
        math.isclose(energy_cost(p, a * 0.12, a * 0.04), energy_cost(p, 0.12, 0.04), rel_tol=1e-12)
        for a in (1e-3, 0.5, 7.0, 1e3))
    failed = [k for k, v in checks.items() if not v]
    ok = report(7, not failed, f"R_3C range [{lo:.4f}, {hi:.4f}] over 1e5 draws; "
                               f"{len(checks) - len(failed)}/{len(checks)} checks"
                               + (f", failed: {failed}" if failed else ""))
    assert ok


def test_08_occupancy_statistics(report):
    m = OccupancyModel()
    rng = np.random.default_rng(8)
    monday = dt.date(2023, 7, 10)
    arrivals = [simulate_day(m, 1, monday, 300.0, rng).arrival_times()[0] for _ in range(10_000)]
    mean_h = float(np.mean(arrivals)) / 3600
    mid = 0.5 * sum(m.arrival_window)
    off_days = [dt.date(2023, 7, 15), dt.date(2023, 7, 16)]
    hol = OccupancyModel(holidays=("2023-07-12",))
    idle = all(not simulate_day(m, 10, d, 300.0, rng).headcount.any()
               for d in off_days for _ in range(10_000 // len(off_days)))
    idle &= all(not simulate_day(hol, 10, dt.date(2023, 7, 12), 300.0, rng).headcount.any()
                for _ in range(1000))
    rel = abs(mean_h - mid) / mid
    ok = report(8, rel <= 0.02 and idle,
                f"mean arrival {mean_h:.3f} h vs midpoint {mid:.3f} h ({100 * rel:.2f}%), "
                f"weekends/holidays empty: {idle}")
    assert ok


def test_09_ingest_fixture(report, tmp_path):
    img, n_rooms = synthetic_floorplan(200, 2, 3, rng=np.random.default_rng(9))
    path = tmp_path / "plan.png"
    Image.fromarray((img * 255).astype(np.uint8)).save(path)
    # one VAV near the middle of each room, pixel (x, y)
    anchors = [(x, y) for y in (72, 127) for x in (63, 100, 137)]
    doc = {"devices": [{"device_id": f"vav_{i}", "device_type": "VAV", "anchor": list(a)}
                       for i, a in enumerate(anchors)]
           + [{"device_id": d, "device_type": t}
              for d, t in (("ahu", "AHU"), ("boiler", "Boiler"), ("chiller", "Chiller"))]}
    b = build_from_image(path, doc, cv_size=0.5, scale=0.05)
    cells = b.floors[0].cells
    runs = wall_runs(cells)
    inner = {n for kind, n in runs if kind == "room"}
    outer = {n for kind, n in runs if kind == "outside"}
    ok = report(9, n_rooms == 6 and len(b.zones) == 6 and inner == {1} and outer == {2},
                f"{len(b.zones)} of {n_rooms} rooms zoned on {cells.shape} CVs; "
                f"interior thickness {sorted(inner)}, exterior {sorted(outer)}")
    assert ok


def test_10_archive_round_trip(report, tmp_path):
    worst, identical = 0.0, 0
    for i in range(50):
        rng = np.random.default_rng(100 + i)
        b = office_building(int(rng.integers(1, 3)), int(rng.integers(1, 3)),
                            int(rng.integers(3, 6)), int(rng.integers(3, 6)),
                            weather=WeatherConfig("sinusoid", float(rng.uniform(-5, 30)),
                                                  float(rng.uniform(0, 10)), 15.0, ""))
        action = SetpointVector(float(rng.uniform(40, 80)), float(rng.uniform(10, 18)))
        ep = run_episode(BuildingEnv(b, seed=int(rng.integers(2**31))), ConstantPolicy(action),
                         int(rng.integers(1, 25)))
        back = load_episode(save_episode(ep, tmp_path / f"ep{i}"))
        same = back.equals(ep) and all(
            np.array_equal(m.values.view(np.int64), back.matrices()[k].values.view(np.int64))
            for k, m in ep.matrices().items())
        identical += same
        ctx = RewardContext.from_dict(back.metadata["reward_context"])
        names = back.reward_response.names
        for t in range(back.n_steps):
            again = ctx.compute(back.reward_info.row(t))
            want = back.reward_response.values[t]
            for k, name in enumerate(names):
                a, w = again[name], want[k]
                if not (math.isnan(a) and math.isnan(w)):
                    worst = max(worst, abs(a - w))
    ok = report(10, identical == 50 and worst <= 1e-9,
                f"{identical}/50 archives bit-identical, reward recompute max error {worst:.1e}")
    assert ok


def test_11_cli_determinism(report, tmp_path):
    b = office_building(1, 2, 4, 5)
    b.save(tmp_path / "b.json")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc = subprocess.run([sys.executable, "-m", "sbsim.cli", "run", "--building",
                               str(tmp_path / "b.json"), "--steps", "48", "--seed", "5",
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    csvs = sorted(p.name for p in outs[0].glob("*.csv"))
    same = [n for n in csvs if (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes()]
    meta_same = (json.loads((outs[0] / "metadata.json").read_text())
                 == json.loads((outs[1] / "metadata.json").read_text()))
    ok = report(11, len(csvs) == 4 and same == csvs and meta_same,
                f"{len(same)}/{len(csvs)} episode CSVs byte-identical")
    assert ok
