"""Replay fidelity (TS-MAE) and black-box tuning of the material parameters."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .building import BuildingConfig, parse_time
from .episode import EpisodeArchive
from .fd import ConvergenceFailure, SolverDivergence
from .grid import TUNABLE_PARAMS, MaterialParams
from .hvac import SetpointVector
from .seeding import derive_rng, derive_seed
from .simulator import Simulator

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_BOUNDS = {
    "convection_coefficient": (5.0, 800.0),
    "exterior_cv_conductivity": (0.01, 1.0),
    "exterior_cv_density": (0.0, 3000.0),
    "exterior_cv_heat_capacity": (100.0, 2500.0),
    "interior_wall_cv_conductivity": (5.0, 800.0),
    "interior_wall_cv_density": (0.5, 1500.0),
    "interior_wall_cv_heat_capacity": (500.0, 1500.0),
    "swap_prob": (0.0, 1.0),
    "swap_radius": (0.0, 50.0),
}


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ParamBounds:
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def __post_init__(self):
        for name, (lo, hi) in self.bounds.items():
            if name not in TUNABLE_PARAMS:
                raise CalibrationError(f"{name} is not a tunable parameter")
            if not lo <= hi:
                raise CalibrationError(f"bounds of {name}: min {lo} > max {hi}")

    @property
    def names(self) -> list[str]:
        return [n for n in TUNABLE_PARAMS if n in self.bounds]

    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.names])

    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.names])

    def clip(self, values: dict[str, float]) -> dict[str, float]:
        return {n: float(np.clip(values[n], *self.bounds[n])) for n in self.names}

    def contains(self, values: dict[str, float]) -> bool:
        return all(self.bounds[n][0] <= values[n] <= self.bounds[n][1] for n in self.names)

    @classmethod
    def collapsed(cls, params: MaterialParams) -> "ParamBounds":
        t = params.tunables()
        return cls({n: (t[n], t[n]) for n in TUNABLE_PARAMS})

    def to_dict(self) -> dict:
        return {n: list(b) for n, b in self.bounds.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamBounds":
        return cls({n: (float(lo), float(hi)) for n, (lo, hi) in d.items()})


@dataclass
class TrialResult:
    trial: int
    params: dict[str, float]
    train_eps: float
    val_eps: float | None = None
    seconds: float = 0.0

    def __post_init__(self):
        if not self.train_eps >= 0:
            raise CalibrationError("TS-MAE must be >= 0")


def ts_mae(T_real, T_sim) -> float:
    """Mean over timesteps of the mean absolute zone temperature error."""
    T_real = np.asarray(T_real, dtype=float)
    T_sim = np.asarray(T_sim, dtype=float)
    if T_real.shape != T_sim.shape:
        raise CalibrationError(f"shape mismatch {T_real.shape} vs {T_sim.shape}")
    if T_real.ndim != 2 or 0 in T_real.shape:
        raise CalibrationError("TS-MAE needs non-empty [N][Z] matrices")
    return float(np.mean(np.mean(np.abs(T_real - T_sim), axis=1)))


@dataclass
class ReplayEpisode:
    zone_ids: list[str]
    t0: float
    dt: float
    initial_zone_temps: np.ndarray     # (Z,)
    actions: list[SetpointVector]      # N
    T_inf: np.ndarray                  # (N,), outside air during each step
    heating_sp: np.ndarray             # (N, Z)
    cooling_sp: np.ndarray             # (N, Z)
    T_real: np.ndarray                 # (N, Z), measured at the end of each step
    score_from: int = 0                # steps before this are warm-up, not scored

    def __post_init__(self):
        n = len(self.actions)
        if n < 1:
            raise CalibrationError("replay episode needs at least one step")
        if not 0 <= self.score_from < n:
            raise CalibrationError(f"score_from={self.score_from} must lie in [0, {n})")
        z = len(self.zone_ids)
        for name, shape in (("T_inf", (n,)), ("heating_sp", (n, z)), ("cooling_sp", (n, z)),
                            ("T_real", (n, z)), ("initial_zone_temps", (z,))):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise CalibrationError(f"{name} has shape {arr.shape}, expected {shape}")
            if name != "T_real" and not np.isfinite(arr).all():
                raise CalibrationError(f"{name} has missing values")
            setattr(self, name, arr)

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @classmethod
    def from_archive(cls, archive: EpisodeArchive, building: BuildingConfig,
                     start: int = 0, stop: int | None = None, warmup: int = 0) -> "ReplayEpisode":
        """Steps [start, stop) of an archive. With ``warmup`` the replay
        starts ``warmup`` steps earlier and those steps are not scored."""
        if warmup:
            if warmup > start:
                raise CalibrationError("warm-up reaches before the start of the episode")
            ep = cls.from_archive(archive, building, start - warmup, stop)
            ep.score_from = warmup
            ep.__post_init__()
            return ep
        if start or stop is not None:
            archive = archive.slice(start, archive.n_steps if stop is None else stop)
        meta = archive.metadata
        ep_zones = list(meta["zone_ids"])
        if set(ep_zones) != set(building.zone_ids):
            raise CalibrationError("episode zones do not match the building zones")
        order = [ep_zones.index(z) for z in building.zone_ids]
        info = archive.reward_info

        def zone_cols(f):
            return np.stack([info.column(f"{z}/{f}") for z in building.zone_ids], axis=1) \
                if len(info) else np.zeros((0, len(order)))

        acts = [building.setpoint_from_vector(archive.actions.names, row)
                for row in archive.actions.values]
        return cls(list(building.zone_ids), float(archive.actions.timestamps[0]) if acts else
                   parse_time(meta["start_time"]), float(meta["timestep"]),
                   np.asarray(meta["initial_zone_temperatures"], dtype=float)[order], acts,
                   info.column("outside_air_temperature"),
                   zone_cols("heating_setpoint"), zone_cols("cooling_setpoint"),
                   zone_cols("temperature"))


def replay_error(building: BuildingConfig, params: MaterialParams | None,
                 episode: ReplayEpisode, seed: int = 0) -> float:
    """TS-MAE of a replay over the scored steps of ``episode``."""
    k = episode.score_from
    return ts_mae(episode.T_real[k:], n_step_replay(building, params, episode, seed)[k:])


def n_step_replay(building: BuildingConfig, params: MaterialParams | None, episode: ReplayEpisode,
                  seed: int = 0, simulator: Simulator | None = None) -> np.ndarray:
    """Drive the simulator with the episode's actions and weather; zone means per step."""
    sim = simulator or Simulator(building, params)
    if list(sim.zone_ids) != list(episode.zone_ids):
        raise CalibrationError("episode zones do not match the building zones")
    rng = derive_rng(seed, "shuffle")
    states = sim.initial_states(episode.initial_zone_temps, episode.T_inf[0], episode.t0)
    out = np.empty((episode.n_steps, sim.n_zones))
    for i, action in enumerate(episode.actions):
        res = sim.step(states, action, episode.heating_sp[i], episode.cooling_sp[i],
                       episode.T_inf[i], rng)
        states = res.states
        out[i] = res.zone_temps
    return out


# ------------------------------------------------------------------ optimizers

class Optimizer(Protocol):
    """Ask/tell interface. ``suggest`` may return None while it waits for
    outstanding observations."""

    def suggest(self, history: list[TrialResult]) -> dict[str, float] | None: ...

    def observe(self, params: dict[str, float], eps: float) -> None: ...


class RandomSearch:
    """Uniform sampling inside the bounds; trial ``i`` depends only on (seed, i)."""

    def __init__(self, bounds: ParamBounds, seed: int = 0):
        self.bounds = bounds
        self.seed = seed
        self.issued = 0

    def suggest(self, history=None) -> dict[str, float]:
        rng = derive_rng(self.seed, "random-search", self.issued)
        self.issued += 1
        x = rng.uniform(self.bounds.lower(), self.bounds.upper())
        return dict(zip(self.bounds.names, x.tolist()))

    def observe(self, params, eps) -> None:
        pass


class GoldenSectionRefiner:
    """Coordinate-wise golden-section search started from ``start``.

    Each pass shrinks every coordinate's bracket with ``evals_per_coord``
    evaluations, keeping the other coordinates at the incumbent. Brackets
    shrink further on every pass, unless the search ended on an inner
    bracket edge, in which case the next pass recentres at the same width.
    """

    def __init__(self, bounds: ParamBounds, start: dict[str, float], start_eps: float = math.inf,
                 evals_per_coord: int = 6):
        self.bounds = bounds
        self.best = bounds.clip(start)
        self.best_eps = start_eps
        self.evals_per_coord = max(evals_per_coord, 2)
        self._gen = self._search()
        self._pending: dict[str, float] | None = None
        self._reply: float | None = None
        self._next = next(self._gen)

    def _evaluate(self, name, value):
        p = dict(self.best)
        p[name] = value
        eps = yield p
        if eps < self.best_eps:
            self.best, self.best_eps = p, eps
        return eps

    def _search(self):
        width = {n: hi - lo for n, (lo, hi) in self.bounds.bounds.items()}
        if not any(w > 0 for w in width.values()):
            name = self.bounds.names[0]
            while True:
                yield from self._evaluate(name, self.best[name])
        while True:
            for name in self.bounds.names:
                lo_b, hi_b = self.bounds.bounds[name]
                if hi_b <= lo_b:
                    continue
                centre = self.best[name]
                a = max(lo_b, centre - width[name] / 2)
                b = min(hi_b, centre + width[name] / 2)
                x1 = b - GOLDEN * (b - a)
                x2 = a + GOLDEN * (b - a)
                f1 = yield from self._evaluate(name, x1)
                f2 = yield from self._evaluate(name, x2)
                for _ in range(self.evals_per_coord - 2):
                    if f1 <= f2:
                        b, x2, f2 = x2, x1, f1
                        x1 = b - GOLDEN * (b - a)
                        f1 = yield from self._evaluate(name, x1)
                    else:
                        a, x1, f1 = x1, x2, f2
                        x2 = a + GOLDEN * (b - a)
                        f2 = yield from self._evaluate(name, x2)
                a0, b0 = max(lo_b, centre - width[name] / 2), min(hi_b, centre + width[name] / 2)
                tol = 1e-9 * (hi_b - lo_b)
                edge = ((a - a0 <= tol and a0 > lo_b) or (b0 - b <= tol and b0 < hi_b))
                # a minimum pressed against an inner bracket edge may lie
                # beyond it: recentre next pass at the same width
                if not edge:
                    width[name] = max(b - a, 1e-12 * (hi_b - lo_b))

    def suggest(self, history=None) -> dict[str, float] | None:
        if self._pending is not None:
            return None
        self._pending = self._next
        return dict(self._pending)

    def observe(self, params, eps) -> None:
        if self._pending is None or params != self._pending:
            return
        self._pending = None
        self._next = self._gen.send(eps)


class RandomThenGolden:
    """Random search for the first ``n_random`` trials, then golden-section
    refinement around the best point found."""

    def __init__(self, bounds: ParamBounds, seed: int = 0, n_random: int = 100,
                 evals_per_coord: int = 6):
        self.bounds = bounds
        self.random = RandomSearch(bounds, seed)
        self.n_random = max(n_random, 1)
        self.evals_per_coord = evals_per_coord
        self.observed: list[tuple[dict, float]] = []
        self.refiner: GoldenSectionRefiner | None = None

    def suggest(self, history=None):
        if self.random.issued < self.n_random:
            return self.random.suggest()
        if len(self.observed) < self.n_random:
            return None
        if self.refiner is None:
            best, eps = min(self.observed, key=lambda pe: pe[1])
            self.refiner = GoldenSectionRefiner(self.bounds, best, eps, self.evals_per_coord)
        return self.refiner.suggest()

    def observe(self, params, eps) -> None:
        if self.refiner is None:
            self.observed.append((params, eps))
        else:
            self.refiner.observe(params, eps)


def make_optimizer(name: str, bounds: ParamBounds, seed: int, budget: int) -> Optimizer:
    if name == "random":
        return RandomSearch(bounds, seed)
    if name == "golden":
        return RandomThenGolden(bounds, seed, n_random=max(budget // 2, 1))
    raise CalibrationError(f"unknown optimizer {name!r}")


# ------------------------------------------------------------------ calibrate

_WORKER: dict = {}


def _init_worker(building, train, val, base_params, master_seed):
    _WORKER.update(building=building, train=train, val=val, base=base_params, seed=master_seed)


def _score(building, params: MaterialParams, episode: ReplayEpisode, seed: int) -> float:
    try:
        eps = replay_error(building, params, episode, seed)
    except (SolverDivergence, ConvergenceFailure) as exc:
        log.warning("trial diverged: %s", exc)
        return math.inf
    return eps if math.isfinite(eps) else math.inf


def _run_trial(trial: int, values: dict[str, float]) -> tuple[int, float, float]:
    w = _WORKER
    start = time.perf_counter()
    params = w["base"].replace(**values)
    eps = _score(w["building"], params, w["train"], derive_seed(w["seed"], "trial", trial))
    return trial, eps, time.perf_counter() - start


def calibrate(building: BuildingConfig, train: ReplayEpisode, bounds: ParamBounds | None = None,
              budget: int = 100, optimizer: Optimizer | str = "random", workers: int = 1,
              seed: int = 0, val: ReplayEpisode | None = None,
              log_path=None, on_trial: Callable[[TrialResult], None] | None = None
              ) -> tuple[TrialResult, list[TrialResult]]:
    """Minimise train TS-MAE over the bounded parameters.

    Returns the best trial and the full trial log. Validation error is
    computed for every trial that improves on the incumbent.
    """
    if budget < 1:
        raise CalibrationError("budget must be >= 1")
    bounds = bounds or ParamBounds()
    if isinstance(optimizer, str):
        optimizer = make_optimizer(optimizer, bounds, seed, budget)
    base = building.params
    history: list[TrialResult] = []
    best: TrialResult | None = None
    init = (building, train, val, base, seed)
    pool = ProcessPoolExecutor(workers, initializer=_init_worker, initargs=init) \
        if workers > 1 else None
    if pool is None:
        _init_worker(*init)
    writer = TrialLog(log_path, bounds.names) if log_path else None
    try:
        while len(history) < budget:
            batch = []
            while len(history) + len(batch) < budget and len(batch) < max(workers, 1):
                s = optimizer.suggest(history)
                if s is None:
                    break
                batch.append((len(history) + len(batch), bounds.clip(s)))
            if not batch:
                raise CalibrationError("optimizer produced no suggestion")
            if pool is None:
                results = [_run_trial(i, p) for i, p in batch]
            else:
                results = list(pool.map(_run_trial, *zip(*batch)))
            for (i, p), (_, eps, secs) in zip(batch, results):
                optimizer.observe(p, eps)
                res = TrialResult(i, p, eps, None, secs)
                if best is None or eps < best.train_eps:
                    if val is not None:
                        res.val_eps = _score(building, base.replace(**p), val,
                                             derive_seed(seed, "validation"))
                    best = res
                history.append(res)
                if writer:
                    writer.write(res)
                if on_trial:
                    on_trial(res)
    finally:
        if pool is not None:
            pool.shutdown()
        if writer:
            writer.close()
    return best, history


class TrialLog:
    """trials.csv: trial, one column per parameter, train_eps, val_eps, seconds."""

    def __init__(self, path, names: list[str]):
        self.names = names
        self.fh = open(Path(path), "w", newline="")
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(["trial"] + names + ["train_eps", "val_eps", "seconds"])

    def write(self, r: TrialResult) -> None:
        val = "" if r.val_eps is None else repr(r.val_eps)
        self.w.writerow([r.trial] + [repr(r.params[n]) for n in self.names]
                        + [repr(r.train_eps), val, f"{r.seconds:.4f}"])
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def read_trials(path) -> list[TrialResult]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            names = [k for k in rec if k not in ("trial", "train_eps", "val_eps", "seconds")]
            out.append(TrialResult(int(rec["trial"]), {n: float(rec[n]) for n in names},
                                   float(rec["train_eps"]),
                                   float(rec["val_eps"]) if rec["val_eps"] else None,
                                   float(rec["seconds"])))
    return out
