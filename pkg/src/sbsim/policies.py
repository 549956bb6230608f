"""Baseline policies: ``policy(t, observation) -> SetpointVector``."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .building import BuildingConfig
from .episode import EpisodeArchive
from .hvac import SetpointVector


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantPolicy:
    action: SetpointVector

    def __call__(self, t: float, observation=None) -> SetpointVector:
        return self.action


@dataclass(frozen=True)
class SchedulePolicy:
    """Occupied setpoints between ``start_hour`` and ``end_hour`` (UTC) on
    the given weekdays, unoccupied setpoints otherwise."""

    occupied: SetpointVector
    unoccupied: SetpointVector
    start_hour: float = 6.0
    end_hour: float = 19.0
    weekend_start_hour: float | None = None
    weekend_end_hour: float | None = None
    workdays: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __call__(self, t: float, observation=None) -> SetpointVector:
        stamp = dt.datetime.fromtimestamp(t, dt.timezone.utc)
        hour = stamp.hour + stamp.minute / 60.0 + stamp.second / 3600.0
        if stamp.weekday() in self.workdays:
            lo, hi = self.start_hour, self.end_hour
        elif self.weekend_start_hour is not None:
            lo, hi = self.weekend_start_hour, self.weekend_end_hour
        else:
            return self.unoccupied
        return self.occupied if lo <= hour < hi else self.unoccupied


class ReplayPolicy:
    """Emits the action recorded in an episode for each step start time."""

    def __init__(self, archive: EpisodeArchive, building: BuildingConfig):
        acts = archive.actions
        self.by_time = {float(ts): building.setpoint_from_vector(acts.names, row)
                        for ts, row in zip(acts.timestamps, acts.values)}
        self.t0 = float(acts.timestamps[0]) if len(acts) else 0.0

    def __call__(self, t: float, observation=None) -> SetpointVector:
        try:
            return self.by_time[float(t)]
        except KeyError:
            raise PolicyError(f"episode has no action at {t}") from None


def _vector(d: dict, where: str) -> SetpointVector:
    try:
        return SetpointVector(float(d["supply_water_temp"]), float(d["supply_air_temp"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyError(f"{where}: need supply_water_temp and supply_air_temp") from exc


def policy_from_dict(d: dict):
    kind = d.get("type")
    if kind == "constant":
        return ConstantPolicy(_vector(d, "constant policy"))
    if kind == "schedule":
        wk = d.get("weekend") or {}
        return SchedulePolicy(
            _vector(d["occupied"], "occupied"), _vector(d["unoccupied"], "unoccupied"),
            float(d.get("start_hour", 6.0)), float(d.get("end_hour", 19.0)),
            wk.get("start_hour"), wk.get("end_hour"),
            tuple(d.get("workdays", (0, 1, 2, 3, 4))))
    raise PolicyError(f"unknown policy type {kind!r}")


def load_policy(path):
    path = Path(path)
    if not path.is_file():
        raise PolicyError(f"policy file not found: {path}")
    try:
        return policy_from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{path}: invalid JSON ({exc})") from exc


def default_schedule(building: BuildingConfig) -> SchedulePolicy:
    b = building.setpoint_bounds
    sp = building.setpoints
    return SchedulePolicy(
        SetpointVector(float(np.mean(b.supply_water)) + 10.0, b.supply_air[0] + 3.0),
        SetpointVector(float(np.mean(b.supply_water)), float(np.mean(b.supply_air))),
        sp.occupied_start_hour, sp.occupied_end_hour)
