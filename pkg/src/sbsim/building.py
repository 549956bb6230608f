"""BuildingConfig: the single JSON document describing a simulated building.

Layout (``version`` is mandatory)::

    {
      "version": 1,
      "name": "...",
      "floors":  [{"cv_size": m, "floor_height": m, "grid": [[0, 1, 2, 3, ...], ...]}],
      "zones":   [{"zone_id": "...", "floor": 0, "cells": [[r, c], ...], "devices": ["vav_1"]}],
      "devices": [{"device_id": "...", "device_type": "VAV|AHU|Boiler|Chiller|Meter",
                   "floor": 0, "zone_id": "...", "diffuser_cells": [[r, c], ...],
                   "config": {...}}],
      "params": {...}, "setpoints": {...}, "setpoint_bounds": {...},
      "occupancy": {...}, "reward": {...}, "weather": {...}, "simulation": {...}
    }

Grid codes: 0 ExteriorAir, 1 InteriorAir, 2 InteriorWall, 3 ExteriorWall.
Every nested section is written out in full; the loader rejects missing keys.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import CellClass, Device, DeviceLayout, FloorplanGrid, GridError, MaterialParams, ZoneMap
from .hvac import (AHUConfig, BoilerConfig, ChillerConfig, SetpointBounds, SetpointVector,
                   VAVConfig, ZoneSetpoints)
from .reward import (AirQualityParams, ComfortParams, OccupancyModel, RewardWeights,
                     TariffAndEmissions)

SCHEMA_VERSION = 1

OBSERVABLE_FIELDS = {
    "VAV": ["zone_air_temperature_sensor", "supply_air_flowrate_sensor",
            "discharge_air_temperature_sensor", "reheat_power_sensor"],
    "AHU": ["supply_air_temperature_setpoint", "mixed_air_temperature_sensor",
            "outside_air_flowrate_sensor", "supply_fan_power_sensor"],
    "Boiler": ["supply_water_temperature_setpoint", "gas_power_sensor", "pump_power_sensor"],
    "Chiller": ["compressor_power_sensor"],
    "Meter": ["outside_air_temperature_sensor"],
}
ACTION_FIELDS = {
    "AHU": ["supply_air_temperature_setpoint"],
    "Boiler": ["supply_water_temperature_setpoint"],
}
PLANT_CONFIGS = {"VAV": VAVConfig, "AHU": AHUConfig, "Boiler": BoilerConfig,
                 "Chiller": ChillerConfig}


class BuildingConfigError(ValueError):
    """Invalid or inconsistent building document."""


def _strict(cls, data: dict, where: str):
    """Build a dataclass from a dict, requiring every field to be present."""
    if not isinstance(data, dict):
        raise BuildingConfigError(f"{where}: expected an object")
    names = [f.name for f in dataclasses.fields(cls)]
    missing = [n for n in names if n not in data]
    extra = [k for k in data if k not in names]
    if missing or extra:
        raise BuildingConfigError(f"{where}: missing keys {missing}, unknown keys {extra}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        v = data[f.name]
        kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise BuildingConfigError(f"{where}: {exc}") from exc


def _plain(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[f.name] = v
    return out


@dataclass(frozen=True)
class WeatherConfig:
    """Outside air temperature: constant, daily sinusoid, or CSV (timestamp, temperature)."""

    kind: str = "sinusoid"
    mean: float = 12.0
    amplitude: float = 6.0
    peak_hour: float = 15.0
    path: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoid", "csv"):
            raise BuildingConfigError(f"unknown weather kind {self.kind!r}")


class Weather:
    def __init__(self, cfg: WeatherConfig, base: Path | None = None):
        self.cfg = cfg
        self.times = self.temps = None
        if cfg.kind == "csv":
            path = Path(cfg.path)
            if base is not None and not path.is_absolute():
                path = base / path
            rows = []
            with open(path, newline="") as fh:
                for rec in csv.DictReader(fh):
                    ts = dt.datetime.fromisoformat(rec["timestamp"].replace("Z", "+00:00"))
                    rows.append((ts.timestamp(), float(rec["temperature"])))
            if not rows:
                raise BuildingConfigError(f"weather file {path} is empty")
            rows.sort()
            self.times = np.array([r[0] for r in rows])
            self.temps = np.array([r[1] for r in rows])

    def at(self, t: float) -> float:
        c = self.cfg
        if c.kind == "constant":
            return float(c.mean)
        if c.kind == "sinusoid":
            hour = (t % 86400) / 3600.0
            return float(c.mean + c.amplitude * math.cos(2 * math.pi * (hour - c.peak_hour) / 24))
        return float(np.interp(t, self.times, self.temps))


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    comfort: ComfortParams = field(default_factory=ComfortParams)
    air_quality: AirQualityParams = field(default_factory=AirQualityParams)
    tariff: TariffAndEmissions = field(default_factory=TariffAndEmissions)
    tariff_csv: str = ""

    def to_dict(self) -> dict:
        t = self.tariff
        return {
            "weights": _plain(self.weights),
            "comfort": _plain(self.comfort),
            "air_quality": _plain(self.air_quality),
            "tariff": {"p_e": t.p_e, "p_g": t.p_g, "r_e": t.r_e, "r_g": t.r_g},
            "tariff_csv": self.tariff_csv,
        }

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None) -> "RewardConfig":
        for key in ("weights", "comfort", "air_quality", "tariff", "tariff_csv"):
            if key not in d:
                raise BuildingConfigError(f"reward: missing key {key!r}")
        tariff_csv = d["tariff_csv"]
        if tariff_csv:
            path = Path(tariff_csv)
            if base is not None and not path.is_absolute():
                path = base / path
            tariff = TariffAndEmissions.from_csv(path)
        else:
            t = d["tariff"]
            try:
                tariff = TariffAndEmissions(t["p_e"], t["p_g"], t["r_e"], t["r_g"])
            except (KeyError, ValueError) as exc:
                raise BuildingConfigError(f"reward.tariff: {exc}") from exc
        return cls(
            _strict(RewardWeights, d["weights"], "reward.weights"),
            _strict(ComfortParams, d["comfort"], "reward.comfort"),
            _strict(AirQualityParams, d["air_quality"], "reward.air_quality"),
            tariff, tariff_csv)


@dataclass(frozen=True)
class SimulationConfig:
    timestep: float = 300.0
    epsilon: float = 0.01
    max_sweeps: int = 10_000
    start_time: str = "2023-07-10T00:00:00Z"
    initial_temperature: float = 21.0
    # how walls are filled at reset: "steady" conduction profile or "nearest" zone
    wall_init: str = "steady"

    def start_epoch(self) -> float:
        return parse_time(self.start_time)


def parse_time(s: str) -> float:
    ts = dt.datetime.fromisoformat(s.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.timestamp()


def format_time(t: float) -> str:
    return dt.datetime.fromtimestamp(t, dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class Zone:
    zone_id: str
    floor: int
    cells: list[tuple[int, int]]
    devices: list[str]


@dataclass
class BuildingConfig:
    name: str
    floors: list[FloorplanGrid]
    zones: list[Zone]
    devices: DeviceLayout
    params: MaterialParams = field(default_factory=MaterialParams)
    setpoints: ZoneSetpoints = field(default_factory=ZoneSetpoints)
    setpoint_bounds: SetpointBounds = field(default_factory=SetpointBounds)
    occupancy: OccupancyModel = field(default_factory=OccupancyModel)
    reward: RewardConfig = field(default_factory=RewardConfig)
    weather: WeatherConfig = field(default_factory=WeatherConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    plant: dict[str, object] = field(default_factory=dict)   # device_id -> config
    base_dir: Path | None = None

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ queries
    @property
    def zone_ids(self) -> list[str]:
        return [z.zone_id for z in self.zones]

    def devices_of(self, device_type: str) -> list[Device]:
        return [d for d in self.devices.values() if d.device_type == device_type]

    def single(self, device_type: str) -> Device:
        devs = self.devices_of(device_type)
        if len(devs) != 1:
            raise BuildingConfigError(f"expected exactly one {device_type}, found {len(devs)}")
        return devs[0]

    def zone_map(self) -> ZoneMap:
        labels = [np.full(g.cells.shape, -1, dtype=np.int32) for g in self.floors]
        for i, z in enumerate(self.zones):
            if z.cells:
                r, c = np.asarray(z.cells).T
                labels[z.floor][r, c] = i
        return ZoneMap(self.zone_ids, labels, {z.zone_id: list(z.devices) for z in self.zones},
                       [g.cv_size for g in self.floors])

    def observation_names(self) -> list[str]:
        return [f"{d.device_id}/{name}" for d in self.devices.values()
                for name in d.observable_fields]

    def action_names(self) -> list[str]:
        return [f"{d.device_id}/{name}" for d in self.devices.values()
                for name in d.action_fields]

    def action_vector(self, action: SetpointVector) -> list[float]:
        out = []
        for d in self.devices.values():
            if d.device_type == "AHU":
                out.append(action.supply_air_temp)
            elif d.device_type == "Boiler":
                out.append(action.supply_water_temp)
        return out

    def setpoint_from_vector(self, names: list[str], values) -> SetpointVector:
        lookup = dict(zip(names, (float(v) for v in values)))
        ahu, boiler = self.single("AHU"), self.single("Boiler")
        try:
            return SetpointVector(lookup[f"{boiler.device_id}/supply_water_temperature_setpoint"],
                                  lookup[f"{ahu.device_id}/supply_air_temperature_setpoint"])
        except KeyError as exc:
            raise BuildingConfigError(f"action vector lacks {exc}") from exc

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    # ------------------------------------------------------------ checks
    def validate(self) -> None:
        if not self.floors:
            raise BuildingConfigError("building has no floors")
        try:
            self.devices.validate(self.floors)
        except GridError as exc:
            raise BuildingConfigError(str(exc)) from exc
        seen = [set() for _ in self.floors]
        ids = set()
        for z in self.zones:
            if z.zone_id in ids:
                raise BuildingConfigError(f"duplicate zone id {z.zone_id}")
            ids.add(z.zone_id)
            if not 0 <= z.floor < len(self.floors):
                raise BuildingConfigError(f"zone {z.zone_id} on missing floor {z.floor}")
            if not z.cells:
                raise BuildingConfigError(f"zone {z.zone_id} has no cells")
            cells = self.floors[z.floor].cells
            for rc in z.cells:
                r, c = rc
                if not (0 <= r < cells.shape[0] and 0 <= c < cells.shape[1]) \
                        or cells[r, c] != CellClass.INTERIOR_AIR:
                    raise BuildingConfigError(f"zone {z.zone_id} cell {rc} is not InteriorAir")
                if (r, c) in seen[z.floor]:
                    raise BuildingConfigError(f"cell {rc} belongs to more than one zone")
                seen[z.floor].add((r, c))
            for dev in z.devices:
                if dev not in self.devices:
                    raise BuildingConfigError(f"zone {z.zone_id} references unknown device {dev}")
        if self.simulation.wall_init not in ("steady", "nearest"):
            raise BuildingConfigError(f"unknown wall_init {self.simulation.wall_init!r}")
        for t in ("AHU", "Boiler", "Chiller"):
            self.single(t)
        for d in self.devices_of("VAV"):
            if d.zone_id not in ids:
                raise BuildingConfigError(f"VAV {d.device_id} has no zone")
        for d in self.devices.values():
            if d.device_type in PLANT_CONFIGS and d.device_id not in self.plant:
                raise BuildingConfigError(f"device {d.device_id} lacks a config section")

    # ------------------------------------------------------------ json
    def to_dict(self) -> dict:
        devices = []
        for d in self.devices.values():
            rec = {"device_id": d.device_id, "device_type": d.device_type, "floor": d.floor,
                   "zone_id": d.zone_id, "diffuser_cells": [list(c) for c in d.diffuser_cells]}
            if d.device_id in self.plant:
                rec["config"] = _plain(self.plant[d.device_id])
            devices.append(rec)
        return {
            "version": SCHEMA_VERSION,
            "name": self.name,
            "floors": [{"cv_size": g.cv_size, "floor_height": g.floor_height,
                        "grid": g.cells.astype(int).tolist()} for g in self.floors],
            "zones": [{"zone_id": z.zone_id, "floor": z.floor,
                       "cells": [list(c) for c in z.cells], "devices": list(z.devices)}
                      for z in self.zones],
            "devices": devices,
            "params": self.params.as_dict(),
            "setpoints": _plain(self.setpoints),
            "setpoint_bounds": _plain(self.setpoint_bounds),
            "occupancy": _plain(self.occupancy),
            "reward": self.reward.to_dict(),
            "weather": _plain(self.weather),
            "simulation": _plain(self.simulation),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "BuildingConfig":
        if not isinstance(d, dict) or "version" not in d:
            raise BuildingConfigError("building document lacks a version field")
        if d["version"] != SCHEMA_VERSION:
            raise BuildingConfigError(f"unsupported building schema version {d['version']}")
        for key in ("name", "floors", "zones", "devices", "params", "setpoints",
                    "setpoint_bounds", "occupancy", "reward", "weather", "simulation"):
            if key not in d:
                raise BuildingConfigError(f"building document lacks {key!r}")
        try:
            floors = [FloorplanGrid.from_matrix(f["grid"], f["cv_size"], f["floor_height"])
                      for f in d["floors"]]
            layout = DeviceLayout()
            plant = {}
            for rec in d["devices"]:
                dtype = rec["device_type"]
                dev = Device(rec["device_id"], dtype, int(rec.get("floor", 0)),
                             [tuple(c) for c in rec.get("diffuser_cells", [])], rec.get("zone_id"),
                             list(OBSERVABLE_FIELDS.get(dtype, [])), list(ACTION_FIELDS.get(dtype, [])))
                if dev.device_id in layout:
                    raise BuildingConfigError(f"duplicate device id {dev.device_id}")
                layout[dev.device_id] = dev
                if dtype in PLANT_CONFIGS:
                    if "config" not in rec:
                        raise BuildingConfigError(f"device {dev.device_id} lacks a config section")
                    plant[dev.device_id] = _strict(PLANT_CONFIGS[dtype], rec["config"],
                                                   f"devices.{dev.device_id}.config")
            zones = [Zone(z["zone_id"], int(z["floor"]), [tuple(c) for c in z["cells"]],
                          list(z["devices"])) for z in d["zones"]]
            params = _strict(MaterialParams, d["params"], "params")
        except (KeyError, TypeError) as exc:
            raise BuildingConfigError(f"malformed building document: {exc!r}") from exc
        except GridError as exc:
            raise BuildingConfigError(str(exc)) from exc
        return cls(
            name=d["name"], floors=floors, zones=zones, devices=layout, params=params,
            setpoints=_strict(ZoneSetpoints, d["setpoints"], "setpoints"),
            setpoint_bounds=_strict(SetpointBounds, d["setpoint_bounds"], "setpoint_bounds"),
            occupancy=_strict(OccupancyModel, d["occupancy"], "occupancy"),
            reward=RewardConfig.from_dict(d["reward"], base_dir),
            weather=_strict(WeatherConfig, d["weather"], "weather"),
            simulation=_strict(SimulationConfig, d["simulation"], "simulation"),
            plant=plant, base_dir=base_dir,
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "BuildingConfig":
        path = Path(path)
        if not path.is_file():
            raise BuildingConfigError(f"building file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise BuildingConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc, path.parent)

    def with_params(self, params: MaterialParams) -> "BuildingConfig":
        return dataclasses.replace(self, params=params)


def make_device(device_id: str, device_type: str, floor: int = 0, zone_id: str | None = None,
                diffuser_cells=()) -> Device:
    return Device(device_id, device_type, floor, list(diffuser_cells), zone_id,
                  list(OBSERVABLE_FIELDS[device_type]), list(ACTION_FIELDS.get(device_type, [])))
