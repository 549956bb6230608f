"""Reset/step environment around the simulator, plus episode recording."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .building import BuildingConfig, format_time
from .episode import FORMAT_VERSION, EpisodeArchive, Matrix
from .fd import ConvergenceFailure, SolverDivergence
from .grid import MaterialParams
from .hvac import DevicePower, PlantOutput, SetpointVector
from .reward import (AirQualityParams, ComfortParams, OccupancySimulator, RewardWeights,
                     air_quality_reward, building_comfort, carbon_cost, comfort_loss,
                     energy_cost, min_outside_airflow, reward_3c)
from .seeding import derive_rng
from .simulator import Simulator

log = logging.getLogger(__name__)

M2_TO_FT2 = 10.763910416709722
HIST_LOW, HIST_HIGH = 12.0, 30.0
RESPONSE_NAMES = ["reward", "comfort", "energy_cost", "carbon", "air_quality"]
FAILED_STEP_REWARD = -1.0


def observation_histogram(temps) -> np.ndarray:
    """Share of zones per 1 C bin from 12 to 30 C; out-of-range values go to
    the end bins and missing (NaN) readings are skipped."""
    temps = np.asarray(temps, dtype=float).ravel()
    temps = np.clip(temps[~np.isnan(temps)], HIST_LOW - 1.0, HIST_HIGH + 1.0)
    n_bins = int(HIST_HIGH - HIST_LOW)
    hist = np.zeros(n_bins)
    if temps.size == 0:
        return hist
    idx = np.clip(np.floor(temps - HIST_LOW).astype(int), 0, n_bins - 1)
    np.add.at(hist, idx, 1.0)
    return hist / temps.size


@dataclass
class Observation:
    timestamp: float
    names: list[str]
    values: np.ndarray
    histogram: np.ndarray | None = None

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


@dataclass
class RewardContext:
    """Everything besides a reward_info row needed to recompute the reward."""

    zone_ids: list[str]
    zone_area_ft2: list[float]
    ahu_id: str
    boiler_id: str
    weights: RewardWeights = field(default_factory=RewardWeights)
    comfort: ComfortParams = field(default_factory=ComfortParams)
    air_quality: AirQualityParams = field(default_factory=AirQualityParams)
    maxima: dict[str, float] = field(default_factory=dict)

    ZONE_FIELDS = ("temperature", "heating_setpoint", "cooling_setpoint", "airflow", "occupancy")

    def info_names(self) -> list[str]:
        names = [f"{z}/{f}" for z in self.zone_ids for f in self.ZONE_FIELDS]
        names += [f"{self.ahu_id}/blower_power", f"{self.ahu_id}/refrigeration_power",
                  f"{self.ahu_id}/outside_airflow_cfm",
                  f"{self.boiler_id}/pump_power", f"{self.boiler_id}/gas_power",
                  "outside_air_temperature", "p_e", "p_g", "r_e", "r_g"]
        return names

    def compute(self, info: dict[str, float]) -> dict[str, float]:
        """Reward and components from one reward_info row."""
        def zone(f):
            return np.array([info[f"{z}/{f}"] for z in self.zone_ids])

        k = zone("occupancy")
        losses = comfort_loss(zone("temperature"), zone("heating_setpoint"),
                              zone("cooling_setpoint"), k, self.comfort)
        c1 = building_comfort(losses)
        m = self.maxima
        power = DevicePower(info[f"{self.ahu_id}/blower_power"],
                            info[f"{self.ahu_id}/refrigeration_power"],
                            info[f"{self.boiler_id}/pump_power"],
                            info[f"{self.boiler_id}/gas_power"],
                            m["blower_max"], m["refrigeration_max"], m["pump_max"], m["gas_max"])
        c2 = energy_cost(power, info["p_e"], info["p_g"])
        c3 = carbon_cost(power, info["r_e"], info["r_g"])
        aq = None
        if self.air_quality.enabled:
            v_min = float(np.sum(min_outside_airflow(k, np.asarray(self.zone_area_ft2),
                                                     self.air_quality)))
            aq = air_quality_reward(info[f"{self.ahu_id}/outside_airflow_cfm"], v_min,
                                    self.air_quality.stiffness)
        r = reward_3c(c1, c2, c3, self.weights, aq)
        return {"reward": r, "comfort": c1, "energy_cost": c2, "carbon": c3,
                "air_quality": float("nan") if aq is None else aq}

    def to_dict(self) -> dict:
        return {"zone_ids": list(self.zone_ids), "zone_area_ft2": list(self.zone_area_ft2),
                "ahu_id": self.ahu_id, "boiler_id": self.boiler_id,
                "weights": dataclasses.asdict(self.weights),
                "comfort": dataclasses.asdict(self.comfort),
                "air_quality": dataclasses.asdict(self.air_quality),
                "maxima": dict(self.maxima)}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardContext":
        return cls(list(d["zone_ids"]), list(d["zone_area_ft2"]), d["ahu_id"], d["boiler_id"],
                   RewardWeights(**d["weights"]), ComfortParams(**d["comfort"]),
                   AirQualityParams(**d["air_quality"]), dict(d["maxima"]))


SetpointHook = Callable[[float, list[str]], tuple[np.ndarray, np.ndarray]]


class BuildingEnv:
    """Reinforcement-learning style environment.

    Actions are :class:`SetpointVector` values, clamped into the building's
    bounds (clamping is reported in ``info["clamped"]``). Step ``t`` covers
    ``[t0 + t*dt, t0 + (t+1)*dt)`` and its observation describes the end of
    that interval.
    """

    def __init__(self, building: BuildingConfig, horizon: int = 288, seed: int = 0,
                 setpoint_hook: SetpointHook | None = None, params: MaterialParams | None = None,
                 default_action: SetpointVector | None = None):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.building = building
        self.horizon = horizon
        self.seed = seed
        self.setpoint_hook = setpoint_hook
        self.sim = Simulator(building, params)
        self.dt = self.sim.dt
        bounds = building.setpoint_bounds
        self.default_action = default_action or SetpointVector(
            0.5 * sum(bounds.supply_water), 0.5 * sum(bounds.supply_air))
        ahu, boiler = building.single("AHU"), building.single("Boiler")
        pc = self.sim.plant_config
        self.reward_context = RewardContext(
            list(self.sim.zone_ids),
            (self.sim.zone_map.area_m2() * M2_TO_FT2).tolist(),
            ahu.device_id, boiler.device_id,
            building.reward.weights, building.reward.comfort, building.reward.air_quality,
            {"blower_max": pc.ahu.rated_fan_power, "refrigeration_max": pc.chiller.max_power,
             "pump_max": pc.boiler.rated_pump_power, "gas_max": pc.boiler.max_gas_power})
        self.observation_names = building.observation_names()
        self.action_names = building.action_names()
        self.info_names = self.reward_context.info_names()
        self.states = None
        self._done = True

    # ------------------------------------------------------------ helpers
    def setpoints(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.setpoint_hook is not None:
            h, c = self.setpoint_hook(t, self.sim.zone_ids)
        else:
            stamp = np.datetime64(int(t), "s").astype(object)
            hour = stamp.hour + stamp.minute / 60.0
            h, c = self.building.setpoints.band(hour, self.building.occupancy.is_workday(stamp.date()))
        n = self.sim.n_zones
        return (np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy(),
                np.broadcast_to(np.asarray(c, dtype=float), (n,)).copy())

    def _observe(self, t: float, zone_temps: np.ndarray, action: SetpointVector,
                 T_out: float, plant: PlantOutput | None) -> Observation:
        vav_index = {vid: i for i, vid in enumerate(self.sim.vav_ids)}
        zone_index = {z: i for i, z in enumerate(self.sim.zone_ids)}
        vals = []
        for dev in self.building.devices.values():
            for name in dev.observable_fields:
                vals.append(self._sensor(dev, name, zone_temps, action, T_out, plant,
                                         vav_index, zone_index))
        return Observation(t, self.observation_names, np.array(vals, dtype=float),
                           observation_histogram(zone_temps))

    @staticmethod
    def _sensor(dev, name, zone_temps, action, T_out, plant, vav_index, zone_index) -> float:
        if dev.device_type == "VAV":
            if name == "zone_air_temperature_sensor":
                return float(zone_temps[zone_index[dev.zone_id]])
            if plant is None:
                return action.supply_air_temp if name.startswith("discharge") else 0.0
            i = vav_index[dev.device_id]
            return float({"supply_air_flowrate_sensor": plant.vav.airflow,
                          "discharge_air_temperature_sensor": plant.vav.discharge_temp,
                          "reheat_power_sensor": plant.vav.reheat_power}[name][i])
        if dev.device_type == "AHU":
            if name == "supply_air_temperature_setpoint":
                return action.supply_air_temp
            if plant is None:
                return T_out if name == "mixed_air_temperature_sensor" else 0.0
            return float({"mixed_air_temperature_sensor": plant.ahu.mixed_air_temp,
                          "outside_air_flowrate_sensor": plant.ahu.outside_airflow_cfm,
                          "supply_fan_power_sensor": plant.ahu.fan_power}[name])
        if dev.device_type == "Boiler":
            if name == "supply_water_temperature_setpoint":
                return action.supply_water_temp
            if plant is None:
                return 0.0
            return float(plant.power.gas if name == "gas_power_sensor" else plant.power.pump)
        if dev.device_type == "Chiller":
            return 0.0 if plant is None else float(plant.power.refrigeration)
        return T_out   # Meter

    # ------------------------------------------------------------ api
    def reset(self, initial_conditions: dict | None = None, seed: int | None = None) -> Observation:
        """Start a new episode.

        ``initial_conditions`` may carry ``zone_temperatures`` (list in zone
        order, dict by zone id, or a scalar), ``start_time`` (epoch seconds)
        and ``action`` (a SetpointVector reported in the first observation).
        """
        ic = dict(initial_conditions or {})
        if seed is not None:
            self.seed = seed
        sim_cfg = self.building.simulation
        self.t0 = float(ic.get("start_time", sim_cfg.start_epoch()))
        temps = ic.get("zone_temperatures", sim_cfg.initial_temperature)
        if isinstance(temps, dict):
            temps = [temps[z] for z in self.sim.zone_ids]
        self.initial_zone_temps = np.broadcast_to(
            np.asarray(temps, dtype=float), (self.sim.n_zones,)).copy()
        self.t = self.t0
        self.T_out = self.sim.weather.at(self.t)
        self.states = self.sim.initial_states(self.initial_zone_temps, self.T_out, self.t)
        self.shuffle_rng = derive_rng(self.seed, "shuffle")
        self.occupancy = OccupancySimulator(self.building.occupancy, self.sim.zone_ids,
                                            self.dt, derive_rng(self.seed, "occupancy"))
        self.steps = 0
        self._done = False
        action = ic.get("action", self.default_action)
        self.last_action = action.clamp(self.building.setpoint_bounds)[0]
        self.initial_observation = self._observe(self.t, self.initial_zone_temps,
                                                 self.last_action, self.T_out, None)
        self.last_observation = self.initial_observation
        return self.initial_observation

    def step(self, action: SetpointVector):
        if self.states is None or self._done:
            raise RuntimeError("call reset() before step()")
        applied, clamped = action.clamp(self.building.setpoint_bounds)
        t_start, T_inf = self.t, self.T_out
        h_sp, c_sp = self.setpoints(t_start)
        info = {"t": t_start, "action": applied, "clamped": clamped}
        try:
            res = self.sim.step(self.states, applied, h_sp, c_sp, T_inf, self.shuffle_rng)
        except (SolverDivergence, ConvergenceFailure) as exc:
            log.error("step %d failed: %s", self.steps, exc)
            self._done = True
            info["error"] = str(exc)
            info["exception"] = exc
            return self.last_observation, FAILED_STEP_REWARD, True, info
        occupancy = self.occupancy.at(t_start)
        self.states = res.states
        self.t = t_start + self.dt
        self.T_out = self.sim.weather.at(self.t)
        self.steps += 1
        self._done = self.steps >= self.horizon
        obs = self._observe(self.t, res.zone_temps, applied, self.T_out, res.plant)

        zone_flow = np.bincount(self.sim.vav_zone, weights=res.plant.vav.airflow,
                                minlength=self.sim.n_zones)
        p_e, p_g, r_e, r_g = self.building.reward.tariff.at(t_start)
        ctx = self.reward_context
        row = {}
        for i, z in enumerate(ctx.zone_ids):
            row[f"{z}/temperature"] = float(res.zone_temps[i])
            row[f"{z}/heating_setpoint"] = float(h_sp[i])
            row[f"{z}/cooling_setpoint"] = float(c_sp[i])
            row[f"{z}/airflow"] = float(zone_flow[i])
            row[f"{z}/occupancy"] = float(occupancy[i])
        pw = res.plant.power
        row.update({f"{ctx.ahu_id}/blower_power": float(pw.blower),
                    f"{ctx.ahu_id}/refrigeration_power": float(pw.refrigeration),
                    f"{ctx.ahu_id}/outside_airflow_cfm": float(res.plant.ahu.outside_airflow_cfm),
                    f"{ctx.boiler_id}/pump_power": float(pw.pump),
                    f"{ctx.boiler_id}/gas_power": float(pw.gas),
                    "outside_air_temperature": float(T_inf),
                    "p_e": p_e, "p_g": p_g, "r_e": r_e, "r_g": r_g})
        response = ctx.compute(row)
        info.update(response)
        info.update({"reward_info": row, "unmet_heating": res.plant.unmet_heating,
                     "unmet_cooling": res.plant.unmet_cooling, "sweeps": res.sweeps,
                     "max_delta": res.max_delta, "zone_temperatures": res.zone_temps,
                     "occupancy": occupancy})
        self.last_action = applied
        self.last_observation = obs
        return obs, response["reward"], self._done, info

    # ------------------------------------------------------------ episodes
    def episode_metadata(self) -> dict:
        b = self.building
        areas = self.sim.zone_map.area_m2()
        return {
            "version": FORMAT_VERSION,
            "building": b.name,
            "config_hash": b.config_hash(),
            "timestep": self.dt,
            "start_time": format_time(self.t0),
            "seed": self.seed,
            "params": self.sim.params.as_dict(),
            "zone_ids": list(self.sim.zone_ids),
            "zones": [{"zone_id": z.zone_id, "floor": z.floor, "area_m2": float(areas[i]),
                       "devices": list(z.devices)} for i, z in enumerate(b.zones)],
            "devices": [{"device_id": d.device_id, "device_type": d.device_type,
                         "floor": d.floor, "zone_id": d.zone_id,
                         "observable_fields": list(d.observable_fields),
                         "action_fields": list(d.action_fields),
                         "diffuser_cells": [list(c) for c in d.diffuser_cells]}
                        for d in b.devices.values()],
            "floorplans": [g.cells.astype(int).tolist() for g in b.floors],
            "zone_cells": [[list(c) for c in z.cells] for z in b.zones],
            "initial_observation": {"timestamp": format_time(self.t0),
                                    "values": self.initial_observation.values.tolist()},
            "initial_zone_temperatures": self.initial_zone_temps.tolist(),
            "reward_context": self.reward_context.to_dict(),
        }


class EpisodeRecorder:
    def __init__(self, env: BuildingEnv):
        self.env = env
        self.times, self.obs, self.actions, self.info, self.response = [], [], [], [], []

    def record(self, obs: Observation, info: dict) -> None:
        env = self.env
        self.times.append(info["t"])
        self.obs.append(obs.values)
        self.actions.append(env.building.action_vector(info["action"]))
        self.info.append([info["reward_info"][n] for n in env.info_names])
        self.response.append([info[n] for n in RESPONSE_NAMES])

    def archive(self) -> EpisodeArchive:
        env = self.env
        t = np.array(self.times, dtype=float)

        def mat(names, rows, ts):
            return Matrix(names, ts, np.array(rows, dtype=float).reshape(len(ts), len(names)))

        return EpisodeArchive(
            env.episode_metadata(),
            mat(env.observation_names, self.obs, t + env.dt),
            mat(env.action_names, self.actions, t),
            mat(env.info_names, self.info, t),
            mat(RESPONSE_NAMES, self.response, t))


class EpisodeFailed(RuntimeError):
    def __init__(self, exc: Exception, partial: EpisodeArchive):
        super().__init__(str(exc))
        self.cause = exc
        self.partial = partial


def run_episode(env: BuildingEnv, policy, steps: int, initial_conditions: dict | None = None,
                seed: int | None = None, progress: Callable[[int, dict], None] | None = None
                ) -> EpisodeArchive:
    """Roll ``policy(t, observation) -> SetpointVector`` for ``steps`` steps."""
    env.horizon = steps
    obs = env.reset(initial_conditions, seed)
    rec = EpisodeRecorder(env)
    for i in range(steps):
        action = policy(env.t, obs)
        obs, reward, done, info = env.step(action)
        if "error" in info:
            raise EpisodeFailed(info["exception"], rec.archive())
        rec.record(obs, info)
        if progress is not None:
            progress(i, info)
    return rec.archive()
