"""Simplified HVAC plant: VAV boxes, one air handler, a boiler loop and a chiller.

All control laws are deliberately plain: a deadband thermostat with a
proportional cooling band on each VAV, the cube fan law on the air handler,
constant boiler efficiency and chiller COP. Every VAV function accepts
scalars or equally shaped arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C_AIR = 1006.0                  # J/kg/K
AIR_DENSITY = 1.2               # kg/m^3
M3S_TO_CFM = 2118.880003
KG_S_TO_CFM = M3S_TO_CFM / AIR_DENSITY


class PlantConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SetpointBounds:
    supply_water: tuple[float, float] = (30.0, 90.0)
    supply_air: tuple[float, float] = (10.0, 20.0)


@dataclass(frozen=True)
class SetpointVector:
    """Agent action: hot water and air handler supply temperatures, C."""

    supply_water_temp: float
    supply_air_temp: float

    def clamp(self, bounds: SetpointBounds) -> tuple["SetpointVector", list[str]]:
        clamped = []
        w = float(np.clip(self.supply_water_temp, *bounds.supply_water))
        a = float(np.clip(self.supply_air_temp, *bounds.supply_air))
        if w != self.supply_water_temp:
            clamped.append("supply_water_temp")
        if a != self.supply_air_temp:
            clamped.append("supply_air_temp")
        return SetpointVector(w, a), clamped


@dataclass(frozen=True)
class ZoneSetpoints:
    """Comfort band per zone, with a wider band outside occupied hours."""

    heating: float = 20.0
    cooling: float = 24.0
    unoccupied_heating: float = 16.0
    unoccupied_cooling: float = 28.0
    occupied_start_hour: float = 6.0
    occupied_end_hour: float = 19.0

    def __post_init__(self):
        if not self.heating < self.cooling or not self.unoccupied_heating < self.unoccupied_cooling:
            raise PlantConfigError("heating setpoint must be below cooling setpoint")

    def band(self, hour: float, workday: bool) -> tuple[float, float]:
        if workday and self.occupied_start_hour <= hour < self.occupied_end_hour:
            return self.heating, self.cooling
        return self.unoccupied_heating, self.unoccupied_cooling


@dataclass(frozen=True)
class VAVConfig:
    min_airflow: float = 0.05          # kg/s
    max_airflow: float = 0.3           # kg/s
    reheat_capacity: float = 3000.0    # W
    discharge_cap: float = 35.0        # C
    proportional_band: float = 2.0     # C

    def __post_init__(self):
        if self.min_airflow < 0 or self.min_airflow > self.max_airflow:
            raise PlantConfigError("VAV needs 0 <= min_airflow <= max_airflow")
        if self.proportional_band <= 0 or self.reheat_capacity < 0:
            raise PlantConfigError("VAV proportional band must be > 0, reheat capacity >= 0")


@dataclass(frozen=True)
class AHUConfig:
    rated_fan_power: float = 5000.0    # W, intake + exhaust
    rated_airflow: float = 3.0         # kg/s
    recirculation_fraction: float = 0.7

    def __post_init__(self):
        if self.rated_airflow <= 0 or self.rated_fan_power < 0:
            raise PlantConfigError("AHU ratings must be positive")
        if not 0 <= self.recirculation_fraction <= 1:
            raise PlantConfigError("recirculation_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class BoilerConfig:
    max_gas_power: float = 60000.0     # W
    efficiency: float = 0.85
    rated_pump_power: float = 1500.0   # W
    standby_fraction: float = 0.1

    def __post_init__(self):
        if not 0 < self.efficiency <= 1 or self.max_gas_power < 0 or self.rated_pump_power < 0:
            raise PlantConfigError("invalid boiler ratings")


@dataclass(frozen=True)
class ChillerConfig:
    max_power: float = 20000.0         # W electrical
    cop: float = 3.5

    def __post_init__(self):
        if self.cop <= 0 or self.max_power < 0:
            raise PlantConfigError("invalid chiller ratings")


@dataclass
class VAVArrays:
    """Column view of several VAV configs, for vectorised updates."""

    min_airflow: np.ndarray
    max_airflow: np.ndarray
    reheat_capacity: np.ndarray
    discharge_cap: np.ndarray
    proportional_band: np.ndarray

    @classmethod
    def from_configs(cls, configs: list[VAVConfig]) -> "VAVArrays":
        return cls(*(np.array([getattr(c, name) for c in configs], dtype=float)
                     for name in ("min_airflow", "max_airflow", "reheat_capacity",
                                  "discharge_cap", "proportional_band")))


@dataclass
class VAVResult:
    airflow: np.ndarray
    q_zone: np.ndarray
    reheat_power: np.ndarray
    discharge_temp: np.ndarray


def vav_update(T_z, heating_sp, cooling_sp, T_s: float, T_b: float, cfg) -> VAVResult:
    """Deadband thermostat of one or more VAV boxes.

    Above the cooling setpoint airflow ramps from min to max over the
    proportional band. Below the heating setpoint airflow stays at minimum
    and the reheat coil lifts the discharge temperature towards
    ``min(T_b, discharge_cap)`` in proportion to the heating error.
    """
    T_z = np.asarray(T_z, dtype=float)
    band = cfg.proportional_band
    cool_frac = np.clip((T_z - cooling_sp) / band, 0.0, 1.0)
    m = cfg.min_airflow + cool_frac * (np.asarray(cfg.max_airflow) - cfg.min_airflow)
    heat_frac = np.clip((heating_sp - T_z) / band, 0.0, 1.0)
    hot = np.minimum(T_b, cfg.discharge_cap)
    lift = np.maximum(heat_frac * (hot - T_s), 0.0)
    reheat = np.minimum(m * C_AIR * lift, cfg.reheat_capacity)
    with np.errstate(divide="ignore", invalid="ignore"):
        rise = np.where(m > 0, reheat / (m * C_AIR), 0.0)
    discharge = T_s + rise
    q = m * C_AIR * (discharge - T_z)
    return VAVResult(m, q, reheat, discharge)


@dataclass
class AHUResult:
    fan_power: float
    conditioning_load: float   # W, > 0 heating, < 0 cooling
    outside_airflow_cfm: float
    mixed_air_temp: float
    return_air_temp: float


def ahu_update(total_airflow: float, T_s: float, T_inf: float, recirc_fraction: float,
               cfg: AHUConfig, T_return: float | None = None) -> AHUResult:
    if total_airflow < 0:
        raise PlantConfigError("total airflow must be >= 0")
    T_ret = T_inf if T_return is None else T_return
    ratio = total_airflow / cfg.rated_airflow
    fan = min(cfg.rated_fan_power * ratio ** 3, cfg.rated_fan_power)
    mixed = recirc_fraction * T_ret + (1.0 - recirc_fraction) * T_inf
    load = total_airflow * C_AIR * (T_s - mixed)
    v_oa = (1.0 - recirc_fraction) * total_airflow * KG_S_TO_CFM
    return AHUResult(fan, load, v_oa, mixed, T_ret)


def boiler_update(demand: float, T_b: float, cfg: BoilerConfig,
                  reheat_active: bool | None = None) -> tuple[float, float, float]:
    """(gas power, pump power, unmet load) for a heat demand in W.

    The supply water setpoint only bounds the VAV discharge temperature, so
    ``T_b`` is accepted for interface symmetry.
    """
    demand = max(float(demand), 0.0)
    gas = min(demand / cfg.efficiency, cfg.max_gas_power)
    unmet = max(demand - gas * cfg.efficiency, 0.0)
    active = demand > 0 if reheat_active is None else reheat_active
    pump = cfg.rated_pump_power * (1.0 if active else cfg.standby_fraction)
    return gas, pump, unmet


def chiller_update(load: float, cfg: ChillerConfig) -> tuple[float, float]:
    """(electrical power, unmet cooling load) for a cooling load in W."""
    load = max(float(load), 0.0)
    power = min(load / cfg.cop, cfg.max_power)
    return power, max(load - power * cfg.cop, 0.0)


@dataclass
class DevicePower:
    """Actual and rated power draw per plant category, W."""

    blower: float = 0.0
    refrigeration: float = 0.0
    pump: float = 0.0
    gas: float = 0.0
    blower_max: float = 0.0
    refrigeration_max: float = 0.0
    pump_max: float = 0.0
    gas_max: float = 0.0
    per_device: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def electrical(self) -> float:
        return self.blower + self.refrigeration + self.pump

    @property
    def electrical_max(self) -> float:
        return self.blower_max + self.refrigeration_max + self.pump_max


@dataclass
class AirflowState:
    zone_airflow: np.ndarray
    outside_air_fraction: float
    outside_airflow_cfm: float


@dataclass
class PlantConfig:
    vav: VAVArrays
    ahu: AHUConfig
    boiler: BoilerConfig
    chiller: ChillerConfig
    ahu_id: str = "ahu"
    boiler_id: str = "boiler"
    chiller_id: str = "chiller"


@dataclass
class PlantOutput:
    q_zone: np.ndarray          # W per VAV
    vav: VAVResult
    ahu: AHUResult
    power: DevicePower
    airflow: AirflowState
    unmet_heating: float
    unmet_cooling: float


def plant_step(zone_temps: np.ndarray, action: SetpointVector, heating_sp, cooling_sp,
               T_inf: float, plant: PlantConfig) -> PlantOutput:
    """VAVs, then the air handler, then boiler and chiller.

    ``zone_temps`` and the setpoint arrays are indexed per VAV.
    """
    T_s, T_b = action.supply_air_temp, action.supply_water_temp
    vav = vav_update(zone_temps, heating_sp, cooling_sp, T_s, T_b, plant.vav)
    total = float(vav.airflow.sum())
    T_ret = float(np.dot(vav.airflow, zone_temps) / total) if total > 0 else T_inf
    ahu = ahu_update(total, T_s, T_inf, plant.ahu.recirculation_fraction, plant.ahu, T_ret)
    reheat = float(vav.reheat_power.sum())
    heat_demand = reheat + max(ahu.conditioning_load, 0.0)
    gas, pump, unmet_h = boiler_update(heat_demand, T_b, plant.boiler, heat_demand > 0)
    chill, unmet_c = chiller_update(-min(ahu.conditioning_load, 0.0), plant.chiller)
    power = DevicePower(
        blower=ahu.fan_power, refrigeration=chill, pump=pump, gas=gas,
        blower_max=plant.ahu.rated_fan_power, refrigeration_max=plant.chiller.max_power,
        pump_max=plant.boiler.rated_pump_power, gas_max=plant.boiler.max_gas_power,
        per_device={
            plant.ahu_id: {"intake_fan_power": ahu.fan_power / 2,
                           "exhaust_fan_power": ahu.fan_power / 2},
            plant.boiler_id: {"gas_power": gas, "pump_power": pump},
            plant.chiller_id: {"compressor_power": chill},
        },
    )
    airflow = AirflowState(vav.airflow, 1.0 - plant.ahu.recirculation_fraction,
                           ahu.outside_airflow_cfm)
    return PlantOutput(vav.q_zone, vav, ahu, power, airflow, unmet_h, unmet_c)
