"""Comfort, cost and carbon reward terms, plus the stochastic occupancy model."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .hvac import DevicePower


class RewardConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ComfortParams:
    stiffness: float = 4.0   # 1/C
    offset: float = 1.0      # C from the setpoint at which the loss is 0.5

    def __post_init__(self):
        if self.stiffness <= 0 or self.offset <= 0:
            raise RewardConfigError("comfort stiffness and offset must be positive")


@dataclass(frozen=True)
class RewardWeights:
    u: float = 0.6
    v: float = 0.2
    w: float = 0.2
    air_quality: float = 0.0

    def __post_init__(self):
        vals = (self.u, self.v, self.w, self.air_quality)
        if min(vals) < 0:
            raise RewardConfigError("reward weights must be >= 0")
        if sum(vals) <= 0:
            raise RewardConfigError("at least one reward weight must be positive")

    def normalized(self) -> "RewardWeights":
        s = self.u + self.v + self.w + self.air_quality
        return RewardWeights(self.u / s, self.v / s, self.w / s, self.air_quality / s)


@dataclass(frozen=True)
class AirQualityParams:
    rate_per_person: float = 5.0    # CFM/person (office)
    rate_per_area: float = 0.06     # CFM/ft^2 (office)
    stiffness: float = 1.0
    enabled: bool = False

    def __post_init__(self):
        if self.rate_per_person < 0 or self.rate_per_area < 0:
            raise RewardConfigError("air quality rates must be >= 0")


@dataclass(frozen=True)
class Prices:
    electricity: float      # $/kWh or kg/kWh
    gas: float


@dataclass
class TariffAndEmissions:
    """Price and emission rates, constant or a step-wise timeseries.

    Timeseries rows apply from their timestamp until the next row.
    """

    p_e: float = 0.12       # $/kWh
    p_g: float = 0.04       # $/kWh equivalent
    r_e: float = 0.40       # kg CO2/kWh
    r_g: float = 0.18       # kg CO2/kWh
    times: np.ndarray | None = None
    table: np.ndarray | None = None   # rows of (p_e, p_g, r_e, r_g)

    def __post_init__(self):
        if min(self.p_e, self.p_g, self.r_e, self.r_g) < 0:
            raise RewardConfigError("prices and emission rates must be >= 0")
        if self.table is not None and (np.asarray(self.table) < 0).any():
            raise RewardConfigError("prices and emission rates must be >= 0")

    @classmethod
    def from_csv(cls, path) -> "TariffAndEmissions":
        times, rows = [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                ts = dt.datetime.fromisoformat(rec["timestamp"].replace("Z", "+00:00"))
                times.append(ts.timestamp())
                rows.append([float(rec[k]) for k in ("p_e", "p_g", "r_e", "r_g")])
        if not rows:
            raise RewardConfigError(f"tariff file {path} is empty")
        order = np.argsort(times)
        table = np.asarray(rows)[order]
        r_g = table[:, 3]
        if not np.allclose(r_g, r_g[0]):
            raise RewardConfigError("gas emission rate r_g must be constant")
        return cls(*table[0], times=np.asarray(times)[order], table=table)

    def at(self, t: float) -> tuple[float, float, float, float]:
        if self.table is None:
            return self.p_e, self.p_g, self.r_e, self.r_g
        i = max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)
        return tuple(float(v) for v in self.table[i])


def comfort_loss(T_z, heating_sp, cooling_sp, k_z, params: ComfortParams):
    """Per-zone discomfort in [0, 1].

    Zero for unoccupied zones and inside the setpoint band; outside it a
    logistic in the deviation, equal to 0.5 at ``params.offset`` degrees.
    """
    T_z = np.asarray(T_z, dtype=float)
    below = np.maximum(heating_sp - T_z, 0.0)
    above = np.maximum(T_z - cooling_sp, 0.0)
    dev = below + above
    loss = np.where(dev > 0, expit(params.stiffness * (dev - params.offset)), 0.0)
    loss = np.where(np.asarray(k_z) > 0, loss, 0.0)
    return float(loss) if loss.ndim == 0 else loss


def building_comfort(losses) -> float:
    losses = np.asarray(losses, dtype=float)
    return -float(losses.mean()) if losses.size else 0.0


def _normalized_cost(power: DevicePower, electricity: float, gas: float) -> float:
    worst = electricity * power.electrical_max + gas * power.gas_max
    if worst <= 0:
        raise RewardConfigError("maximum energy cost is zero; check device ratings and prices")
    return -(electricity * power.electrical + gas * power.gas) / worst


def energy_cost(power: DevicePower, p_e: float, p_g: float) -> float:
    return _normalized_cost(power, p_e, p_g)


def carbon_cost(power: DevicePower, r_e: float, r_g: float) -> float:
    return _normalized_cost(power, r_e, r_g)


def min_outside_airflow(persons, area_ft2, params: AirQualityParams):
    return params.rate_per_person * persons + params.rate_per_area * area_ft2


def air_quality_reward(v_oa: float, v_min: float, stiffness: float) -> float:
    return float(expit(stiffness * (v_oa - v_min)))


def reward_3c(c1: float, c2: float, c3: float, weights: RewardWeights,
              aq: float | None = None) -> float:
    """Weighted regret in [-1, 0]; ``aq`` is the air-quality reward in [0, 1]."""
    w = weights.normalized()
    r = w.u * c1 + w.v * c2 + w.w * c3
    if aq is not None:
        r += w.air_quality * (aq - 1.0)
    return r


# ---------------------------------------------------------------- occupancy

@dataclass(frozen=True)
class OccupancyModel:
    """Workday arrival/departure process; windows are hours of the day."""

    max_occupants: int = 10
    arrival_window: tuple[float, float] = (7.0, 9.0)
    departure_window: tuple[float, float] = (16.0, 18.0)
    workdays: tuple[int, ...] = (0, 1, 2, 3, 4)
    holidays: tuple[str, ...] = ()
    per_zone_max: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        a0, a1 = self.arrival_window
        d0, d1 = self.departure_window
        if not (0 <= a0 < a1 <= d0 < d1 <= 24):
            raise RewardConfigError("occupancy windows must be ordered and non-overlapping")

    def is_workday(self, day: dt.date) -> bool:
        return day.weekday() in self.workdays and day.isoformat() not in self.holidays

    def k_max(self, zone_id: str) -> int:
        return int(self.per_zone_max.get(zone_id, self.max_occupants))


@dataclass
class DayOccupancy:
    headcount: np.ndarray       # mean persons per step, shape (steps,)
    arrival_step: np.ndarray    # per occupant
    departure_step: np.ndarray
    step_seconds: float

    def arrival_times(self) -> np.ndarray:
        """Seconds after midnight, taken at the middle of the arrival step."""
        return (self.arrival_step + 0.5) * self.step_seconds


def simulate_day(model: OccupancyModel, k_max: int, day: dt.date, step_seconds: float,
                 rng: np.random.Generator) -> DayOccupancy:
    """Occupancy of one zone over one day.

    Each occupant is a Bernoulli trial per step with probability 2/n, n the
    number of steps in the window, so arrival and departure steps are
    geometric from the window start with mean at the window midpoint.
    Occupants still absent when the departure window opens arrive on the
    step before it; occupants still present at midnight leave on the last step.
    """
    steps = int(round(86400 / step_seconds))
    if not model.is_workday(day) or k_max <= 0:
        empty = np.zeros(0, dtype=int)
        return DayOccupancy(np.zeros(steps), empty, empty, step_seconds)
    starts = np.arange(steps) * step_seconds / 3600.0
    a0, a1 = model.arrival_window
    d0, d1 = model.departure_window
    first_a = int(np.argmax(starts >= a0))
    first_d = int(np.argmax(starts >= d0))
    n_a = max(int(np.count_nonzero((starts >= a0) & (starts < a1))), 1)
    n_d = max(int(np.count_nonzero((starts >= d0) & (starts < d1))), 1)
    arrive = first_a + rng.geometric(min(2.0 / n_a, 1.0), size=k_max) - 1
    arrive = np.minimum(arrive, first_d - 1)
    depart = first_d + rng.geometric(min(2.0 / n_d, 1.0), size=k_max) - 1
    depart = np.minimum(depart, steps - 1)
    # transitions happen mid-step on average: half credit on both end steps
    delta = np.zeros(steps + 1)
    np.add.at(delta, arrive, 0.5)
    np.add.at(delta, arrive + 1, 0.5)
    np.add.at(delta, depart, -0.5)
    np.add.at(delta, depart + 1, -0.5)
    return DayOccupancy(np.cumsum(delta)[:steps], arrive, depart, step_seconds)


class OccupancySimulator:
    """Per-zone occupancy, drawn one day at a time from an explicit rng."""

    def __init__(self, model: OccupancyModel, zone_ids: list[str], step_seconds: float,
                 rng: np.random.Generator):
        self.model = model
        self.zone_ids = list(zone_ids)
        self.step_seconds = step_seconds
        self.rng = rng
        self._day: dt.date | None = None
        self._days: list[DayOccupancy] = []

    def at(self, t: float) -> np.ndarray:
        """Mean headcount per zone over the step starting at epoch second ``t``."""
        stamp = dt.datetime.fromtimestamp(t, dt.timezone.utc)
        if stamp.date() != self._day:
            self._day = stamp.date()
            self._days = [simulate_day(self.model, self.model.k_max(z), self._day,
                                       self.step_seconds, self.rng) for z in self.zone_ids]
        secs = stamp.hour * 3600 + stamp.minute * 60 + stamp.second
        i = int(secs // self.step_seconds)
        return np.array([d.headcount[i] for d in self._days])


def simulate_occupancy(model: OccupancyModel, zone_id: str, timestamp: float,
                       step_seconds: float, rng: np.random.Generator) -> float:
    """Mean headcount of one zone over the step starting at ``timestamp``."""
    return float(OccupancySimulator(model, [zone_id], step_seconds, rng).at(timestamp)[0])
