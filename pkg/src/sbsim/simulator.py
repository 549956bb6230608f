"""Thermal plant + finite-difference simulator for a whole building.

One ``step`` runs the HVAC plant on the current zone temperatures, injects
the resulting VAV energy at the diffusers, sweeps every floor to
convergence and finally shuffles air inside zones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import spsolve

from .building import BuildingConfig, Weather
from .fd import AirShuffler, ThermalState, BoundaryConditions, fd_step
from .grid import MaterialParams, build_oriented_fields, classify_cvs
from .hvac import PlantConfig, PlantOutput, SetpointVector, VAVArrays, plant_step


@dataclass
class StepResult:
    states: list[ThermalState]
    plant: PlantOutput
    zone_temps: np.ndarray
    sweeps: list[int]
    max_delta: list[float]


class Simulator:
    def __init__(self, building: BuildingConfig, params: MaterialParams | None = None):
        self.building = building
        self.params = params or building.params
        sim = building.simulation
        self.dt = float(sim.timestep)
        self.epsilon = float(sim.epsilon)
        self.max_sweeps = int(sim.max_sweeps)
        self.weather = Weather(building.weather, building.base_dir)
        self.wall_init = sim.wall_init

        self.grids = building.floors
        self.classifications = [classify_cvs(g) for g in self.grids]
        self.fields = [build_oriented_fields(g, c, self.params)
                       for g, c in zip(self.grids, self.classifications)]
        self.zone_map = building.zone_map()
        self.zone_ids = self.zone_map.zone_ids
        self.n_zones = len(self.zone_ids)
        self.shufflers = [AirShuffler(lab) for lab in self.zone_map.labels]

        # flat indices of zoned cells per floor, for zone means
        self._zoned = []
        counts = np.zeros(self.n_zones)
        for lab in self.zone_map.labels:
            flat = lab.ravel()
            idx = np.flatnonzero(flat >= 0)
            self._zoned.append((idx, flat[idx]))
            counts += np.bincount(flat[idx], minlength=self.n_zones)
        self._zone_counts = counts

        vavs = building.devices_of("VAV")
        self.vav_ids = [d.device_id for d in vavs]
        self.vav_zone = np.array([self.zone_ids.index(d.zone_id) for d in vavs], dtype=int)
        ahu, boiler, chiller = (building.single(t) for t in ("AHU", "Boiler", "Chiller"))
        self.plant_config = PlantConfig(
            VAVArrays.from_configs([building.plant[d.device_id] for d in vavs]),
            building.plant[ahu.device_id], building.plant[boiler.device_id],
            building.plant[chiller.device_id], ahu.device_id, boiler.device_id, chiller.device_id)

        # diffuser scatter: (flat cell, vav index, 1/n_cells) per floor
        self._diffusers = []
        for f, g in enumerate(self.grids):
            cells, owner, share = [], [], []
            for i, d in enumerate(vavs):
                if d.floor != f or not d.diffuser_cells:
                    continue
                rc = np.asarray(d.diffuser_cells)
                cells.append(rc[:, 0] * g.width + rc[:, 1])
                owner.append(np.full(len(rc), i))
                share.append(np.full(len(rc), 1.0 / len(rc)))
            if cells:
                self._diffusers.append((np.concatenate(cells), np.concatenate(owner),
                                        np.concatenate(share)))
            else:
                self._diffusers.append(None)
        self._no_diffuser = np.array([not d.diffuser_cells for d in vavs], dtype=bool)

        # nearest zoned cell for every cell, used to seed wall temperatures
        self._nearest = []
        for lab in self.zone_map.labels:
            zoned = lab >= 0
            if zoned.any():
                self._nearest.append(ndimage.distance_transform_edt(
                    ~zoned, return_distances=False, return_indices=True))
            else:
                self._nearest.append(None)

    # ---------------------------------------------------------------- state
    def _steady_fill(self, f: int, T: np.ndarray, known: np.ndarray, T_inf: float) -> np.ndarray:
        """Steady-state conduction temperatures of the unknown cells, with
        zoned and exterior cells held fixed. A vanishing pull towards the
        current guess keeps isolated pockets well posed."""
        fields = self.fields[f]
        unknown = ~known
        n = int(unknown.sum())
        if n == 0:
            return T
        h, w = T.shape
        index = np.full(T.shape, -1, dtype=np.int64)
        index[unknown] = np.arange(n)
        diag = fields.HA.sum(axis=0)[unknown].copy()
        rhs = fields.HA.sum(axis=0)[unknown] * T_inf
        rows, cols, vals = [], [], []
        r, c = np.nonzero(unknown)
        for d, (dr, dc) in ((1, (0, -1)), (2, (1, 0)), (3, (0, 1)), (4, (-1, 0))):
            g = fields.G[d - 1][unknown]
            rr, cc = r + dr, c + dc
            ok = (g > 0) & (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
            diag += np.where(ok, g, 0.0)
            rr, cc, gi, src = rr[ok], cc[ok], g[ok], np.flatnonzero(ok)
            nb = index[rr, cc]
            free = nb >= 0
            rows.append(src[free])
            cols.append(nb[free])
            vals.append(-gi[free])
            np.add.at(rhs, src[~free], gi[~free] * T[rr[~free], cc[~free]])
        reg = 1e-9 * max(float(diag.max()), 1.0)
        rhs += reg * T[unknown]
        A = sparse.csr_matrix((np.concatenate(vals + [diag + reg]),
                               (np.concatenate(rows + [np.arange(n)]),
                                np.concatenate(cols + [np.arange(n)]))), shape=(n, n))
        out = T.copy()
        out[unknown] = spsolve(A, rhs)
        return out

    def initial_states(self, zone_temps, T_inf: float, t: float) -> list[ThermalState]:
        """Zones at their given temperatures, exterior at ``T_inf``, every
        other inside cell at the steady conduction profile between them."""
        zone_temps = np.broadcast_to(np.asarray(zone_temps, dtype=float), (self.n_zones,))
        fallback = float(zone_temps.mean()) if self.n_zones else float(T_inf)
        states = []
        for f, (g, lab) in enumerate(zip(self.grids, self.zone_map.labels)):
            T = np.full(g.cells.shape, fallback)
            zoned = lab >= 0
            T[zoned] = zone_temps[lab[zoned]]
            if self._nearest[f] is not None:
                ri, ci = self._nearest[f]
                T = T[ri, ci]
            T[g.exterior] = T_inf
            if self.wall_init == "steady":
                T = self._steady_fill(f, T, zoned | g.exterior, float(T_inf))
            states.append(ThermalState(T, T.copy(), t))
        return states

    def zone_temperatures(self, states: list[ThermalState]) -> np.ndarray:
        sums = np.zeros(self.n_zones)
        for (idx, zone), s in zip(self._zoned, states):
            sums += np.bincount(zone, weights=s.T.ravel()[idx], minlength=self.n_zones)
        with np.errstate(invalid="ignore"):
            return sums / self._zone_counts

    def diffuser_energy(self, q_vav: np.ndarray) -> list[np.ndarray]:
        """Joules per cell for one step from per-VAV thermal power in W."""
        if np.any(q_vav[self._no_diffuser] != 0):
            from .fd import ConfigurationError
            bad = self.vav_ids[int(np.flatnonzero(self._no_diffuser & (q_vav != 0))[0])]
            raise ConfigurationError(f"device {bad} delivers energy but has no diffuser cells")
        out = []
        for g, scatter in zip(self.grids, self._diffusers):
            if scatter is None:
                out.append(np.zeros(g.cells.shape))
                continue
            cells, owner, share = scatter
            q = np.bincount(cells, weights=q_vav[owner] * self.dt * share, minlength=g.cells.size)
            out.append(q.reshape(g.cells.shape))
        return out

    # ---------------------------------------------------------------- step
    def step(self, states: list[ThermalState], action: SetpointVector, heating_sp, cooling_sp,
             T_inf: float, rng: np.random.Generator | None = None) -> StepResult:
        """Advance all floors one timestep.

        ``heating_sp``/``cooling_sp`` are per zone (or scalars).
        """
        zt = self.zone_temperatures(states)
        h = np.broadcast_to(np.asarray(heating_sp, dtype=float), (self.n_zones,))[self.vav_zone]
        c = np.broadcast_to(np.asarray(cooling_sp, dtype=float), (self.n_zones,))[self.vav_zone]
        plant = plant_step(zt[self.vav_zone], action, h, c, T_inf, self.plant_config)
        Q = self.diffuser_energy(plant.q_zone)
        bc = BoundaryConditions(T_inf, self.dt)
        p = self.params
        new, sweeps, deltas = [], [], []
        for f, (s, fields) in enumerate(zip(states, self.fields)):
            s2 = fd_step(s, fields, bc, Q[f], self.epsilon, self.max_sweeps, floor=f)
            sweeps.append(s2.sweeps)
            deltas.append(s2.max_delta)
            if rng is not None and p.swap_prob > 0 and p.radius_cells > 0:
                s2.T = self.shufflers[f](s2.T, p.swap_prob, p.radius_cells, rng)
                s2.T_prev = s2.T.copy()
            new.append(s2)
        return StepResult(new, plant, self.zone_temperatures(new), sweeps, deltas)
