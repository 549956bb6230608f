"""Finite-difference heat diffusion over one floor lattice.

Every sweep evaluates the tensorised energy balance for all cells at once
(Jacobi iteration): neighbour temperatures come from the previous sweep, the
capacity term from the previous timestep. Exterior cells are pinned to the
outside air temperature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import DIRECTIONS, OrientedFields, DeviceLayout

DEFAULT_EPSILON = 0.01
DEFAULT_MAX_SWEEPS = 10_000


class SolverDivergence(RuntimeError):
    def __init__(self, cell, floor: int | None = None):
        self.cell = tuple(int(v) for v in cell)
        self.floor = floor
        where = f" on floor {floor}" if floor is not None else ""
        super().__init__(f"non-finite temperature at cell {self.cell}{where}")


class ConvergenceFailure(RuntimeError):
    def __init__(self, max_delta: float, sweeps: int):
        self.max_delta = max_delta
        self.sweeps = sweeps
        super().__init__(f"no convergence after {sweeps} sweeps (max_delta={max_delta:.3g} C)")


class ConfigurationError(ValueError):
    pass


@dataclass
class ThermalState:
    T: np.ndarray
    T_prev: np.ndarray
    t: float = 0.0           # seconds since the Unix epoch
    sweeps: int = 0          # sweeps used by the last committed step
    max_delta: float = 0.0   # max_delta of the last committed sweep

    @classmethod
    def uniform(cls, shape, temperature: float, t: float = 0.0) -> "ThermalState":
        T = np.full(shape, float(temperature))
        return cls(T, T.copy(), t)

    def copy(self) -> "ThermalState":
        return replace(self, T=self.T.copy(), T_prev=self.T_prev.copy())


@dataclass(frozen=True)
class BoundaryConditions:
    """Exterior air temperature (scalar, or one value per cell) and timestep."""

    T_inf: float | np.ndarray
    dt: float = 300.0
    h_override: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("timestep must be positive")


def shift(T: np.ndarray, direction: str) -> np.ndarray:
    """Move array contents one cell towards ``direction``, filling with 0.

    ``shift(T, "left")[i, j] == T[i, j + 1]``, i.e. the right-hand neighbour.
    """
    out = np.zeros_like(T)
    if direction == "left":
        out[:, :-1] = T[:, 1:]
    elif direction == "right":
        out[:, 1:] = T[:, :-1]
    elif direction == "up":
        out[:-1, :] = T[1:, :]
    elif direction == "down":
        out[1:, :] = T[:-1, :]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return out


def _convective(fields: OrientedFields, bc: BoundaryConditions) -> np.ndarray:
    if bc.h_override is None:
        return fields.HA
    HA = np.empty_like(fields.HA)
    for d in DIRECTIONS:
        area = fields.V * fields.z if d in (1, 3) else fields.U * fields.z
        HA[d - 1] = np.where(fields.H[d - 1] > 0, bc.h_override * area, 0.0)
    return HA


class _Sweeper:
    """Per-step constants of the update, reused across Jacobi sweeps."""

    def __init__(self, T_prev, fields: OrientedFields, bc: BoundaryConditions, Q_x):
        HA = _convective(fields, bc)
        cap = fields.heat_capacity / bc.dt
        hsum = HA.sum(axis=0)
        self.G = fields.G
        self.ext = fields.exterior
        T_inf = np.broadcast_to(np.asarray(bc.T_inf, dtype=float), cap.shape)
        b = cap * T_prev + hsum * T_inf
        if Q_x is not None:
            b = b + np.asarray(Q_x, dtype=float) / bc.dt
        D = fields.G.sum(axis=0) + hsum + cap
        b[self.ext] = T_inf[self.ext]
        D[self.ext] = 1.0
        self.b = b
        self.D = D
        self._num = np.empty_like(b)
        self._tmp = np.empty_like(b)

    def __call__(self, T: np.ndarray) -> np.ndarray:
        num, tmp, G = self._num, self._tmp, self.G
        np.copyto(num, self.b)
        # left / right / bottom / top neighbours
        np.multiply(G[0][:, 1:], T[:, :-1], out=tmp[:, 1:])
        num[:, 1:] += tmp[:, 1:]
        np.multiply(G[2][:, :-1], T[:, 1:], out=tmp[:, :-1])
        num[:, :-1] += tmp[:, :-1]
        np.multiply(G[1][:-1, :], T[1:, :], out=tmp[:-1, :])
        num[:-1, :] += tmp[:-1, :]
        np.multiply(G[3][1:, :], T[:-1, :], out=tmp[1:, :])
        num[1:, :] += tmp[1:, :]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return num / self.D


def _check_finite(T_new: np.ndarray, floor=None):
    bad = ~np.isfinite(T_new)
    if bad.any():
        raise SolverDivergence(np.argwhere(bad)[0], floor)


def fd_sweep(state: ThermalState, fields: OrientedFields, bc: BoundaryConditions,
             Q_x: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """One Jacobi sweep of the update; returns (T_new, max_delta)."""
    if state.T.shape != fields.shape:
        raise ConfigurationError("state and fields shapes differ")
    T = np.where(fields.exterior, bc.T_inf, state.T)
    T_new = _Sweeper(state.T_prev, fields, bc, Q_x)(T)
    _check_finite(T_new)
    return T_new, float(np.abs(T_new - T).max())


def fd_step(state: ThermalState, fields: OrientedFields, bc: BoundaryConditions,
            Q_x: np.ndarray | None = None, epsilon: float = DEFAULT_EPSILON,
            max_sweeps: int = DEFAULT_MAX_SWEEPS, floor: int | None = None) -> ThermalState:
    """Sweep to convergence and commit one timestep."""
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    if state.T.shape != fields.shape:
        raise ConfigurationError("state and fields shapes differ")
    sweep = _Sweeper(state.T_prev, fields, bc, Q_x)
    T = np.where(fields.exterior, bc.T_inf, state.T)
    delta = np.inf
    for n in range(1, max_sweeps + 1):
        T_new = sweep(T)
        delta = float(np.abs(T_new - T).max())
        if not np.isfinite(delta):
            _check_finite(T_new, floor)
        T = T_new
        if delta <= epsilon:
            return ThermalState(T, T.copy(), state.t + bc.dt, n, delta)
    raise ConvergenceFailure(delta, max_sweeps)


def energy_audit(fields: OrientedFields, T_before: np.ndarray, T_after: np.ndarray,
                 Q_x: np.ndarray | None, T_inf: float, dt: float) -> tuple[float, float]:
    """(energy stored, energy supplied) over one step, in Joules.

    Stored is the change of internal energy; supplied is the diffuser energy
    plus convective exchange through exterior faces evaluated at the new
    temperatures.
    """
    inside = ~fields.exterior
    stored = float(np.sum((fields.heat_capacity * (T_after - T_before))[inside]))
    flux = sum(fields.HA[d - 1] * (T_inf - T_after) for d in DIRECTIONS)
    q = 0.0 if Q_x is None else float(np.sum(np.asarray(Q_x)[inside]))
    return stored, q + dt * float(np.sum(flux[inside]))


class AirShuffler:
    """Random exchange of air between CVs of the same zone.

    Candidates for a swap are cells of the same zone within Chebyshev
    distance ``radius``; partners are drawn uniformly among them by
    rejection from the zone's bounding box clipped to the window.
    """

    def __init__(self, labels: np.ndarray):
        self.labels = np.asarray(labels)
        self.cells = np.flatnonzero(self.labels.ravel() >= 0)
        self.zone = self.labels.ravel()[self.cells]
        nz = int(self.labels.max()) + 1 if self.cells.size else 0
        boxes = ndimage.find_objects(self.labels + 1, max_label=nz)
        self.box = np.zeros((max(nz, 1), 4), dtype=np.int64)
        for z, sl in enumerate(boxes):
            if sl is not None:
                self.box[z] = (sl[0].start, sl[0].stop - 1, sl[1].start, sl[1].stop - 1)

    def pairs(self, swap_prob: float, radius: int, rng: np.random.Generator):
        if self.cells.size == 0 or swap_prob <= 0 or radius <= 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        chosen = rng.random(self.cells.size) < swap_prob
        src = self.cells[chosen]
        zone = self.zone[chosen]
        w = self.labels.shape[1]
        r, c = np.divmod(src, w)
        b = self.box[zone]
        r0 = np.maximum(r - radius, b[:, 0])
        r1 = np.minimum(r + radius, b[:, 1])
        c0 = np.maximum(c - radius, b[:, 2])
        c1 = np.minimum(c + radius, b[:, 3])
        dst = np.full(src.size, -1, dtype=np.int64)
        pending = np.arange(src.size)
        flat = self.labels.ravel()
        while pending.size:
            rr = rng.integers(r0[pending], r1[pending] + 1)
            cc = rng.integers(c0[pending], c1[pending] + 1)
            cand = rr * w + cc
            ok = flat[cand] == zone[pending]
            dst[pending[ok]] = cand[ok]
            pending = pending[~ok]
        return src, dst

    def __call__(self, T: np.ndarray, swap_prob: float, radius: int,
                 rng: np.random.Generator) -> np.ndarray:
        src, dst = self.pairs(swap_prob, radius, rng)
        out = T.copy()
        flat = out.ravel()
        for i, j in zip(src.tolist(), dst.tolist()):
            flat[i], flat[j] = flat[j], flat[i]
        return out


def air_shuffle(state: ThermalState, zone_labels: np.ndarray, swap_prob: float,
                swap_radius: float, rng: np.random.Generator) -> ThermalState:
    if not 0 <= swap_prob <= 1:
        raise ConfigurationError("swap_prob must lie in [0, 1]")
    if swap_radius < 0:
        raise ConfigurationError("swap_radius must be >= 0")
    T = AirShuffler(zone_labels)(state.T, swap_prob, int(round(swap_radius)), rng)
    return replace(state, T=T)


def apply_diffuser_energy(q_per_device: dict[str, float], layout: DeviceLayout,
                          shapes: list[tuple[int, int]]) -> list[np.ndarray]:
    """Spread each device's energy (J per step) equally over its diffuser cells."""
    out = [np.zeros(s) for s in shapes]
    for dev_id, q in q_per_device.items():
        dev = layout[dev_id]
        if not dev.diffuser_cells:
            if q != 0:
                raise ConfigurationError(f"device {dev_id} has energy {q} J but no diffuser cells")
            continue
        share = q / len(dev.diffuser_cells)
        rows, cols = np.asarray(dev.diffuser_cells).T
        np.add.at(out[dev.floor], (rows, cols), share)
    return out


def write_snapshot_csv(T: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in T:
            writer.writerow([f"{v:.6f}" for v in row])


def read_snapshot_csv(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=2)
