"""Static spatial description of a building floor.

A floor is a 2D lattice of control volumes (CVs). Row 0 is the top of the
plan and column 0 its left edge. Faces are numbered left=1, bottom=2,
right=3, top=4; every oriented array in this module is stacked in that
order along axis 0 (index ``d - 1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import IntEnum

import numpy as np

LEFT, BOTTOM, RIGHT, TOP = 1, 2, 3, 4
DIRECTIONS = (LEFT, BOTTOM, RIGHT, TOP)
OPPOSITE = {LEFT: RIGHT, RIGHT: LEFT, BOTTOM: TOP, TOP: BOTTOM}
# (row, col) offset of the neighbour across each face
OFFSETS = {LEFT: (0, -1), BOTTOM: (1, 0), RIGHT: (0, 1), TOP: (-1, 0)}
SIDE_NAMES = {LEFT: "left", BOTTOM: "bottom", RIGHT: "right", TOP: "top"}
# bit per face in CVClassification.exterior_sides
SIDE_BITS = {LEFT: 1, BOTTOM: 2, RIGHT: 4, TOP: 8}

AIR_CONDUCTIVITY = 0.026
AIR_DENSITY = 1.2
AIR_HEAT_CAPACITY = 1006.0


class GridError(ValueError):
    """Raised for lattices or parameters that violate the grid invariants."""


class CellClass(IntEnum):
    EXTERIOR_AIR = 0
    INTERIOR_AIR = 1
    INTERIOR_WALL = 2
    EXTERIOR_WALL = 3


class CVKind(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    EDGE = 2
    CORNER = 3
    # boundary CVs with exterior on opposite faces, or on three or four faces
    BOUNDARY_OTHER = 4


def neighbor(a: np.ndarray, d: int, fill=0) -> np.ndarray:
    """Value of the neighbour across face ``d`` for every cell."""
    out = np.full_like(a, fill)
    dr, dc = OFFSETS[d]
    h, w = a.shape
    out[max(-dr, 0):h - max(dr, 0), max(-dc, 0):w - max(dc, 0)] = \
        a[max(dr, 0):h - max(-dr, 0), max(dc, 0):w - max(-dc, 0)]
    return out


@dataclass(frozen=True)
class FloorplanGrid:
    cells: np.ndarray
    cv_size: float
    floor_height: float

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise GridError("floorplan must be a nonempty 2D matrix")
        if not np.isin(cells, [c.value for c in CellClass]).all():
            raise GridError("floorplan contains unknown cell classes")
        if self.cv_size <= 0 or self.floor_height <= 0:
            raise GridError("cv_size and floor_height must be positive")
        border = np.concatenate([cells[0], cells[-1], cells[:, 0], cells[:, -1]])
        if (border != CellClass.EXTERIOR_AIR).any():
            raise GridError("all border cells must be ExteriorAir")
        solid = cells != CellClass.EXTERIOR_AIR
        has_inside_nbr = np.zeros_like(solid)
        for d in DIRECTIONS:
            has_inside_nbr |= neighbor(solid, d, False)
        lonely = (cells == CellClass.INTERIOR_AIR) & ~has_inside_nbr
        if lonely.any():
            r, c = np.argwhere(lonely)[0]
            raise GridError(f"InteriorAir cell ({r}, {c}) has no non-exterior neighbour")
        cells = cells.astype(np.int8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def exterior(self) -> np.ndarray:
        return self.cells == CellClass.EXTERIOR_AIR

    @classmethod
    def from_matrix(cls, matrix, cv_size: float, floor_height: float) -> "FloorplanGrid":
        return cls(np.asarray(matrix, dtype=np.int8), float(cv_size), float(floor_height))


@dataclass(frozen=True)
class CVClassification:
    kind: np.ndarray            # CVKind per cell
    exterior_sides: np.ndarray  # bitmask of faces touching ExteriorAir

    def label(self, r: int, c: int) -> str:
        kind = CVKind(int(self.kind[r, c]))
        if kind in (CVKind.EXTERIOR, CVKind.INTERIOR):
            return kind.name.lower()
        sides = [SIDE_NAMES[d] for d in (TOP, BOTTOM, LEFT, RIGHT)
                 if self.exterior_sides[r, c] & SIDE_BITS[d]]
        if kind == CVKind.EDGE:
            return f"edge-{sides[0]}"
        if kind == CVKind.CORNER:
            return "corner-" + "-".join(sides)
        return "boundary-" + "-".join(sides)

    @property
    def boundary(self) -> np.ndarray:
        return self.kind >= CVKind.EDGE


def classify_cvs(grid: FloorplanGrid) -> CVClassification:
    ext = grid.exterior
    sides = np.zeros(ext.shape, dtype=np.int8)
    for d in DIRECTIONS:
        # off-lattice neighbours count as exterior
        sides |= np.where(neighbor(ext, d, True), SIDE_BITS[d], 0).astype(np.int8)
    sides[ext] = 0
    n_sides = sum(((sides & SIDE_BITS[d]) > 0).astype(np.int8) for d in DIRECTIONS)
    horiz = (sides & (SIDE_BITS[LEFT] | SIDE_BITS[RIGHT])) > 0
    vert = (sides & (SIDE_BITS[TOP] | SIDE_BITS[BOTTOM])) > 0
    kind = np.full(ext.shape, CVKind.INTERIOR, dtype=np.int8)
    kind[n_sides == 1] = CVKind.EDGE
    kind[n_sides >= 2] = CVKind.BOUNDARY_OTHER
    kind[(n_sides == 2) & horiz & vert] = CVKind.CORNER
    kind[ext] = CVKind.EXTERIOR
    return CVClassification(kind, sides)


TUNABLE_PARAMS = (
    "convection_coefficient",
    "exterior_cv_conductivity",
    "exterior_cv_density",
    "exterior_cv_heat_capacity",
    "interior_wall_cv_conductivity",
    "interior_wall_cv_density",
    "interior_wall_cv_heat_capacity",
    "swap_prob",
    "swap_radius",
)


@dataclass(frozen=True)
class MaterialParams:
    """Thermal constants bound to cell classes.

    Defaults are calibrated values for a two-storey office building.
    Air properties are fixed physical constants and never tuned.
    """

    convection_coefficient: float = 357.0
    exterior_cv_conductivity: float = 0.83
    exterior_cv_density: float = 2359.0
    exterior_cv_heat_capacity: float = 2499.0
    interior_wall_cv_conductivity: float = 5.0
    interior_wall_cv_density: float = 1500.0
    interior_wall_cv_heat_capacity: float = 1499.0
    swap_prob: float = 0.003
    swap_radius: float = 50.0
    air_conductivity: float = AIR_CONDUCTIVITY
    air_density: float = AIR_DENSITY
    air_heat_capacity: float = AIR_HEAT_CAPACITY

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise GridError(f"material parameter {f.name}={v} must be finite and >= 0")
        if self.swap_prob > 1:
            raise GridError("swap_prob must lie in [0, 1]")

    @property
    def radius_cells(self) -> int:
        return int(round(self.swap_radius))

    def tunables(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in TUNABLE_PARAMS}

    def replace(self, **changes) -> "MaterialParams":
        return MaterialParams(**{**self.as_dict(), **changes})

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    def per_class(self) -> dict[CellClass, tuple[float, float, float]]:
        """(conductivity, density, heat capacity) per non-exterior class."""
        return {
            CellClass.INTERIOR_AIR: (self.air_conductivity, self.air_density, self.air_heat_capacity),
            CellClass.INTERIOR_WALL: (self.interior_wall_cv_conductivity,
                                      self.interior_wall_cv_density,
                                      self.interior_wall_cv_heat_capacity),
            CellClass.EXTERIOR_WALL: (self.exterior_cv_conductivity,
                                      self.exterior_cv_density,
                                      self.exterior_cv_heat_capacity),
        }


@dataclass(frozen=True)
class OrientedFields:
    """Per-cell tensors consumed by the finite-difference sweep.

    ``K``, ``H`` follow the oriented definitions (shape ``(4, h, w)``); ``U``
    and ``V`` are CV widths and heights, ``C`` heat capacity and ``P``
    density. ``G`` holds the conductance of each face in W/K, symmetric
    between the two cells sharing it, and ``HA`` the convective conductance
    of exterior faces. ``volume`` is u*v*z in m^3.
    """

    K: np.ndarray
    H: np.ndarray
    U: np.ndarray
    V: np.ndarray
    C: np.ndarray
    P: np.ndarray
    G: np.ndarray
    HA: np.ndarray
    volume: np.ndarray
    exterior: np.ndarray
    z: float
    cv_size: float

    def __getattr__(self, name):
        # K1..K4 / H1..H4 / G1..G4 accessors
        if len(name) == 2 and name[0] in "KHG" and name[1] in "1234":
            return object.__getattribute__(self, name[0])[int(name[1]) - 1]
        raise AttributeError(name)

    @property
    def heat_capacity(self) -> np.ndarray:
        """c * rho * u * v * z per cell, J/K."""
        return self.C * self.P * self.volume

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape


def build_oriented_fields(grid: FloorplanGrid, classification: CVClassification,
                          params: MaterialParams) -> OrientedFields:
    if classification.kind.shape != grid.cells.shape:
        raise GridError("classification does not match grid shape")
    cells = grid.cells
    ext = grid.exterior
    dx, z = grid.cv_size, grid.floor_height

    k = np.zeros(cells.shape)
    rho = np.zeros(cells.shape)
    c = np.zeros(cells.shape)
    for cls, (kk, rr, cc) in params.per_class().items():
        m = cells == cls
        k[m], rho[m], c[m] = kk, rr, cc

    sides = classification.exterior_sides
    vert_ext = (sides & (SIDE_BITS[TOP] | SIDE_BITS[BOTTOM])) > 0
    horiz_ext = (sides & (SIDE_BITS[LEFT] | SIDE_BITS[RIGHT])) > 0
    U = np.where(vert_ext, dx / 2, dx)
    V = np.where(horiz_ext, dx / 2, dx)

    K = np.zeros((4,) + cells.shape)
    H = np.zeros((4,) + cells.shape)
    g_own = np.zeros((4,) + cells.shape)
    HA = np.zeros((4,) + cells.shape)
    boundary = classification.boundary
    for d in DIRECTIONS:
        nbr_ext = neighbor(ext, d, True)
        both_inside = ~ext & ~nbr_ext
        K[d - 1] = np.where(both_inside, k, 0.0)
        H[d - 1] = np.where(boundary & nbr_ext, params.convection_coefficient, 0.0)
        if d in (LEFT, RIGHT):
            g_own[d - 1] = K[d - 1] * V * z / U
            HA[d - 1] = H[d - 1] * V * z
        else:
            g_own[d - 1] = K[d - 1] * U * z / V
            HA[d - 1] = H[d - 1] * U * z

    # series combination of the two half-conductances across each face keeps
    # the exchange antisymmetric; equal cells recover k*A/L exactly
    G = np.zeros_like(g_own)
    for d in DIRECTIONS:
        a = g_own[d - 1]
        b = neighbor(g_own[OPPOSITE[d] - 1], d, 0.0)
        s = a + b
        G[d - 1] = np.divide(2 * a * b, s, out=np.zeros_like(s), where=s > 0)

    volume = np.where(ext, 0.0, U * V * z)
    arrays = [K, H, U, V, c, rho, G, HA, volume, ext.copy()]
    for a in arrays:
        a.setflags(write=False)
    return OrientedFields(*arrays, z=z, cv_size=dx)


@dataclass
class ZoneMap:
    """Zone membership of InteriorAir cells across all floors.

    ``labels[f]`` holds the zone index (position in ``zone_ids``) of every
    cell on floor ``f``, -1 for cells outside any zone.
    """

    zone_ids: list[str]
    labels: list[np.ndarray]
    devices: dict[str, list[str]] = field(default_factory=dict)
    cv_size: list[float] = field(default_factory=list)

    def cells(self, zone_id: str) -> tuple[int, np.ndarray]:
        """(floor, array of (row, col)) for a zone."""
        zi = self.zone_ids.index(zone_id)
        for f, lab in enumerate(self.labels):
            idx = np.argwhere(lab == zi)
            if len(idx):
                return f, idx
        return 0, np.zeros((0, 2), dtype=int)

    def floor_of(self) -> np.ndarray:
        out = np.zeros(len(self.zone_ids), dtype=int)
        for f, lab in enumerate(self.labels):
            present = np.unique(lab[lab >= 0])
            out[present] = f
        return out

    def area_m2(self) -> np.ndarray:
        counts = np.zeros(len(self.zone_ids))
        for f, lab in enumerate(self.labels):
            dx = self.cv_size[f] if self.cv_size else 1.0
            counts += np.bincount(lab[lab >= 0], minlength=len(self.zone_ids)) * dx * dx
        return counts


DEVICE_TYPES = ("VAV", "AHU", "Boiler", "Chiller", "Meter")


@dataclass
class Device:
    device_id: str
    device_type: str
    floor: int = 0
    diffuser_cells: list[tuple[int, int]] = field(default_factory=list)
    zone_id: str | None = None
    observable_fields: list[str] = field(default_factory=list)
    action_fields: list[str] = field(default_factory=list)
    ratings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.device_type not in DEVICE_TYPES:
            raise GridError(f"unknown device type {self.device_type!r}")
        self.diffuser_cells = [tuple(int(v) for v in rc) for rc in self.diffuser_cells]


class DeviceLayout(dict):
    """device_id -> Device, checked against the floor lattices."""

    def validate(self, grids: list[FloorplanGrid]) -> None:
        seen: set[str] = set()
        for dev in self.values():
            for name in dev.action_fields:
                full = f"{dev.device_id}/{name}"
                if full in seen:
                    raise GridError(f"duplicate action field {full}")
                seen.add(full)
            if not dev.diffuser_cells:
                continue
            if not 0 <= dev.floor < len(grids):
                raise GridError(f"device {dev.device_id} on missing floor {dev.floor}")
            cells = grids[dev.floor].cells
            for r, c in dev.diffuser_cells:
                if not (0 <= r < cells.shape[0] and 0 <= c < cells.shape[1]) \
                        or cells[r, c] != CellClass.INTERIOR_AIR:
                    raise GridError(f"diffuser cell ({r}, {c}) of {dev.device_id} is not InteriorAir")
