"""Synthetic buildings and floorplan rasters for tests, demos and benchmarks."""

from __future__ import annotations

import numpy as np

from .building import BuildingConfig, SimulationConfig, WeatherConfig, Zone, make_device
from .grid import CellClass, DeviceLayout, FloorplanGrid, MaterialParams
from .hvac import C_AIR, AHUConfig, BoilerConfig, ChillerConfig, VAVConfig

EA, IA, IW, EW = (int(c) for c in CellClass)

# VAV sizing per m^2 of conditioned floor area
AIRFLOW_PER_M2 = 0.0055     # kg/s
MIN_AIRFLOW_SHARE = 0.3


def office_grid(room_rows: int, room_cols: int, room_h: int, room_w: int,
                exterior_wall: int = 2, interior_wall: int = 1) -> tuple[np.ndarray, list[np.ndarray]]:
    """Cell matrix of a rectangular office block and a boolean mask per room.

    One ExteriorAir ring surrounds ``exterior_wall`` thick outer walls; rooms
    are separated by ``interior_wall`` thick partitions.
    """
    h = 2 + 2 * exterior_wall + room_rows * room_h + (room_rows - 1) * interior_wall
    w = 2 + 2 * exterior_wall + room_cols * room_w + (room_cols - 1) * interior_wall
    cells = np.full((h, w), EA, dtype=np.int8)
    cells[1:-1, 1:-1] = EW
    cells[1 + exterior_wall:h - 1 - exterior_wall, 1 + exterior_wall:w - 1 - exterior_wall] = IW
    rooms = []
    for i in range(room_rows):
        for j in range(room_cols):
            r0 = 1 + exterior_wall + i * (room_h + interior_wall)
            c0 = 1 + exterior_wall + j * (room_w + interior_wall)
            cells[r0:r0 + room_h, c0:c0 + room_w] = IA
            m = np.zeros((h, w), dtype=bool)
            m[r0:r0 + room_h, c0:c0 + room_w] = True
            rooms.append(m)
    return cells, rooms


def vav_config(area_m2: float) -> VAVConfig:
    m_max = AIRFLOW_PER_M2 * area_m2
    return VAVConfig(min_airflow=MIN_AIRFLOW_SHARE * m_max, max_airflow=m_max,
                     reheat_capacity=m_max * C_AIR * 20.0, discharge_cap=35.0,
                     proportional_band=2.0)


def plant_configs(vavs: dict[str, VAVConfig]) -> dict[str, object]:
    rated = max(sum(v.max_airflow for v in vavs.values()), 1e-3)
    reheat = sum(v.reheat_capacity for v in vavs.values())
    return {
        "ahu": AHUConfig(rated_fan_power=1500.0 * rated, rated_airflow=rated,
                         recirculation_fraction=0.7),
        "boiler": BoilerConfig(max_gas_power=(reheat + rated * C_AIR * 15.0) / 0.85,
                               efficiency=0.85, rated_pump_power=200.0 * rated + 50.0,
                               standby_fraction=0.1),
        "chiller": ChillerConfig(max_power=rated * C_AIR * 15.0 / 3.5, cop=3.5),
    }


def assemble_building(name: str, grids: list[FloorplanGrid], rooms: list[list[np.ndarray]],
                      params: MaterialParams | None = None, diffusers_per_room: int = 1,
                      weather: WeatherConfig | None = None,
                      simulation: SimulationConfig | None = None, **kwargs) -> BuildingConfig:
    """One zone and one VAV per room mask, plus AHU, boiler, chiller and meter."""
    layout = DeviceLayout()
    zones, vav_cfgs = [], {}
    for f, (grid, masks) in enumerate(zip(grids, rooms)):
        for i, mask in enumerate(masks):
            zid = f"zone_{f}_{i}"
            vid = f"vav_{f}_{i}"
            cells = [tuple(int(v) for v in rc) for rc in np.argwhere(mask)]
            centre = np.mean(cells, axis=0)
            order = np.argsort(((np.asarray(cells) - centre) ** 2).sum(axis=1), kind="stable")
            diffusers = [cells[k] for k in order[:max(diffusers_per_room, 1)]]
            layout[vid] = make_device(vid, "VAV", f, zid, diffusers)
            zones.append(Zone(zid, f, cells, [vid]))
            vav_cfgs[vid] = vav_config(len(cells) * grid.cv_size ** 2)
    for dev_id, dtype in (("ahu", "AHU"), ("boiler", "Boiler"), ("chiller", "Chiller"),
                          ("meter", "Meter")):
        layout[dev_id] = make_device(dev_id, dtype)
    plant = {**vav_cfgs, **plant_configs(vav_cfgs)}
    return BuildingConfig(name=name, floors=grids, zones=zones, devices=layout,
                          params=params or MaterialParams(), plant=plant,
                          weather=weather or WeatherConfig(),
                          simulation=simulation or SimulationConfig(), **kwargs)


def office_building(room_rows: int = 2, room_cols: int = 2, room_h: int = 6, room_w: int = 8,
                    floors: int = 1, cv_size: float = 1.0, floor_height: float = 3.0,
                    name: str = "office", **kwargs) -> BuildingConfig:
    cells, rooms = office_grid(room_rows, room_cols, room_h, room_w)
    grid = FloorplanGrid(cells, cv_size, floor_height)
    return assemble_building(name, [grid] * floors, [rooms] * floors, **kwargs)


def benchmark_building(cvs_per_floor: int = 50_000, floors: int = 2, cv_size: float = 0.25,
                       **kwargs) -> BuildingConfig:
    """Roughly ``cvs_per_floor`` CVs per floor, 4 x 4 rooms of 20 m^2 or more."""
    side = int(np.sqrt(cvs_per_floor))
    inner = side - 2 - 4 - 3
    room = inner // 4
    cells, rooms = office_grid(4, 4, room, room)
    grid = FloorplanGrid(cells, cv_size, 3.0)
    return assemble_building("benchmark", [grid] * floors, [rooms] * floors,
                             diffusers_per_room=4, **kwargs)


def random_grid(rng: np.random.Generator, h: int, w: int, wall_share: float = 0.3) -> np.ndarray:
    """Random lattice: ExteriorAir ring, outer ExteriorWall band, random interior.

    Any InteriorAir cell left without an inside neighbour is turned to wall.
    """
    cells = np.full((h, w), EA, dtype=np.int8)
    inner = rng.choice([IA, IW, EW], size=(h - 2, w - 2),
                       p=[1 - wall_share, wall_share * 0.7, wall_share * 0.3])
    cells[1:-1, 1:-1] = inner
    # carve a few random exterior air pockets
    for _ in range(int(rng.integers(0, 3))):
        if h > 6 and w > 6:
            r = int(rng.integers(1, h - 3))
            c = int(rng.integers(1, w - 3))
            cells[r:r + 2, c:c + 2] = EA
    solid = cells != EA
    inside_nbr = np.zeros_like(solid)
    inside_nbr[1:, :] |= solid[:-1, :]
    inside_nbr[:-1, :] |= solid[1:, :]
    inside_nbr[:, 1:] |= solid[:, :-1]
    inside_nbr[:, :-1] |= solid[:, 1:]
    cells[(cells == IA) & ~inside_nbr] = IW
    return cells


def synthetic_floorplan(size: int = 200, room_rows: int = 2, room_cols: int = 3,
                        exterior_px: int = 25, interior_px: int = 5, salt: float = 0.01,
                        rng: np.random.Generator | None = None) -> tuple[np.ndarray, int]:
    """Grayscale raster (1.0 = white floor, 0.0 = black wall) with salt noise.

    Returns the image and the number of rooms. Walls are drawn
    ``exterior_px``/``interior_px`` pixels thick; a margin of white pixels
    surrounds the building. Salt noise flips a ``salt`` share of pixels to
    the opposite colour.
    """
    rng = rng or np.random.default_rng(0)
    img = np.ones((size, size))
    m = size // 10
    lo, hi = m, size - m
    img[lo:hi, lo:hi] = 0.0
    inner = (lo + exterior_px, hi - exterior_px)
    span = inner[1] - inner[0]
    img[inner[0]:inner[1], inner[0]:inner[1]] = 1.0
    for k in range(1, room_rows):
        r = inner[0] + k * span // room_rows - interior_px // 2
        img[r:r + interior_px, inner[0]:inner[1]] = 0.0
    for k in range(1, room_cols):
        c = inner[0] + k * span // room_cols - interior_px // 2
        img[inner[0]:inner[1], c:c + interior_px] = 0.0
    flip = rng.random(img.shape) < salt
    img[flip] = 1.0 - img[flip]
    return img, room_rows * room_cols
