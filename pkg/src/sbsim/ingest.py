"""Raster floorplan to FloorplanGrid and DeviceLayout.

Pipeline: binarize -> erase masked regions -> denoise -> downsample to CV
resolution -> mark exterior air -> thin walls -> place devices.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .building import BuildingConfig, Zone, make_device
from .grid import CellClass, DeviceLayout, FloorplanGrid
from .synth import plant_configs, vav_config
from .building import PLANT_CONFIGS, _strict

log = logging.getLogger(__name__)

EA, IA, IW, EW = (int(c) for c in CellClass)
FOUR = ndimage.generate_binary_structure(2, 1)
SQUARE = np.ones((3, 3), dtype=bool)


class IngestError(ValueError):
    pass


def load_image(path) -> np.ndarray:
    """Grayscale image scaled to [0, 1] (1 = white)."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"floorplan image not found: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float) / 255.0


def binarize(img: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where the pixel is darker than ``threshold`` (wall), else 0."""
    if not 0 < threshold <= 1:
        raise IngestError("threshold must lie in (0, 1]")
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise IngestError("floorplan image must be a nonempty 2D array")
    return (img < threshold).astype(np.uint8)


def apply_mask(binary: np.ndarray, rects) -> np.ndarray:
    """Erase (set to floor) rectangles ``(row0, col0, row1, col1)``, end-exclusive."""
    out = binary.copy()
    for r0, c0, r1, c1 in rects:
        out[max(r0, 0):r1, max(c0, 0):c1] = 0
    return out


def denoise(binary: np.ndarray, n_iters: int = 2) -> np.ndarray:
    """``n_iters`` rounds of 3x3 opening (drops dark specks, including ones
    stuck to a wall face) then 3x3 closing (fills light specks inside
    walls). Walls thinner than 3 pixels do not survive."""
    out = binary.astype(bool)
    for _ in range(n_iters):
        out = ndimage.binary_opening(out, SQUARE, border_value=0)
        out = ndimage.binary_closing(out, SQUARE, border_value=0)
    return out.astype(np.uint8)


def downsample(binary: np.ndarray, block: int) -> np.ndarray:
    """Block maximum: a CV is wall if any of its pixels is."""
    if block < 1:
        raise IngestError("block size must be >= 1")
    h, w = binary.shape
    H, W = -(-h // block), -(-w // block)
    pad = np.zeros((H * block, W * block), dtype=np.uint8)
    pad[:h, :w] = binary
    return pad.reshape(H, block, W, block).max(axis=(1, 3))


def mark_exterior(walls: np.ndarray) -> np.ndarray:
    """Cell classes from a wall mask, padded with one ring of ExteriorAir.

    Floor cells 4-connected to the border are ExteriorAir, other floor cells
    InteriorAir; all walls start as InteriorWall.
    """
    w = np.pad(np.asarray(walls, dtype=bool), 1, constant_values=False)
    labels, _ = ndimage.label(~w, FOUR)
    outside = np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    outside = outside[outside > 0]
    cells = np.where(w, IW, IA).astype(np.int8)
    cells[np.isin(labels, outside)] = EA
    return cells


def count_rooms(cells: np.ndarray) -> int:
    return int(ndimage.label(cells == IA, FOUR)[1])


def _thin_once(cells: np.ndarray) -> np.ndarray:
    ext = cells == EA
    wall = (cells == IW) | (cells == EW)
    rooms, n = ndimage.label(cells == IA, FOUR)
    out = cells.copy()
    if not ext.any():
        raise IngestError("floorplan has no exterior air")
    dist = ndimage.distance_transform_cdt(~ext, metric="taxicab")
    band = wall & (dist <= 2)
    out[band] = EW
    inner = wall & ~band
    out[inner] = IW
    if n == 0 or not inner.any():
        return out
    # nearest room for every cell
    _, (ri, ci) = ndimage.distance_transform_edt(rooms == 0, return_indices=True)
    owner = rooms[ri, ci]
    owner[~inner & (rooms == 0)] = 0
    keep = np.zeros_like(inner)
    h, w = cells.shape
    for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
        nb = np.zeros_like(owner)
        src = (slice(max(dr, 0), h + min(dr, 0)), slice(max(dc, 0), w + min(dc, 0)))
        dst = (slice(max(-dr, 0), h + min(-dr, 0)), slice(max(-dc, 0), w + min(-dc, 0)))
        nb[dst] = owner[src]
        nb_inner = np.zeros_like(inner)
        nb_inner[dst] = inner[src]
        differs = (nb > 0) & (nb != owner)
        # against room air the wall cell stays; between two wall cells only
        # the one owned by the higher label stays
        keep |= inner & differs & (~nb_inner | (owner > nb))
    out[inner & ~keep] = IA
    # converted pockets cut off from every room (e.g. wall junctions) stay wall
    air, _ = ndimage.label(out == IA, FOUR)
    has_room = np.unique(air[rooms > 0])
    out[(out == IA) & ~np.isin(air, has_room)] = IW
    return out


def thin_walls(cells: np.ndarray, max_rounds: int = 10) -> np.ndarray:
    """Reduce interior walls to one CV and exterior walls to the two CVs
    nearest ExteriorAir, without merging rooms."""
    cells = np.asarray(cells, dtype=np.int8)
    before = count_rooms(cells)
    cur = cells
    for _ in range(max_rounds):
        nxt = _thin_once(cur)
        if np.array_equal(nxt, cur):
            break
        cur = nxt
    if count_rooms(cur) != before:
        raise IngestError(f"wall thinning changed the room count ({before} -> {count_rooms(cur)})")
    return cur


def pixel_to_cell(anchor, block: int) -> tuple[int, int]:
    """Image (x, y) pixel to padded (row, col) cell."""
    x, y = anchor
    return int(y) // block + 1, int(x) // block + 1


def place_devices(cells: np.ndarray, devices: list[dict], block: int,
                  floor: int = 0) -> tuple[DeviceLayout, list[Zone]]:
    """Devices from records ``{device_id, device_type, anchor: [x, y]}``.

    VAVs anchor a zone: the room (InteriorAir component) containing the
    anchor. A VAV anchored on a wall or outside is an error. Rooms without
    a VAV are left unzoned.
    """
    rooms, _ = ndimage.label(cells == IA, FOUR)
    layout = DeviceLayout()
    zones: dict[int, Zone] = {}
    for rec in devices:
        dev_id, dtype = rec["device_id"], rec["device_type"]
        if dev_id in layout:
            raise IngestError(f"duplicate device id {dev_id}")
        if dtype != "VAV":
            layout[dev_id] = make_device(dev_id, dtype, floor)
            continue
        if "anchor" not in rec:
            raise IngestError(f"VAV {dev_id} needs an anchor")
        r, c = pixel_to_cell(rec["anchor"], block)
        if not (0 <= r < cells.shape[0] and 0 <= c < cells.shape[1]) or rooms[r, c] == 0:
            raise IngestError(f"anchor of {dev_id} at {rec['anchor']} is not inside a room")
        room = int(rooms[r, c])
        if room not in zones:
            cells_rc = [tuple(int(v) for v in rc) for rc in np.argwhere(rooms == room)]
            zones[room] = Zone(rec.get("zone_id", f"zone_{floor}_{len(zones)}"), floor, cells_rc, [])
        zones[room].devices.append(dev_id)
        layout[dev_id] = make_device(dev_id, "VAV", floor, zones[room].zone_id, [(r, c)])
    return layout, list(zones.values())


def build_from_image(image, devices_doc: dict, cv_size: float = 0.5, scale: float = 0.05,
                     floor_height: float = 3.0, threshold: float = 0.5, n_iters: int = 2,
                     masks=(), name: str = "ingested") -> BuildingConfig:
    """Full pipeline for a one-floor plan.

    ``scale`` is metres per pixel; ``cv_size / scale`` must be a whole
    number of pixels. Device records may carry a plant ``config``; missing
    configs are sized from zone areas.
    """
    img = load_image(image) if isinstance(image, (str, Path)) else np.asarray(image, dtype=float)
    ratio = cv_size / scale
    block = int(round(ratio))
    if block < 1 or abs(ratio - block) > 1e-6:
        raise IngestError(f"cv_size / scale = {ratio:g} is not a whole number of pixels")
    binary = denoise(apply_mask(binarize(img, threshold), masks), n_iters)
    cells = mark_exterior(downsample(binary, block))
    rooms = count_rooms(cells)
    cells = thin_walls(cells)
    log.info("ingest: %dx%d CVs, %d rooms", cells.shape[0], cells.shape[1], rooms)
    grid = FloorplanGrid(cells, cv_size, floor_height)
    recs = devices_doc.get("devices", [])
    layout, zones = place_devices(cells, recs, block)
    configs = {r["device_id"]: r["config"] for r in recs if "config" in r}
    vavs = {}
    for z in zones:
        for d in z.devices:
            vavs[d] = vav_config(len(z.cells) * cv_size ** 2 / len(z.devices))
    sized = {**vavs, **plant_configs(vavs)}
    plant = {}
    for dev in layout.values():
        if dev.device_type not in PLANT_CONFIGS:
            continue
        if dev.device_id in configs:
            plant[dev.device_id] = _strict(PLANT_CONFIGS[dev.device_type], configs[dev.device_id],
                                           f"devices.{dev.device_id}.config")
        elif dev.device_type == "VAV":
            plant[dev.device_id] = sized[dev.device_id]
        else:
            plant[dev.device_id] = sized[dev.device_type.lower()]
    return BuildingConfig(name=name, floors=[grid], zones=zones, devices=layout, plant=plant)


def load_devices(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"device file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc})") from exc
