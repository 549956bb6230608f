"""Heatmap images of temperature fields and field differences."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .episode import EpisodeArchive, EpisodeFormatError
from .grid import CellClass

BLUE = np.array([0.0, 0.0, 255.0])
WHITE = np.array([255.0, 255.0, 255.0])
RED = np.array([255.0, 0.0, 0.0])
WALL_GRAY = (64, 64, 64)


def diverging(values, center: float = 0.0, half_range: float | None = None) -> np.ndarray:
    """Blue-white-red RGB (uint8) with ``center`` mapped exactly to white.

    ``half_range`` defaults to the largest distance from ``center``.
    """
    v = np.asarray(values, dtype=float) - center
    if half_range is None:
        finite = np.abs(v[np.isfinite(v)])
        half_range = float(finite.max()) if finite.size else 0.0
    if half_range <= 0:
        half_range = 1.0
    s = np.clip(v / half_range, -1.0, 1.0)[..., None]
    rgb = np.where(s < 0, WHITE + (-s) * (BLUE - WHITE), WHITE + s * (RED - WHITE))
    return np.round(rgb).astype(np.uint8)


def render_heatmap(field: np.ndarray, cells: np.ndarray, out, mask: np.ndarray | None = None,
                   diff: bool = True, transparent: bool = False, pixels_per_cv: int = 1,
                   half_range: float | None = None) -> dict:
    """Write ``field`` as an image plus a ``.txt`` sidecar with min/max.

    Differences are centred at 0. Absolute fields are centred at the
    midpoint of their range. Cells outside ``mask`` (default: InteriorAir)
    are drawn as walls (dark gray) or exterior (black, or transparent).
    """
    field = np.asarray(field, dtype=float)
    cells = np.asarray(cells)
    if field.shape != cells.shape:
        raise ValueError("field and cells shapes differ")
    shown = (cells == CellClass.INTERIOR_AIR) if mask is None else np.asarray(mask, bool)
    shown = shown & np.isfinite(field)
    vals = field[shown]
    lo = float(vals.min()) if vals.size else 0.0
    hi = float(vals.max()) if vals.size else 0.0
    center = 0.0 if diff else 0.5 * (lo + hi)
    rgb = diverging(np.where(shown, field, center), center, half_range or
                    (max(abs(lo - center), abs(hi - center)) if vals.size else None))
    alpha = np.full(cells.shape, 255, dtype=np.uint8)
    rgb[~shown & (cells != CellClass.EXTERIOR_AIR)] = WALL_GRAY
    ext = cells == CellClass.EXTERIOR_AIR
    rgb[ext] = 0
    if transparent:
        alpha[ext] = 0
    img = np.concatenate([rgb, alpha[..., None]], axis=-1) if transparent else rgb
    if pixels_per_cv > 1:
        img = img.repeat(pixels_per_cv, axis=0).repeat(pixels_per_cv, axis=1)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, "RGBA" if transparent else "RGB").save(out)
    stats = {"min": lo, "max": hi, "center": center}
    out.with_suffix(".txt").write_text(
        f"min {lo!r}\nmax {hi!r}\ncenter {center!r}\n")
    return stats


def zone_field(archive: EpisodeArchive, t: int, floor: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(temperature field, cells) of one floor at the end of step ``t``,
    filled from the per-zone temperatures."""
    meta = archive.metadata
    if not 0 <= t < archive.n_steps:
        raise EpisodeFormatError(f"step {t} outside episode of {archive.n_steps} steps")
    try:
        cells = np.asarray(meta["floorplans"][floor])
    except (KeyError, IndexError):
        raise EpisodeFormatError(f"episode has no floorplan for floor {floor}") from None
    field = np.full(cells.shape, np.nan)
    row = archive.reward_info.row(t)
    for zone, zcells in zip(meta["zones"], meta["zone_cells"]):
        if zone["floor"] != floor or not zcells:
            continue
        r, c = np.asarray(zcells).T
        field[r, c] = row[f"{zone['zone_id']}/temperature"]
    return field, cells
