"""Terrain kernels: elevation lookup, Horn slope/aspect, relief statistics,
and the deterministic susceptibility masks behind the reasoning tasks.

Binary masks are plain (height, width) boolean arrays with the source dims.
All gradient math runs in float64; border cells use replicated edge values
so every cell stays queryable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NodataError, OutOfBoundsError
from .raster import RasterGrid
from .regions import label_components

FLAT_EPS = 1e-6  # gradient magnitude (m/m) below which terrain counts as flat


@dataclass(frozen=True)
class SlopeAspect:
    slope_deg: float          # [0, 90)
    aspect_deg: float         # [0, 360) clockwise from north, downslope
    flat: bool


def _horn_gradients(a, b, c, d, f, g, h, i, cell_size):
    """Weighted central differences over the 3x3 window, in m per m.

    gx grows eastward (+x), gy grows southward (+y, i.e. down the rows).
    """
    gx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cell_size)
    gy = ((g + 2.0 * h + i) - (a + 2.0 * b + c)) / (8.0 * cell_size)
    return gx, gy


def _window_arrays(z: np.ndarray):
    p = np.pad(z, 1, mode="edge")
    return (p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:],
            p[1:-1, :-2], p[1:-1, 2:],
            p[2:, :-2], p[2:, 1:-1], p[2:, 2:])


def _slope_aspect_arrays(dem: RasterGrid):
    """Full-grid slope (deg), aspect (deg), flat flags and window validity."""
    z = dem.values.astype(np.float64)
    a, b, c, d, f, g, h, i = _window_arrays(z)
    gx, gy = _horn_gradients(a, b, c, d, f, g, h, i, dem.cell_size)
    mag = np.hypot(gx, gy)
    slope = np.degrees(np.arctan(mag))
    # Downslope compass direction: east component -gx, north component +gy.
    aspect = np.degrees(np.arctan2(-gx, gy)) % 360.0
    flat = mag < FLAT_EPS
    slope = np.where(flat, 0.0, slope)
    aspect = np.where(flat, 0.0, aspect)

    v = dem.valid_mask
    pv = np.pad(v, 1, mode="edge")
    window_ok = np.ones_like(v)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            window_ok &= pv[dy:dy + v.shape[0], dx:dx + v.shape[1]]
    return slope, aspect, flat, window_ok


def valid_slope_windows(dem: RasterGrid) -> np.ndarray:
    """Cells whose (edge-replicated) 3x3 gradient window is nodata-free."""
    _, _, _, window_ok = _slope_aspect_arrays(dem)
    return window_ok


def slope_degrees(dem: RasterGrid) -> tuple[np.ndarray, np.ndarray]:
    """Whole-grid slope in degrees plus the window-validity mask."""
    slope, _, _, window_ok = _slope_aspect_arrays(dem)
    return slope, window_ok


def slope_aspect_grids(dem: RasterGrid):
    """Whole-grid (slope_deg, aspect_deg, flat, window_ok) arrays."""
    return _slope_aspect_arrays(dem)


def elevation_at(dem: RasterGrid, x: int, y: int) -> float:
    if not dem.in_bounds(x, y):
        raise OutOfBoundsError(f"({x}, {y}) outside {dem.width}x{dem.height}")
    if dem.is_nodata(x, y):
        raise NodataError(f"nodata at coordinate ({x}, {y})")
    return dem.value_at(x, y)


def slope_aspect(dem: RasterGrid, x: int, y: int) -> SlopeAspect:
    """Horn 3x3 slope/aspect at one cell; borders replicate edge values."""
    if not dem.in_bounds(x, y):
        raise OutOfBoundsError(f"({x}, {y}) outside {dem.width}x{dem.height}")
    ys = np.clip(np.array([y - 1, y, y + 1]), 0, dem.height - 1)
    xs = np.clip(np.array([x - 1, x, x + 1]), 0, dem.width - 1)
    win = dem.values[np.ix_(ys, xs)].astype(np.float64)
    if np.any(win == float(np.float32(dem.nodata))):
        raise NodataError(f"3x3 window at ({x}, {y}) contains nodata")
    gx, gy = _horn_gradients(win[0, 0], win[0, 1], win[0, 2],
                             win[1, 0], win[1, 2],
                             win[2, 0], win[2, 1], win[2, 2], dem.cell_size)
    mag = float(np.hypot(gx, gy))
    if mag < FLAT_EPS:
        return SlopeAspect(slope_deg=0.0, aspect_deg=0.0, flat=True)
    slope = float(np.degrees(np.arctan(mag)))
    aspect = float(np.degrees(np.arctan2(-gx, gy)) % 360.0)
    return SlopeAspect(slope_deg=slope, aspect_deg=aspect, flat=False)


def region_mean_heights(height: RasterGrid, categories: RasterGrid,
                        category_id: int, connectivity: int = 8):
    """Label the category and return (labels, count, mean height per label).

    Means are over valid height cells; labels with no valid cell get NaN.
    """
    labels, count = label_components(categories, category_id, connectivity)
    means = np.full(count + 1, np.nan)
    if count:
        ok = height.valid_mask & (labels > 0)
        ls = labels[ok]
        vals = height.values[ok].astype(np.float64)
        cnt = np.bincount(ls, minlength=count + 1)
        tot = np.bincount(ls, weights=vals, minlength=count + 1)
        nz = cnt > 0
        means[nz] = tot[nz] / cnt[nz]
    return labels, count, means


def threshold_mask(height: RasterGrid, categories: RasterGrid, category_id: int,
                   thr_m: float, connectivity: int = 8) -> np.ndarray:
    """Cells of the category whose region mean height strictly exceeds thr_m."""
    labels, count, means = region_mean_heights(height, categories, category_id,
                                               connectivity)
    mask = np.zeros(labels.shape, dtype=bool)
    for rid in range(1, count + 1):
        if not np.isnan(means[rid]) and means[rid] > thr_m:
            mask |= labels == rid
    return mask


def relief_stats(dem: RasterGrid) -> dict:
    """Scene extrema plus mean slope over interior cells with valid windows."""
    valid = dem.valid_mask
    if not valid.any():
        raise NodataError("relief_stats on an all-nodata grid")
    vals = dem.values[valid].astype(np.float64)
    slope, _, _, window_ok = _slope_aspect_arrays(dem)
    interior = np.zeros_like(valid)
    if dem.height > 2 and dem.width > 2:
        interior[1:-1, 1:-1] = True
    usable = interior & window_ok
    mean_slope = float(slope[usable].mean()) if usable.any() else 0.0
    vmin, vmax = float(vals.min()), float(vals.max())
    return {"min_m": vmin, "max_m": vmax, "range_m": vmax - vmin,
            "mean_slope_deg": mean_slope}


def _dilate4(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def flood_mask(dem: RasterGrid, level_m: float) -> np.ndarray:
    """Cells at or below the level that are hydrologically reachable.

    Reachable means 4-connected through <=level cells to a scene-boundary
    cell or to a scene-minimum cell; walled-off interior pits stay dry.
    Nodata cells never flood and block connectivity.
    """
    valid = dem.valid_mask
    z = dem.values.astype(np.float64)
    allowed = valid & (z <= level_m)
    if not allowed.any():
        return np.zeros_like(allowed)

    seeds = np.zeros_like(allowed)
    seeds[0, :] = True
    seeds[-1, :] = True
    seeds[:, 0] = True
    seeds[:, -1] = True
    scene_min = z[valid].min()
    seeds |= valid & (z == scene_min)
    seeds &= allowed

    mask = seeds
    while True:
        grown = _dilate4(mask) & allowed
        if np.array_equal(grown, mask):
            return mask
        mask = grown


def landslide_mask(dem: RasterGrid, categories: RasterGrid, slope_thr_deg: float,
                   susceptible_ids) -> np.ndarray:
    """Cells with slope >= threshold on a susceptible land-cover category.

    Cells whose 3x3 window touches nodata (or whose category is nodata or
    not susceptible) are excluded.
    """
    slope, _, _, window_ok = _slope_aspect_arrays(dem)
    sus = np.zeros(categories.values.shape, dtype=bool)
    for cid in susceptible_ids:
        sus |= categories.values == np.float32(cid)
    sus &= categories.valid_mask
    return (slope >= slope_thr_deg) & window_ok & sus
