"""Coherent land-cover regions: connectivity labeling and per-region statistics.

A label grid is an int32 array with the source dims: 0 is background, k > 0
is the k-th region in raster-scan order of first-encountered cell. Labeling
is two-pass union-find, so it is deterministic and recursion-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridInvariantError
from .raster import KIND_CATEGORY, RasterGrid, TileBundle


@dataclass
class Region:
    region_id: int
    category_id: int
    area_px: int
    area_m2: float
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    centroid: tuple[float, float]
    mean_height: float | None
    min_height: float | None
    max_height: float | None
    mean_elevation: float | None
    stats_missing: bool = False

    def to_json(self) -> dict:
        """JSON object with exactly the public fields (flag stays internal)."""
        return {
            "region_id": self.region_id,
            "category_id": self.category_id,
            "area_px": self.area_px,
            "area_m2": self.area_m2,
            "bbox": list(self.bbox),
            "centroid": list(self.centroid),
            "mean_height": self.mean_height,
            "min_height": self.min_height,
            "max_height": self.max_height,
            "mean_elevation": self.mean_elevation,
        }


def label_components(categories: RasterGrid, category_id: int,
                     connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label connected components of one category.

    Two cells share a label iff they are connected through cells of
    ``category_id`` under 4- or 8-neighborhood adjacency. Returns the label
    grid and the component count; an absent category gives count 0.
    """
    if categories.kind != KIND_CATEGORY:
        raise GridInvariantError("label_components needs a category-id grid")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")

    w, h = categories.width, categories.height
    target = (categories.values == np.float32(category_id)) & categories.valid_mask
    flat = target.ravel()

    parent: list[int] = [0]  # parent[0] unused; provisional labels start at 1
    provisional = [0] * (w * h)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    diag = connectivity == 8
    idx = 0
    for y in range(h):
        row_off = y * w
        for x in range(w):
            idx = row_off + x
            if not flat[idx]:
                continue
            best = 0
            # Previously-scanned neighbors only: W, NW, N, NE.
            if x > 0 and flat[idx - 1]:
                best = provisional[idx - 1]
            if y > 0:
                up = idx - w
                if flat[up]:
                    lbl = provisional[up]
                    if best and lbl != best:
                        ra, rb = find(best), find(lbl)
                        if ra != rb:
                            parent[max(ra, rb)] = min(ra, rb)
                    best = best or lbl
                if diag:
                    if x > 0 and flat[up - 1]:
                        lbl = provisional[up - 1]
                        if best and lbl != best:
                            ra, rb = find(best), find(lbl)
                            if ra != rb:
                                parent[max(ra, rb)] = min(ra, rb)
                        best = best or lbl
                    if x + 1 < w and flat[up + 1]:
                        lbl = provisional[up + 1]
                        if best and lbl != best:
                            ra, rb = find(best), find(lbl)
                            if ra != rb:
                                parent[max(ra, rb)] = min(ra, rb)
                        best = best or lbl
            if not best:
                best = len(parent)
                parent.append(best)
            provisional[idx] = best

    # Second pass: resolve roots, number regions by first raster-scan cell.
    final_of_root: dict[int, int] = {}
    labels = np.zeros(w * h, dtype=np.int32)
    next_label = 0
    for i in range(w * h):
        if not flat[i]:
            continue
        root = find(provisional[i])
        lbl = final_of_root.get(root)
        if lbl is None:
            next_label += 1
            lbl = next_label
            final_of_root[root] = lbl
        labels[i] = lbl

    return labels.reshape(h, w), next_label


def region_stats(labels: np.ndarray, bundle: TileBundle) -> list[Region]:
    """One Region per label, statistics over non-nodata cells of the footprint.

    Height stats come from the nDSM layer, mean_elevation from the DEM. A
    region whose footprint carries no valid height or elevation cell is
    emitted with stats_missing set, for exclusion from task sampling.
    """
    h, w = labels.shape
    if (w, h) != (bundle.width, bundle.grid_height):
        raise GridInvariantError("label grid dims differ from bundle dims")
    count = int(labels.max(initial=0))
    if count == 0:
        return []

    ys, xs = np.nonzero(labels)
    ls = labels[ys, xs]
    cell = bundle.cell_size

    area = np.bincount(ls, minlength=count + 1)
    sum_x = np.bincount(ls, weights=xs.astype(np.float64), minlength=count + 1)
    sum_y = np.bincount(ls, weights=ys.astype(np.float64), minlength=count + 1)

    x0 = np.full(count + 1, w, dtype=np.int64)
    y0 = np.full(count + 1, h, dtype=np.int64)
    x1 = np.full(count + 1, -1, dtype=np.int64)
    y1 = np.full(count + 1, -1, dtype=np.int64)
    np.minimum.at(x0, ls, xs)
    np.minimum.at(y0, ls, ys)
    np.maximum.at(x1, ls, xs)
    np.maximum.at(y1, ls, ys)

    def masked_stats(grid: RasterGrid):
        vals = grid.values[ys, xs].astype(np.float64)
        ok = grid.valid_mask[ys, xs]
        cnt = np.bincount(ls[ok], minlength=count + 1)
        tot = np.bincount(ls[ok], weights=vals[ok], minlength=count + 1)
        vmin = np.full(count + 1, np.inf)
        vmax = np.full(count + 1, -np.inf)
        np.minimum.at(vmin, ls[ok], vals[ok])
        np.maximum.at(vmax, ls[ok], vals[ok])
        return cnt, tot, vmin, vmax

    h_cnt, h_tot, h_min, h_max = masked_stats(bundle.height)
    e_cnt, e_tot, _, _ = masked_stats(bundle.dem)

    # Category id read at the region's first raster-scan cell; the footprint
    # is single-category by construction.
    first_cell: dict[int, int] = {}
    flat_labels = labels.ravel()
    for i, lbl in enumerate(flat_labels):
        if lbl > 0 and lbl not in first_cell:
            first_cell[int(lbl)] = i
            if len(first_cell) == count:
                break
    cat_flat = bundle.categories.values.ravel()

    regions = []
    for rid in range(1, count + 1):
        missing = h_cnt[rid] == 0 or e_cnt[rid] == 0
        regions.append(Region(
            region_id=rid,
            category_id=int(cat_flat[first_cell[rid]]),
            area_px=int(area[rid]),
            area_m2=float(area[rid]) * cell * cell,
            bbox=(int(x0[rid]), int(y0[rid]), int(x1[rid]), int(y1[rid])),
            centroid=(float(sum_x[rid] / area[rid]), float(sum_y[rid] / area[rid])),
            mean_height=None if h_cnt[rid] == 0 else float(h_tot[rid] / h_cnt[rid]),
            min_height=None if h_cnt[rid] == 0 else float(h_min[rid]),
            max_height=None if h_cnt[rid] == 0 else float(h_max[rid]),
            mean_elevation=None if e_cnt[rid] == 0 else float(e_tot[rid] / e_cnt[rid]),
            stats_missing=bool(missing),
        ))
    return regions


def filter_regions(regions: list[Region], min_area_px: int = 20) -> list[Region]:
    """Stable-order subsequence: big enough and with complete statistics."""
    return [r for r in regions if r.area_px >= min_area_px and not r.stats_missing]


def region_mask(labels: np.ndarray, region_id: int) -> np.ndarray:
    """Boolean footprint of one region."""
    return labels == region_id
