"""Deterministic generation of the ten benchmark task families.

Every generator draws from a splitmix64 stream keyed by (seed, tile, task),
so identical inputs give byte-identical records on any platform. Numeric
rounding: heights/elevations to 0.1 m, slope to 0.1 degree, aspect to 1
degree, area shares to 0.1 percent.

Task taxonomy: ER/PI/SI are pixel-level, IE/HR object-level, PD/TS/CS
scene-level, LI/FI reasoning-level; SI, LI and FI exist only in the plus
benchmark.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import terrain
from .errors import BenchmarkError, InsufficientDataError
from .raster import RasterGrid, TileBundle
from .regions import Region, filter_regions, label_components, region_stats
from .rle import MaskRLE, decode_rle, encode_rle
from .rng import task_stream
from .vlm import build_prompts, run_self_consistency

TOOL_VERSION = "0.1.0"

TASK_LEVELS = {
    "ER": "pixel", "PI": "pixel", "SI": "pixel",
    "IE": "object", "HR": "object",
    "PD": "scene", "TS": "scene", "CS": "scene",
    "LI": "reasoning", "FI": "reasoning",
}
PLUS_ONLY_TASKS = frozenset({"SI", "LI", "FI"})
MASK_TASKS = frozenset({"IE", "HR", "TS", "CS", "LI", "FI"})
TASK_ORDER = ("ER", "PI", "SI", "IE", "HR", "PD", "TS", "CS", "LI", "FI")

DEFAULT_RULES = {
    "connectivity": 8,
    "min_area_px": 20,
    "hr_k": 3,
    "hr_category": "building",
    "object_categories": ["building", "tree"],
    "ts_quantiles": [0.25, 0.5, 0.75],
    "li_slope_thresholds": [25.0, 30.0, 35.0],
    "li_exclude": ["water", "building"],
    "fi_level_quantiles": [0.1, 0.2],
    "sc_k": 3,
}


def load_catalogue(path=None) -> dict:
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    with resources.files("heightqa").joinpath("templates/catalogue.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


_CATALOGUE = None


def set_catalogue(path=None) -> dict:
    """Swap in an alternative versioned catalogue (None restores builtin)."""
    global _CATALOGUE
    _CATALOGUE = load_catalogue(path)
    return _CATALOGUE


def catalogue() -> dict:
    global _CATALOGUE
    if _CATALOGUE is None:
        _CATALOGUE = load_catalogue()
    return _CATALOGUE


@dataclass
class QARecord:
    id: str
    task: str
    level: str
    bench: str
    tile_id: str
    question: str
    answer: str
    answer_value: object
    mask: MaskRLE | None
    meta: dict
    provenance: str

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "level": self.level,
            "bench": self.bench,
            "tile_id": self.tile_id,
            "question": self.question,
            "answer": self.answer,
            "answer_value": self.answer_value,
            "mask": self.mask.to_json() if self.mask is not None else None,
            "meta": self.meta,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QARecord":
        mask = obj.get("mask")
        return cls(
            id=obj["id"], task=obj["task"], level=obj["level"], bench=obj["bench"],
            tile_id=obj["tile_id"], question=obj["question"], answer=obj["answer"],
            answer_value=obj.get("answer_value"),
            mask=MaskRLE.from_json(mask) if mask is not None else None,
            meta=obj.get("meta", {}), provenance=obj.get("provenance", "template"),
        )


def record_line(record: QARecord) -> str:
    return json.dumps(record.to_json(), ensure_ascii=False, separators=(",", ":"))


def records_from_jsonl(text: str) -> list[QARecord]:
    return [QARecord.from_json(json.loads(line))
            for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Region index: per-category labeling shared by the object/scene generators
# ---------------------------------------------------------------------------

@dataclass
class CategoryRegions:
    category_id: int
    labels: np.ndarray
    regions: list[Region]
    filtered: list[Region]


@dataclass
class RegionIndex:
    connectivity: int
    min_area_px: int
    by_category: dict[int, CategoryRegions] = field(default_factory=dict)

    def mask_of(self, category_id: int, region_id: int) -> np.ndarray:
        return self.by_category[category_id].labels == region_id

    def filtered(self, category_id: int) -> list[Region]:
        entry = self.by_category.get(category_id)
        return entry.filtered if entry else []


def build_region_index(bundle: TileBundle, category_ids,
                       connectivity: int = 8, min_area_px: int = 20) -> RegionIndex:
    index = RegionIndex(connectivity=connectivity, min_area_px=min_area_px)
    for cid in sorted(category_ids):
        labels, count = label_components(bundle.categories, cid, connectivity)
        regions = region_stats(labels, bundle) if count else []
        index.by_category[cid] = CategoryRegions(
            category_id=cid, labels=labels, regions=regions,
            filtered=filter_regions(regions, min_area_px))
    return index


def object_category_ids(bundle: TileBundle, names) -> list[int]:
    """Resolve configured category names against the tile legend, sorted by id."""
    wanted = {n.lower() for n in names}
    return sorted(cid for cid, name in bundle.category_legend.items()
                  if name.lower() in wanted)


def _round1(v: float) -> float:
    return round(float(v), 1)


def _fmt1(v: float) -> str:
    return f"{float(v):.1f}"


def _coords(idx: int, width: int) -> tuple[int, int]:
    return idx % width, idx // width


def _sample_cells(valid: np.ndarray, n: int, stream, what: str) -> list[int]:
    cells = np.flatnonzero(valid.ravel())
    if len(cells) < n:
        raise InsufficientDataError(
            f"{what}: need {n} valid cells, found {len(cells)}")
    return stream.sample([int(c) for c in cells], n)


# ---------------------------------------------------------------------------
# Pixel-level generators
# ---------------------------------------------------------------------------

def gen_er(bundle: TileBundle, n: int, seed: int, bench: str = "base") -> list[QARecord]:
    """Elevation lookups at seeded-random valid DEM cells."""
    tpl = catalogue()["tasks"]["ER"]
    stream = task_stream(seed, bundle.tile_id, "ER")
    chosen = _sample_cells(bundle.dem.valid_mask, n, stream, "ER")
    records = []
    for i, idx in enumerate(chosen):
        x, y = _coords(idx, bundle.width)
        value = _round1(bundle.dem.value_at(x, y))
        records.append(QARecord(
            id=f"{bundle.tile_id}-ER-{i:03d}", task="ER", level="pixel",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(x=x, y=y),
            answer=tpl["answer"].format(value=_fmt1(value)),
            answer_value=value, mask=None,
            meta={"x": x, "y": y, "source": "dem", "seed": seed},
            provenance="template"))
    return records


def gen_pi(bundle: TileBundle, n: int, seed: int, bench: str = "base") -> list[QARecord]:
    """Joint category/height/resolution lookups on named-category cells."""
    tpl = catalogue()["tasks"]["PI"]
    stream = task_stream(seed, bundle.tile_id, "PI")
    named = np.zeros((bundle.grid_height, bundle.width), dtype=bool)
    for cid in bundle.category_legend:
        named |= bundle.categories.values == np.float32(cid)
    valid = named & bundle.categories.valid_mask & bundle.height.valid_mask
    chosen = _sample_cells(valid, n, stream, "PI")
    records = []
    for i, idx in enumerate(chosen):
        x, y = _coords(idx, bundle.width)
        cid = int(bundle.categories.value_at(x, y))
        height_m = _round1(bundle.height.value_at(x, y))
        value = {"category_name": bundle.category_legend[cid],
                 "height_m": height_m,
                 "cell_size_m": float(bundle.cell_size)}
        records.append(QARecord(
            id=f"{bundle.tile_id}-PI-{i:03d}", task="PI", level="pixel",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(x=x, y=y),
            answer=tpl["answer"].format(category_name=value["category_name"],
                                        height_m=_fmt1(height_m),
                                        cell_size_m=value["cell_size_m"]),
            answer_value=value, mask=None,
            meta={"x": x, "y": y, "category_id": cid, "source": "height",
                  "seed": seed},
            provenance="template"))
    return records


def gen_si(bundle: TileBundle, n: int, seed: int, bench: str = "plus") -> list[QARecord]:
    """Slope/aspect queries; only lives in the plus benchmark."""
    if bench != "plus":
        raise BenchmarkError("SI records belong to the plus benchmark only")
    tpl = catalogue()["tasks"]["SI"]
    stream = task_stream(seed, bundle.tile_id, "SI")
    window_ok = terrain.valid_slope_windows(bundle.dem)
    chosen = _sample_cells(window_ok, n, stream, "SI")
    records = []
    for i, idx in enumerate(chosen):
        x, y = _coords(idx, bundle.width)
        sa = terrain.slope_aspect(bundle.dem, x, y)
        if sa.flat:
            value = {"slope_deg": 0.0, "aspect_deg": 0, "flat": True}
            answer = tpl["answer_flat"]
        else:
            aspect = int(round(sa.aspect_deg)) % 360
            value = {"slope_deg": _round1(sa.slope_deg), "aspect_deg": aspect,
                     "flat": False}
            answer = tpl["answer"].format(slope_deg=_fmt1(value["slope_deg"]),
                                          aspect_deg=aspect)
        records.append(QARecord(
            id=f"{bundle.tile_id}-SI-{i:03d}", task="SI", level="pixel",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(x=x, y=y),
            answer=answer, answer_value=value, mask=None,
            meta={"x": x, "y": y, "source": "dem", "seed": seed},
            provenance="template"))
    return records


# ---------------------------------------------------------------------------
# Object-level generators
# ---------------------------------------------------------------------------

def _ordinal_phrase(rank: int, name: str) -> str:
    if rank == 1:
        return f"the largest {name}"
    suffix = {2: "nd", 3: "rd"}.get(rank, "th")
    return f"the {rank}{suffix} largest {name}"


def gen_ie(bundle: TileBundle, index: RegionIndex, n: int, seed: int,
           bench: str = "base") -> list[QARecord]:
    """Single-region extraction, located by category + descending-area rank.

    Ties in area break by raster-scan order of the first cell, which is the
    region-id order by construction; the break is recorded in meta.
    """
    tpl = catalogue()["tasks"]["IE"]
    stream = task_stream(seed, bundle.tile_id, "IE")
    candidates = []
    for cid in sorted(index.by_category):
        ranked = sorted(index.filtered(cid), key=lambda r: (-r.area_px, r.region_id))
        for rank, region in enumerate(ranked, start=1):
            candidates.append((cid, rank, region))
    if len(candidates) < n:
        raise InsufficientDataError(
            f"IE: need {n} region candidates, found {len(candidates)}")
    chosen = stream.sample(candidates, n)
    records = []
    for i, (cid, rank, region) in enumerate(chosen):
        name = bundle.category_legend[cid]
        locator = _ordinal_phrase(rank, name)
        mean_h = _round1(region.mean_height)
        records.append(QARecord(
            id=f"{bundle.tile_id}-IE-{i:03d}", task="IE", level="object",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(locator=locator),
            answer=tpl["answer"].format(mean_height=_fmt1(mean_h)),
            answer_value=mean_h,
            mask=encode_rle(index.mask_of(cid, region.region_id)),
            meta={"category_id": cid, "region_id": region.region_id,
                  "area_rank": rank, "connectivity": index.connectivity,
                  "min_area_px": index.min_area_px,
                  "tie_break": "raster-scan-first-cell", "seed": seed},
            provenance="template"))
    return records


def rank_by_height(regions: list[Region]) -> list[Region]:
    """Tallest first; ties by larger area, then raster-scan order."""
    return sorted(regions, key=lambda r: (-r.mean_height, -r.area_px, r.region_id))


def gen_hr(bundle: TileBundle, index: RegionIndex, k: int, seed: int,
           bench: str = "base", category: str = "building") -> list[QARecord]:
    """Height ranking over the k tallest regions of one category.

    Tiles with fewer than k candidate regions contribute no record.
    """
    tpl = catalogue()["tasks"]["HR"]
    cids = object_category_ids(bundle, [category])
    pool = index.filtered(cids[0]) if cids else []
    if len(pool) < k:
        return []
    ranked = rank_by_height(pool)[:k]
    cid = cids[0]
    union = np.zeros((bundle.grid_height, bundle.width), dtype=bool)
    rank_masks = []
    for region in ranked:
        footprint = index.mask_of(cid, region.region_id)
        union |= footprint
        rank_masks.append(encode_rle(footprint).to_json())
    listing = ", ".join(f"{category} {r.region_id}" for r in ranked)
    return [QARecord(
        id=f"{bundle.tile_id}-HR-000", task="HR", level="object",
        bench=bench, tile_id=bundle.tile_id,
        question=tpl["question"].format(k=k),
        answer=tpl["answer"].format(listing=listing),
        answer_value=[r.region_id for r in ranked],
        mask=encode_rle(union),
        meta={"category_id": cid, "k": k,
              "mean_heights": [_round1(r.mean_height) for r in ranked],
              "rank_masks": rank_masks,
              "connectivity": index.connectivity,
              "min_area_px": index.min_area_px,
              "tie_break": "area-then-raster-scan", "seed": seed},
        provenance="template")]


# ---------------------------------------------------------------------------
# Scene-level generators
# ---------------------------------------------------------------------------

def category_height_stats(bundle: TileBundle, index: RegionIndex) -> dict:
    """Per-category height statistics over valid nDSM cells plus region counts."""
    stats = {}
    total_cat_cells = int(bundle.categories.valid_mask.sum())
    for cid in sorted(index.by_category):
        cells = ((bundle.categories.values == np.float32(cid))
                 & bundle.categories.valid_mask & bundle.height.valid_mask)
        if not cells.any():
            continue
        vals = bundle.height.values[cells].astype(np.float64)
        all_cells = int(((bundle.categories.values == np.float32(cid))
                         & bundle.categories.valid_mask).sum())
        stats[bundle.category_legend[cid]] = {
            "category_id": cid,
            "region_count": len(index.filtered(cid)),
            "mean_height_m": _round1(vals.mean()),
            "min_height_m": _round1(vals.min()),
            "max_height_m": _round1(vals.max()),
            "area_share_pct": _round1(100.0 * all_cells / total_cat_cells),
        }
    return stats


def _stats_block(stats: dict, relief: dict | None, slopes: dict | None) -> str:
    parts = []
    for name, s in stats.items():
        line = (f"{name}: {s['region_count']} regions, mean height "
                f"{_fmt1(s['mean_height_m'])} m, min {_fmt1(s['min_height_m'])} m, "
                f"max {_fmt1(s['max_height_m'])} m, area share "
                f"{_fmt1(s['area_share_pct'])} percent")
        if slopes and name in slopes:
            line += f", mean slope {_fmt1(slopes[name])} degrees"
        parts.append(line)
    if relief is not None:
        parts.append(
            f"terrain relief: min {_fmt1(relief['min_m'])} m, max "
            f"{_fmt1(relief['max_m'])} m, range {_fmt1(relief['range_m'])} m, "
            f"mean slope {_fmt1(relief['mean_slope_deg'])} degrees")
    return "; ".join(parts)


def category_mean_slopes(bundle: TileBundle, stats: dict) -> dict:
    """Mean DEM slope per category over cells with fully valid windows."""
    slope, window_ok = terrain.slope_degrees(bundle.dem)
    out = {}
    for name, s in stats.items():
        cells = ((bundle.categories.values == np.float32(s["category_id"]))
                 & bundle.categories.valid_mask & window_ok)
        if cells.any():
            out[name] = _round1(float(slope[cells].mean()))
    return out


def gen_pd(bundle: TileBundle, index: RegionIndex, client, seed: int,
           bench: str = "base", k: int = 3):
    """Height-distribution description; question is templated, the canonical
    answer comes from the endpoint through self-consistency filtering.

    Returns (records, traces); a rejected trace drops the record.
    """
    tpl = catalogue()["tasks"]["PD"]
    stats = category_height_stats(bundle, index)
    if not stats:
        return [], []
    relief = slopes = None
    if bench == "plus":
        relief = {k_: _round1(v) for k_, v in
                  terrain.relief_stats(bundle.dem).items()}
        slopes = category_mean_slopes(bundle, stats)
    block = _stats_block(stats, relief, slopes)
    record_id = f"{bundle.tile_id}-PD-000"
    prompts = build_prompts({"stats_block": block},
                            {"system": tpl["system"], "variants": tpl["variants"]},
                            k=k)
    trace = run_self_consistency(prompts, client, "descriptive",
                                 category_names=list(stats),
                                 trace_key=record_id)
    if not trace.accepted:
        return [], [trace]
    meta = {"category_stats": stats, "stats_block": block, "seed": seed,
            "trace_id": trace.trace_id, "sc_k": k,
            "connectivity": index.connectivity, "min_area_px": index.min_area_px}
    if relief is not None:
        meta["relief"] = relief
        meta["category_mean_slopes"] = slopes
    record = QARecord(
        id=record_id, task="PD", level="scene", bench=bench,
        tile_id=bundle.tile_id, question=tpl["question"],
        answer=trace.verdict["answer"],
        answer_value={"category_stats": stats},
        mask=None, meta=meta, provenance="vlm")
    return [record], [trace]


def threshold_count(bundle: TileBundle, category_id: int, thr_m: float,
                    connectivity: int) -> tuple[int, np.ndarray]:
    """Region count and union mask matching the strict-greater threshold rule."""
    labels, count, means = terrain.region_mean_heights(
        bundle.height, bundle.categories, category_id, connectivity)
    qualifying = [rid for rid in range(1, count + 1)
                  if not np.isnan(means[rid]) and means[rid] > thr_m]
    mask = np.isin(labels, qualifying) if qualifying else np.zeros(labels.shape, bool)
    return len(qualifying), mask


def gen_ts(bundle: TileBundle, index: RegionIndex, seed: int,
           bench: str = "base", quantiles=(0.25, 0.5, 0.75)) -> list[QARecord]:
    """Threshold segmentation per object category.

    The threshold is a seeded choice among region-mean quantiles; when every
    region mean ties, it falls back to the scene-mean height.
    """
    tpl = catalogue()["tasks"]["TS"]
    stream = task_stream(seed, bundle.tile_id, "TS")
    records = []
    ordinal = 0
    for cid in sorted(index.by_category):
        pool = index.filtered(cid)
        if not pool:
            continue
        means = [r.mean_height for r in pool]
        if len(set(means)) <= 1:
            thr = float(bundle.height.values[bundle.height.valid_mask]
                        .astype(np.float64).mean())
            quantile: object = "scene-mean"
        else:
            quantile = float(stream.choice(list(quantiles)))
            thr = float(np.quantile(np.array(means, dtype=np.float64), quantile))
        count, mask = threshold_count(bundle, cid, thr, index.connectivity)
        name = bundle.category_legend[cid]
        records.append(QARecord(
            id=f"{bundle.tile_id}-TS-{ordinal:03d}", task="TS", level="scene",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(category_name=name,
                                            threshold=_fmt1(thr)),
            answer=tpl["answer"].format(count=count),
            answer_value=count, mask=encode_rle(mask),
            meta={"category_id": cid, "threshold_m": thr, "quantile": quantile,
                  "connectivity": index.connectivity,
                  "min_area_px": index.min_area_px, "comparison": "strictly-greater",
                  "source": "height", "seed": seed},
            provenance="template"))
        ordinal += 1
    return records


def gen_cs(bundle: TileBundle, index: RegionIndex,
           bench: str = "base") -> list[QARecord]:
    """Category summary: instance count, union mean height, total area, mask."""
    tpl = catalogue()["tasks"]["CS"]
    records = []
    ordinal = 0
    for cid in sorted(index.by_category):
        pool = index.filtered(cid)
        if not pool:
            continue
        union = np.zeros((bundle.grid_height, bundle.width), dtype=bool)
        for region in pool:
            union |= index.mask_of(cid, region.region_id)
        cells = union & bundle.height.valid_mask
        mean_h = _round1(bundle.height.values[cells].astype(np.float64).mean())
        total_area = round(sum(r.area_m2 for r in pool), 1)
        name = bundle.category_legend[cid]
        value = {"instance_count": len(pool), "mean_height_m": mean_h,
                 "total_area_m2": total_area}
        records.append(QARecord(
            id=f"{bundle.tile_id}-CS-{ordinal:03d}", task="CS", level="scene",
            bench=bench, tile_id=bundle.tile_id,
            question=tpl["question"].format(category_name=name),
            answer=tpl["answer"].format(count=len(pool), mean_height=_fmt1(mean_h),
                                        total_area=_fmt1(total_area)),
            answer_value=value, mask=encode_rle(union),
            meta={"category_id": cid, "connectivity": index.connectivity,
                  "min_area_px": index.min_area_px, "source": "height"},
            provenance="template"))
        ordinal += 1
    return records


# ---------------------------------------------------------------------------
# Reasoning-level generators
# ---------------------------------------------------------------------------

def _affected_names(bundle: TileBundle, mask: np.ndarray) -> list[str]:
    under = bundle.categories.values[mask & bundle.categories.valid_mask]
    ids = sorted({int(v) for v in np.unique(under)})
    return [bundle.category_legend[c] for c in ids if c in bundle.category_legend]


def _share_pct(mask: np.ndarray) -> float:
    return _round1(100.0 * float(mask.sum()) / mask.size)


def gen_li(bundle: TileBundle, params: dict, seed: int,
           bench: str = "plus") -> list[QARecord]:
    """Landslide susceptibility: slope threshold on susceptible categories.

    An empty mask is a valid negative case, kept with a no-area answer.
    """
    if bench != "plus":
        raise BenchmarkError("LI records belong to the plus benchmark only")
    tpl = catalogue()["tasks"]["LI"]
    stream = task_stream(seed, bundle.tile_id, "LI")
    thr = float(stream.choice(list(params.get("li_slope_thresholds",
                                              DEFAULT_RULES["li_slope_thresholds"]))))
    exclude = {n.lower() for n in params.get("li_exclude", DEFAULT_RULES["li_exclude"])}
    susceptible = sorted(cid for cid, name in bundle.category_legend.items()
                         if name.lower() not in exclude)
    mask = terrain.landslide_mask(bundle.dem, bundle.categories, thr, susceptible)
    share = _share_pct(mask)
    names = _affected_names(bundle, mask)
    if mask.any():
        answer = tpl["answer"].format(share=_fmt1(share), names=", ".join(names))
    else:
        answer = tpl["answer_empty"]
    return [QARecord(
        id=f"{bundle.tile_id}-LI-000", task="LI", level="reasoning",
        bench=bench, tile_id=bundle.tile_id,
        question=tpl["question"].format(threshold=f"{thr:g}"),
        answer=answer,
        answer_value={"share_pct": share, "affected": names},
        mask=encode_rle(mask),
        meta={"slope_thr_deg": thr, "susceptible_ids": susceptible,
              "rule": "slope-threshold-on-susceptible-categories",
              "comparison": "greater-or-equal", "source": "dem", "seed": seed},
        provenance="template")]


def gen_fi(bundle: TileBundle, params: dict, seed: int,
           bench: str = "plus") -> list[QARecord]:
    """Flood reach at a DEM-quantile water level, seeded choice of quantile."""
    if bench != "plus":
        raise BenchmarkError("FI records belong to the plus benchmark only")
    tpl = catalogue()["tasks"]["FI"]
    stream = task_stream(seed, bundle.tile_id, "FI")
    quantile = float(stream.choice(list(params.get("fi_level_quantiles",
                                                   DEFAULT_RULES["fi_level_quantiles"]))))
    valid = bundle.dem.values[bundle.dem.valid_mask].astype(np.float64)
    level = float(np.quantile(valid, quantile))
    mask = terrain.flood_mask(bundle.dem, level)
    share = _share_pct(mask)
    names = _affected_names(bundle, mask)
    if mask.any():
        answer = tpl["answer"].format(share=_fmt1(share), names=", ".join(names))
    else:
        answer = tpl["answer_empty"]
    return [QARecord(
        id=f"{bundle.tile_id}-FI-000", task="FI", level="reasoning",
        bench=bench, tile_id=bundle.tile_id,
        question=tpl["question"].format(level=_fmt1(level)),
        answer=answer,
        answer_value={"share_pct": share, "affected": names},
        mask=encode_rle(mask),
        meta={"level_m": level, "quantile": quantile,
              "rule": "level-set-boundary-connectivity", "source": "dem",
              "seed": seed},
        provenance="template")]


# ---------------------------------------------------------------------------
# Assembly and audit
# ---------------------------------------------------------------------------

def assemble_benchmark(records: list[QARecord], bench: str, seed: int,
                       rules: dict | None = None) -> tuple[bytes, dict]:
    """Validated, sorted JSONL plus its manifest.

    One JSON object per line with a stable key order; duplicate ids, wrong
    bench tags, plus-only tasks in the base bench and missing masks all
    reject.
    """
    if bench not in ("base", "plus"):
        raise BenchmarkError(f"unknown bench {bench!r}")
    seen = set()
    for record in records:
        if record.id in seen:
            raise BenchmarkError(f"duplicate record id {record.id}")
        seen.add(record.id)
        if record.task not in TASK_LEVELS:
            raise BenchmarkError(f"unknown task {record.task} in {record.id}")
        if record.bench != bench:
            raise BenchmarkError(
                f"record {record.id} tagged bench={record.bench}, assembling {bench}")
        if bench == "base" and record.task in PLUS_ONLY_TASKS:
            raise BenchmarkError(
                f"task {record.task} is not part of the base benchmark ({record.id})")
        if record.task in MASK_TASKS and record.mask is None:
            raise BenchmarkError(f"record {record.id} ({record.task}) lacks a mask")
        if record.level != TASK_LEVELS[record.task]:
            raise BenchmarkError(f"record {record.id} has wrong level {record.level}")
    ordered = sorted(records, key=lambda r: r.id)
    payload = "".join(record_line(r) + "\n" for r in ordered).encode("utf-8")
    counts = {task: sum(1 for r in ordered if r.task == task)
              for task in TASK_ORDER
              if any(r.task == task for r in ordered)}
    manifest = {
        "bench": bench,
        "record_count": len(ordered),
        "counts_per_task": counts,
        "seed": seed,
        "tool_version": TOOL_VERSION,
        "template_catalogue_version": catalogue()["version"],
        "rules": rules or {},
        "note": "question wording follows the versioned template catalogue",
    }
    return payload, manifest


def audit_record(record: QARecord, bundle: TileBundle) -> bool:
    """Re-derive answer_value (and mask, where cheap) from bundle + meta.

    Returns True when the stored answer is exactly reproducible; the
    benchmark passes only when every record audits clean.
    """
    meta = record.meta
    task = record.task
    if task == "ER":
        return record.answer_value == _round1(bundle.dem.value_at(meta["x"], meta["y"]))
    if task == "PI":
        cid = int(bundle.categories.value_at(meta["x"], meta["y"]))
        expect = {"category_name": bundle.category_legend[cid],
                  "height_m": _round1(bundle.height.value_at(meta["x"], meta["y"])),
                  "cell_size_m": float(bundle.cell_size)}
        return record.answer_value == expect
    if task == "SI":
        sa = terrain.slope_aspect(bundle.dem, meta["x"], meta["y"])
        if sa.flat:
            expect = {"slope_deg": 0.0, "aspect_deg": 0, "flat": True}
        else:
            expect = {"slope_deg": _round1(sa.slope_deg),
                      "aspect_deg": int(round(sa.aspect_deg)) % 360, "flat": False}
        return record.answer_value == expect
    if task in ("IE", "HR", "TS", "CS"):
        index = build_region_index(bundle, [meta["category_id"]],
                                   meta["connectivity"], meta["min_area_px"])
        cid = meta["category_id"]
        if task == "IE":
            region = next((r for r in index.by_category[cid].regions
                           if r.region_id == meta["region_id"]), None)
            if region is None or record.answer_value != _round1(region.mean_height):
                return False
            return np.array_equal(decode_rle(record.mask),
                                  index.mask_of(cid, region.region_id))
        if task == "HR":
            ranked = rank_by_height(index.filtered(cid))[:meta["k"]]
            return record.answer_value == [r.region_id for r in ranked]
        if task == "TS":
            count, mask = threshold_count(bundle, cid, meta["threshold_m"],
                                          meta["connectivity"])
            return record.answer_value == count and np.array_equal(
                decode_rle(record.mask), mask)
        pool = index.filtered(cid)
        union = np.zeros((bundle.grid_height, bundle.width), dtype=bool)
        for region in pool:
            union |= index.mask_of(cid, region.region_id)
        cells = union & bundle.height.valid_mask
        expect = {"instance_count": len(pool),
                  "mean_height_m": _round1(bundle.height.values[cells]
                                           .astype(np.float64).mean()),
                  "total_area_m2": round(sum(r.area_m2 for r in pool), 1)}
        return record.answer_value == expect and np.array_equal(
            decode_rle(record.mask), union)
    if task == "PD":
        cids = [s["category_id"] for s in meta["category_stats"].values()]
        index = build_region_index(bundle, cids, meta["connectivity"],
                                   meta["min_area_px"])
        stats = category_height_stats(bundle, index)
        return record.answer_value == {"category_stats": stats}
    if task == "LI":
        mask = terrain.landslide_mask(bundle.dem, bundle.categories,
                                      meta["slope_thr_deg"], meta["susceptible_ids"])
        expect = {"share_pct": _share_pct(mask),
                  "affected": _affected_names(bundle, mask)}
        return record.answer_value == expect and np.array_equal(
            decode_rle(record.mask), mask)
    if task == "FI":
        mask = terrain.flood_mask(bundle.dem, meta["level_m"])
        expect = {"share_pct": _share_pct(mask),
                  "affected": _affected_names(bundle, mask)}
        return record.answer_value == expect and np.array_equal(
            decode_rle(record.mask), mask)
    return False
