#!/usr/bin/env python3
"""Build the committed test fixtures: three synthetic tiles, the recorded
endpoint store for the open-ended task, and golden overlay PNGs.

Run from the repository root:

    python3 scripts/make_fixtures.py            # tiles + replay store + overlays
    python3 scripts/make_fixtures.py --bless    # also freeze golden benchmarks

The tiles are hand-designed so every pipeline branch is exercised: varied
building heights for ranking, a steep ridge for landslide masks, a
boundary-connected basin plus a walled interior pit for flood connectivity,
a nodata patch for stats-missing regions, and one tile without RGB to hit
the hillshade overlay path.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from heightqa import pipeline, taskgen, verify, vlm  # noqa: E402
from heightqa.config import PipelineConfig  # noqa: E402
from heightqa.raster import (  # noqa: E402
    KIND_CATEGORY,
    KIND_CONTINUOUS,
    make_grid,
    write_ghr,
)

FIXTURES = ROOT / "tests" / "fixtures"
NODATA = -9999.0
CELL = 0.5
SIZE = 64

LEGEND = {0: "ground", 1: "building", 2: "tree", 3: "water", 4: "grass"}

BASE_COUNTS = {"ER": 3, "PI": 3, "SI": 0, "IE": 2, "HR": 1, "PD": 1,
               "TS": 1, "CS": 1, "LI": 0, "FI": 0}
PLUS_COUNTS = {"ER": 3, "PI": 3, "SI": 2, "IE": 2, "HR": 1, "PD": 1,
               "TS": 1, "CS": 1, "LI": 1, "FI": 1}
SEED = 1234


def _variation(x, y):
    return ((3 * x + 5 * y) % 8) * 0.1


def _rect(arr, x0, y0, w, h, value):
    arr[y0:y0 + h, x0:x0 + w] = value


def _disk(arr, cx, cy, r, value):
    yy, xx = np.mgrid[0:arr.shape[0], 0:arr.shape[1]]
    arr[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = value


def build_tile01():
    """Flat-ish urban tile: four buildings, two tree groves, a pond, and a
    building whose height data is missing entirely."""
    xx, yy = np.meshgrid(np.arange(SIZE), np.arange(SIZE))
    dem = 100.0 + 0.02 * xx + 0.01 * yy
    cats = np.zeros((SIZE, SIZE))
    height = np.zeros((SIZE, SIZE))
    var = _variation(xx, yy)

    buildings = [(5, 5, 10, 8, 12.5), (30, 8, 14, 10, 25.0),
                 (10, 40, 8, 8, 7.5), (45, 40, 6, 5, 18.0)]
    for x0, y0, w, h, base in buildings:
        _rect(cats, x0, y0, w, h, 1)
        height[y0:y0 + h, x0:x0 + w] = base + var[y0:y0 + h, x0:x0 + w]

    _disk(cats, 24, 28, 5, 2)
    _disk(cats, 54, 20, 4, 2)
    tree_mask = cats == 2
    height[tree_mask] = 9.0 + var[tree_mask]

    _disk(cats, 14, 56, 5, 3)  # pond

    # Building with an all-nodata height footprint -> stats-missing region.
    _rect(cats, 55, 55, 5, 5, 1)
    _rect(height, 55, 55, 5, 5, NODATA)

    rgb = _render_rgb(cats, height)
    return dem, height, cats, rgb


def build_tile02():
    """Steep ridge tile: slopes around 42 degrees for landslide masks, a
    valley floor for floods, trees on the slopes, only two buildings so the
    height-ranking task is skipped here."""
    xx, yy = np.meshgrid(np.arange(SIZE), np.arange(SIZE))
    x_m = xx * CELL
    dem = 80.0 + 0.9 * np.abs(x_m - 16.0)
    cats = np.zeros((SIZE, SIZE))
    height = np.zeros((SIZE, SIZE))
    var = _variation(xx, yy)

    _disk(cats, 12, 16, 6, 2)
    _disk(cats, 50, 44, 7, 2)
    _disk(cats, 44, 12, 5, 2)
    tree_mask = cats == 2
    height[tree_mask] = 11.0 + var[tree_mask]

    _rect(cats, 28, 28, 8, 6, 1)
    height[28:34, 28:36] = 6.0 + var[28:34, 28:36]
    _rect(cats, 28, 50, 7, 7, 1)
    height[50:57, 28:35] = 14.5 + var[50:57, 28:35]

    _rect(cats, 0, 0, 10, 10, 4)   # grass patch on the steep west slope
    return dem, height, cats, None


def build_tile03():
    """Waterside tile: boundary-connected basin (scene minimum) plus an
    interior pit walled off above flood level, buildings on the terrace."""
    xx, yy = np.meshgrid(np.arange(SIZE), np.arange(SIZE))
    dem = np.where(xx < 16, 48.0 + 0.14 * xx,
                   50.24 + 0.42 * (xx - 16))
    dem = dem + 0.01 * yy

    # Interior pit at 49 m with a 75 m rim; the basin floor stays the scene
    # minimum so the pit is dry unless the rim overtops.
    _rect(dem, 39, 19, 7, 7, 75.0)
    _rect(dem, 41, 21, 3, 3, 49.0)

    cats = np.zeros((SIZE, SIZE))
    height = np.zeros((SIZE, SIZE))
    var = _variation(xx, yy)

    _rect(cats, 0, 0, 12, SIZE, 3)  # water along the west edge

    buildings = [(30, 6, 8, 7, 9.5), (44, 6, 9, 8, 21.0), (32, 44, 7, 6, 5.5),
                 (48, 30, 6, 6, 16.5)]
    for x0, y0, w, h, base in buildings:
        _rect(cats, x0, y0, w, h, 1)
        height[y0:y0 + h, x0:x0 + w] = base + var[y0:y0 + h, x0:x0 + w]

    _disk(cats, 22, 34, 5, 2)
    _disk(cats, 58, 52, 4, 2)
    tree_mask = cats == 2
    height[tree_mask] = 8.0 + var[tree_mask]

    _rect(cats, 16, 56, 20, 8, 4)  # grass strip

    # A couple of nodata DEM cells in the far corner.
    dem[0, 62:64] = NODATA

    rgb = _render_rgb(cats, height)
    return dem, height, cats, rgb


def _render_rgb(cats, height):
    palette = {0: (120, 110, 90), 1: (180, 70, 60), 2: (40, 130, 50),
               3: (50, 90, 170), 4: (110, 170, 80)}
    h, w = cats.shape
    rgb = np.zeros((h, w, 3))
    for cid, color in palette.items():
        rgb[cats == cid] = color
    shade = np.clip(height, 0, 30) / 30.0 * 40.0
    rgb = np.clip(rgb + shade[:, :, None], 0, 255)
    return rgb


def write_tile(name, dem, height, cats, rgb):
    tile_dir = FIXTURES / "tiles" / name
    tile_dir.mkdir(parents=True, exist_ok=True)
    grids = {
        "dem": make_grid(dem, CELL, NODATA, KIND_CONTINUOUS),
        "height": make_grid(height, CELL, NODATA, KIND_CONTINUOUS),
        "categories": make_grid(cats, CELL, NODATA, KIND_CATEGORY),
    }
    for stem, grid in grids.items():
        (tile_dir / f"{stem}.ghr").write_bytes(write_ghr(grid))
    if rgb is not None:
        for i, channel in enumerate("rgb"):
            grid = make_grid(rgb[:, :, i], CELL, NODATA, KIND_CONTINUOUS)
            (tile_dir / f"rgb.{channel}.ghr").write_bytes(write_ghr(grid))
    (tile_dir / "legend.json").write_text(
        json.dumps({str(k): v for k, v in LEGEND.items()}, indent=2) + "\n",
        encoding="utf-8")


def record_vlm_store():
    """Fabricate the recorded endpoint responses for every open-ended prompt.

    The three paraphrase variants get consistent responses (same category
    mentions, same figures); the first carries hedging phrases so the
    accepted answer exercises sanitization.
    """
    store_path = FIXTURES / "vlm_replay.jsonl"
    entries = []
    for bench in ("base", "plus"):
        cfg = _config(bench)
        bundles = pipeline.load_tiles(cfg.tile_dir)
        for bundle in bundles:
            cids = taskgen.object_category_ids(bundle,
                                               cfg.rules["object_categories"])
            index = taskgen.build_region_index(bundle, cids,
                                               cfg.rules["connectivity"],
                                               cfg.rules["min_area_px"])
            stats = taskgen.category_height_stats(bundle, index)
            if not stats:
                continue
            relief = slopes = None
            if bench == "plus":
                from heightqa import terrain
                relief = {k: round(v, 1)
                          for k, v in terrain.relief_stats(bundle.dem).items()}
                slopes = taskgen.category_mean_slopes(bundle, stats)
            block = taskgen._stats_block(stats, relief, slopes)
            tpl = taskgen.catalogue()["tasks"]["PD"]
            prompts = vlm.build_prompts({"stats_block": block},
                                        {"system": tpl["system"],
                                         "variants": tpl["variants"]}, k=3)
            responses = [
                f"It seems the measurements are clear. {block}. "
                "Overall the scene is possibly dominated by its tallest objects.",
                f"The height profile is as follows. {block}. "
                "Taller objects stand well above the low cover.",
                f"Summary of the vertical structure: {block}. "
                "The figures above describe the full distribution.",
            ]
            for variant, response in zip(prompts.user_variants, responses):
                entries.append({"key": vlm.prompt_key(prompts.system_prompt, variant),
                                "response": response})
    seen = set()
    with open(store_path, "w", encoding="utf-8") as fh:
        for entry in entries:
            if entry["key"] in seen:
                continue
            seen.add(entry["key"])
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
    print(f"wrote {len(seen)} recorded response(s) to {store_path}")


def _config(bench):
    cfg = PipelineConfig()
    cfg.tile_dir = str(FIXTURES / "tiles")
    cfg.bench = bench
    cfg.seed = SEED
    cfg.counts = dict(BASE_COUNTS if bench == "base" else PLUS_COUNTS)
    cfg.vlm = vlm.EndpointConfig(mode="replay",
                                 replay_path=str(FIXTURES / "vlm_replay.jsonl"))
    cfg.validate()
    return cfg


def write_configs():
    for bench in ("base", "plus"):
        cfg = {
            "tile_dir": "tiles",
            "out_dir": "out",
            "bench": bench,
            "seed": SEED,
            "counts": BASE_COUNTS if bench == "base" else PLUS_COUNTS,
            "vlm": {"mode": "replay", "replay_path": "vlm_replay.jsonl"},
        }
        path = FIXTURES / f"config_{bench}.json"
        path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


def write_overlays():
    cfg = _config("plus")
    bundles = {b.tile_id: b for b in pipeline.load_tiles(cfg.tile_dir)}
    payload, _, _ = pipeline.generate(cfg)
    records = {r.id: r for r in taskgen.records_from_jsonl(payload.decode("utf-8"))}
    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    for record_id in ("tile01-IE-000", "tile02-TS-000"):
        record = records[record_id]
        png = verify.render_overlay(bundles[record.tile_id], record)
        (golden / f"overlay_{record_id}.png").write_bytes(png)
        print(f"wrote overlay_{record_id}.png ({len(png)} bytes)")


def bless_benchmarks():
    golden = FIXTURES / "golden"
    golden.mkdir(parents=True, exist_ok=True)
    for bench in ("base", "plus"):
        cfg = _config(bench)
        payload, manifest, _ = pipeline.generate(cfg)
        (golden / f"bench_{bench}.jsonl").write_bytes(payload)
        (golden / f"manifest_{bench}.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
        print(f"blessed bench_{bench}.jsonl "
              f"({manifest['record_count']} records)")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--bless", action="store_true",
                        help="freeze golden benchmark files from this build")
    args = parser.parse_args()

    (FIXTURES / "tiles").mkdir(parents=True, exist_ok=True)
    write_tile("tile01", *build_tile01())
    write_tile("tile02", *build_tile02())
    write_tile("tile03", *build_tile03())
    print("wrote tiles tile01..tile03")
    record_vlm_store()
    write_configs()
    write_overlays()
    if args.bless:
        bless_benchmarks()


if __name__ == "__main__":
    main()
