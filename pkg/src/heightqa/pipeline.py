"""Tile loading and end-to-end benchmark assembly.

Tile layout on disk: one directory per tile holding ``height``, ``dem`` and
``categories`` rasters (.ghr or .tif), a ``legend.json`` id->name table and
optional ``rgb.r/.g/.b.ghr`` bands. Outputs are written atomically
(temp + rename) so a re-run never leaves a half-written benchmark behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from . import taskgen
from .config import PipelineConfig
from .errors import ConfigError, MissingLayerError
from .raster import TileBundle, assemble_bundle, parse_ghr, parse_tiff_subset
from .taskgen import QARecord, build_region_index, object_category_ids
from .vlm import make_client


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_raster(tile_dir: Path, stem: str, nodata: float):
    for suffix, parser in ((".ghr", parse_ghr), (".tif", None), (".tiff", None)):
        path = tile_dir / f"{stem}{suffix}"
        if path.exists():
            data = path.read_bytes()
            if parser is not None:
                return parser(data)
            return parse_tiff_subset(data, nodata=nodata)
    return None


def load_tile(tile_dir, nodata: float = -9999.0) -> TileBundle:
    tile_dir = Path(tile_dir)
    height = _load_raster(tile_dir, "height", nodata)
    dem = _load_raster(tile_dir, "dem", nodata)
    categories = _load_raster(tile_dir, "categories", nodata)
    legend_path = tile_dir / "legend.json"
    if not legend_path.exists():
        raise MissingLayerError(f"{tile_dir}: legend.json missing")
    legend = json.loads(legend_path.read_text(encoding="utf-8"))
    rgb = None
    bands = [tile_dir / f"rgb.{c}.ghr" for c in "rgb"]
    if all(b.exists() for b in bands):
        rgb = tuple(parse_ghr(b.read_bytes()) for b in bands)
    return assemble_bundle(tile_dir.name, height=height, dem=dem,
                           categories=categories, category_legend=legend,
                           rgb=rgb)


def load_tiles(tile_root) -> list[TileBundle]:
    root = Path(tile_root)
    if not root.is_dir():
        raise ConfigError(f"tile directory not found: {root}")
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not dirs:
        raise ConfigError(f"no tile directories under {root}")
    return [load_tile(d) for d in dirs]


def ingest(config: PipelineConfig) -> dict:
    """Validate every tile and persist its region metadata."""
    bundles = load_tiles(config.tile_dir)
    out_root = Path(config.out_dir) / "ingest"
    summary = {"tiles": []}
    for bundle in bundles:
        cids = object_category_ids(bundle, config.rules["object_categories"])
        index = build_region_index(bundle, cids,
                                   config.rules["connectivity"],
                                   config.rules["min_area_px"])
        payload = {
            "tile_id": bundle.tile_id,
            "width": bundle.width,
            "height": bundle.grid_height,
            "cell_size": bundle.cell_size,
            "legend": {str(k): v for k, v in sorted(bundle.category_legend.items())},
            "regions": {str(cid): [r.to_json() for r in entry.regions]
                        for cid, entry in index.by_category.items()},
        }
        atomic_write(out_root / f"{bundle.tile_id}.regions.json",
                     (json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
                     .encode("utf-8"))
        summary["tiles"].append({"tile_id": bundle.tile_id,
                                 "regions": {str(c): len(e.regions)
                                             for c, e in index.by_category.items()}})
    return summary


def generate_records(config: PipelineConfig, bundles: list[TileBundle],
                     vlm_client=None) -> tuple[list[QARecord], list]:
    """All records for the configured bench, plus the consistency traces."""
    taskgen.set_catalogue(config.templates)
    bench = config.bench
    seed = config.seed
    rules = config.rules
    counts = config.counts
    needs_vlm = counts.get("PD", 0) > 0
    if needs_vlm and vlm_client is None:
        if config.vlm is None:
            raise ConfigError("PD generation needs a vlm endpoint or replay store")
        vlm_client = make_client(config.vlm)

    records: list[QARecord] = []
    traces: list = []
    for bundle in bundles:
        cids = object_category_ids(bundle, rules["object_categories"])
        index = build_region_index(bundle, cids, rules["connectivity"],
                                   rules["min_area_px"])
        if counts.get("ER", 0):
            records += taskgen.gen_er(bundle, counts["ER"], seed, bench)
        if counts.get("PI", 0):
            records += taskgen.gen_pi(bundle, counts["PI"], seed, bench)
        if bench == "plus" and counts.get("SI", 0):
            records += taskgen.gen_si(bundle, counts["SI"], seed, bench)
        if counts.get("IE", 0):
            records += taskgen.gen_ie(bundle, index, counts["IE"], seed, bench)
        if counts.get("HR", 0):
            records += taskgen.gen_hr(bundle, index, rules["hr_k"], seed, bench,
                                      category=rules["hr_category"])
        if counts.get("PD", 0):
            pd_records, pd_traces = taskgen.gen_pd(bundle, index, vlm_client,
                                                   seed, bench,
                                                   k=rules.get("sc_k", 3))
            records += pd_records
            traces += pd_traces
        if counts.get("TS", 0):
            records += taskgen.gen_ts(bundle, index, seed, bench,
                                      quantiles=tuple(rules["ts_quantiles"]))
        if counts.get("CS", 0):
            records += taskgen.gen_cs(bundle, index, bench)
        if bench == "plus" and counts.get("LI", 0):
            records += taskgen.gen_li(bundle, rules, seed, bench)
        if bench == "plus" and counts.get("FI", 0):
            records += taskgen.gen_fi(bundle, rules, seed, bench)
    return records, traces


def generate(config: PipelineConfig, vlm_client=None):
    """Full generate stage: records -> (jsonl bytes, manifest, traces)."""
    bundles = load_tiles(config.tile_dir)
    records, traces = generate_records(config, bundles, vlm_client)
    payload, manifest = taskgen.assemble_benchmark(records, config.bench,
                                                   config.seed, config.rules)
    return payload, manifest, traces


def audit_benchmark(records: list[QARecord], bundles: list[TileBundle]) -> dict:
    """Re-derivation audit over every record; returns pass/fail ids."""
    by_tile = {b.tile_id: b for b in bundles}
    failures = [r.id for r in records
                if not taskgen.audit_record(r, by_tile[r.tile_id])]
    return {"total": len(records), "failed": failures,
            "passed": len(records) - len(failures)}
