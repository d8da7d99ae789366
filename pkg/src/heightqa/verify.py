"""Human verification stage: stratified sampling, mask overlays, the verdict
store behind the review API, and inter-rater agreement statistics.

Verdicts are append-only; the JSONL log replays into identical store state,
which is also the crash-recovery path.
"""

from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ReviewError
from .raster import TileBundle
from .rle import decode_rle
from .rng import SplitMix64, stream_key
from .taskgen import TASK_ORDER, QARecord
from .terrain import slope_aspect_grids
from .pngio import encode_png_rgb

DEFAULT_RATE = 0.02
VERDICTS = ("correct", "incorrect", "ambiguous")
OVERLAY_COLOR = (255, 64, 32)   # highlight for mask cells
OVERLAY_ALPHA = 0.4


@dataclass
class ReviewItem:
    record_id: str
    tile_id: str
    task: str
    question: str
    answer: str
    overlay_image_ref: str
    assigned_reviewers: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"record_id": self.record_id, "tile_id": self.tile_id,
                "task": self.task, "question": self.question,
                "answer": self.answer,
                "overlay_image_ref": self.overlay_image_ref,
                "assigned_reviewers": list(self.assigned_reviewers)}


def sample_for_review(records: list[QARecord], rate: float = DEFAULT_RATE,
                      seed: int = 0) -> list[ReviewItem]:
    """Per-task stratified sample: max(1, round(rate * stratum size)) items.

    Rounding is half-up; selection within each stratum is seeded and
    deterministic.
    """
    if not records:
        raise ReviewError("cannot sample an empty benchmark")
    if not (0 < rate <= 1):
        raise ReviewError(f"rate must be in (0, 1], got {rate}")
    strata: dict[str, list[QARecord]] = {}
    for record in records:
        strata.setdefault(record.task, []).append(record)
    items: list[ReviewItem] = []
    for task in TASK_ORDER:
        stratum = strata.get(task)
        if not stratum:
            continue
        stratum = sorted(stratum, key=lambda r: r.id)
        count = max(1, math.floor(rate * len(stratum) + 0.5))
        stream = SplitMix64(stream_key(seed, "review", task))
        for record in sorted(stream.sample(stratum, count), key=lambda r: r.id):
            items.append(ReviewItem(
                record_id=record.id, tile_id=record.tile_id, task=record.task,
                question=record.question, answer=record.answer,
                overlay_image_ref=f"/overlays/{record.id}"))
    return items


# ---------------------------------------------------------------------------
# Overlay rendering
# ---------------------------------------------------------------------------

def _hillshade(slope_deg: np.ndarray, aspect_deg: np.ndarray,
               window_ok: np.ndarray) -> np.ndarray:
    """Classic illumination from azimuth 315, altitude 45; uint8 grayscale."""
    az = math.radians(315.0)
    alt = math.radians(45.0)
    slope = np.radians(slope_deg)
    aspect = np.radians(aspect_deg)
    shade = (np.sin(alt) * np.cos(slope)
             + np.cos(alt) * np.sin(slope) * np.cos(az - aspect))
    shade = np.clip(shade, 0.0, 1.0)
    shade = np.where(window_ok, shade, 0.0)
    return np.round(shade * 255.0).astype(np.uint8)


def render_overlay(bundle: TileBundle, record: QARecord) -> bytes:
    """PNG of the scene with the ground-truth mask alpha-blended on top.

    Uses the RGB bands when present, a DEM hillshade otherwise; output bytes
    are deterministic for fixed inputs.
    """
    if bundle.rgb is not None:
        base = np.stack([np.clip(band.values, 0, 255) for band in bundle.rgb],
                        axis=2).astype(np.float64)
    else:
        slope, aspect, _, window_ok = slope_aspect_grids(bundle.dem)
        gray = _hillshade(slope, aspect, window_ok)
        base = np.stack([gray, gray, gray], axis=2).astype(np.float64)

    if record.mask is not None:
        mask = decode_rle(record.mask)
        color = np.array(OVERLAY_COLOR, dtype=np.float64)
        blended = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * color
        base = np.where(mask[:, :, None], blended, base)
    return encode_png_rgb(np.round(base).astype(np.uint8))


# ---------------------------------------------------------------------------
# Verdict store
# ---------------------------------------------------------------------------

@dataclass
class ReviewVerdict:
    record_id: str
    reviewer_id: str
    verdict: str
    note: str = ""
    timestamp: float = 0.0

    def to_json(self) -> dict:
        return {"record_id": self.record_id, "reviewer_id": self.reviewer_id,
                "verdict": self.verdict, "note": self.note,
                "timestamp": self.timestamp}

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewVerdict":
        return cls(record_id=obj["record_id"], reviewer_id=obj["reviewer_id"],
                   verdict=obj["verdict"], note=obj.get("note", ""),
                   timestamp=float(obj.get("timestamp", 0.0)))


class ReviewStore:
    """In-memory review state with an append-only JSONL verdict log.

    An item is complete once two distinct reviewers have judged it; a
    reviewer never sees an item twice. Identical re-submission is accepted
    idempotently, a conflicting one is rejected.
    """

    def __init__(self, items: list[ReviewItem], roster: list[str],
                 log_path=None, required_verdicts: int = 2):
        if len(roster) < required_verdicts:
            raise ReviewError(
                f"roster of {len(roster)} cannot produce {required_verdicts} "
                "independent verdicts per item")
        self.items = list(items)
        self.roster = list(roster)
        self.required = required_verdicts
        self.log_path = log_path
        self._lock = threading.Lock()
        self._verdicts: dict[tuple[str, str], ReviewVerdict] = {}
        self._by_item: dict[str, list[ReviewVerdict]] = {i.record_id: [] for i in self.items}
        for item in self.items:
            item.assigned_reviewers = list(roster)

    # -- queries ----------------------------------------------------------

    def item(self, record_id: str) -> ReviewItem | None:
        return next((i for i in self.items if i.record_id == record_id), None)

    def status(self, record_id: str) -> str:
        n = len({v.reviewer_id for v in self._by_item.get(record_id, [])})
        if n >= self.required:
            return "complete"
        return "partially_reviewed" if n > 0 else "pending"

    def next_item(self, reviewer_id: str) -> ReviewItem | None:
        if reviewer_id not in self.roster:
            raise ReviewError(f"unknown reviewer {reviewer_id!r}")
        for item in self.items:  # oldest first: sample order
            if self.status(item.record_id) == "complete":
                continue
            if (item.record_id, reviewer_id) in self._verdicts:
                continue
            return item
        return None

    def progress(self) -> dict:
        counts = {"pending": 0, "partially_reviewed": 0, "complete": 0}
        for item in self.items:
            counts[self.status(item.record_id)] += 1
        counts["total"] = len(self.items)
        counts["verdicts"] = len(self._verdicts)
        return counts

    def verdicts(self) -> list[ReviewVerdict]:
        out = []
        for item in self.items:
            out.extend(self._by_item[item.record_id])
        return out

    # -- mutation ---------------------------------------------------------

    def submit(self, verdict: ReviewVerdict) -> str:
        """Returns "stored" or "duplicate"; conflicts and unknowns raise."""
        if verdict.reviewer_id not in self.roster:
            raise ReviewError(f"unknown reviewer {verdict.reviewer_id!r}")
        if verdict.record_id not in self._by_item:
            raise ReviewError(f"unknown record {verdict.record_id!r}")
        if verdict.verdict not in VERDICTS:
            raise ReviewError(f"verdict must be one of {VERDICTS}")
        key = (verdict.record_id, verdict.reviewer_id)
        with self._lock:
            existing = self._verdicts.get(key)
            if existing is not None:
                if (existing.verdict, existing.note) == (verdict.verdict, verdict.note):
                    return "duplicate"
                raise ReviewError(
                    f"conflicting verdict for {key}: {existing.verdict!r} "
                    f"already recorded, got {verdict.verdict!r}")
            if not verdict.timestamp:
                verdict.timestamp = time.time()
            self._verdicts[key] = verdict
            self._by_item[verdict.record_id].append(verdict)
            if self.log_path is not None:
                with open(self.log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(verdict.to_json(), ensure_ascii=False) + "\n")
        return "stored"

    def replay_log(self, path) -> int:
        """Rebuild state from a verdict log; returns the number applied."""
        applied = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    self.submit(ReviewVerdict.from_json(json.loads(line)))
                    applied += 1
        return applied


# ---------------------------------------------------------------------------
# Agreement statistics
# ---------------------------------------------------------------------------

def kappa_from_rates(observed_agreement: float, marginals_a, marginals_b) -> dict:
    """Chance-corrected agreement from an observed rate and rater marginals.

    marginals are per-category probabilities (or counts, normalized here).
    Degenerate chance agreement of 1 maps to kappa 1 when observation is
    also perfect, else 0, and is flagged.
    """
    a = np.asarray(marginals_a, dtype=np.float64)
    b = np.asarray(marginals_b, dtype=np.float64)
    if a.sum() <= 0 or b.sum() <= 0:
        raise ReviewError("marginals must have positive mass")
    a = a / a.sum()
    b = b / b.sum()
    pe = float((a * b).sum())
    po = float(observed_agreement)
    if pe == 1.0:
        return {"kappa": 1.0 if po == 1.0 else 0.0, "po": po, "pe": pe,
                "degenerate": True}
    return {"kappa": (po - pe) / (1.0 - pe), "po": po, "pe": pe,
            "degenerate": False}


def kappa(verdicts_a: list[str], verdicts_b: list[str]) -> dict:
    """Cohen's kappa over paired verdict vectors (3 categories)."""
    if len(verdicts_a) != len(verdicts_b):
        raise ReviewError("verdict vectors differ in length")
    if not verdicts_a:
        raise ReviewError("no jointly reviewed items")
    n = len(verdicts_a)
    po = sum(1 for x, y in zip(verdicts_a, verdicts_b) if x == y) / n
    marg_a = [sum(1 for v in verdicts_a if v == c) for c in VERDICTS]
    marg_b = [sum(1 for v in verdicts_b if v == c) for c in VERDICTS]
    return kappa_from_rates(po, marg_a, marg_b)


def agreement_report(store: ReviewStore) -> dict:
    """Precision estimate, per-pair kappa and flagged records.

    Emitted even on incomplete reviews, with a completeness warning.
    """
    incomplete = [i.record_id for i in store.items
                  if store.status(i.record_id) != "complete"]
    all_correct = 0
    flagged = []
    per_reviewer: dict[str, dict[str, str]] = {}
    for item in store.items:
        verdicts = store._by_item[item.record_id]
        values = [v.verdict for v in verdicts]
        for v in verdicts:
            per_reviewer.setdefault(v.reviewer_id, {})[v.record_id] = v.verdict
        if values and all(v == "correct" for v in values):
            all_correct += 1
        if "incorrect" in values or len(set(values)) > 1:
            flagged.append(item.record_id)

    kappa_per_pair = {}
    reviewers = sorted(per_reviewer)
    for i, ra in enumerate(reviewers):
        for rb in reviewers[i + 1:]:
            shared = sorted(set(per_reviewer[ra]) & set(per_reviewer[rb]))
            if shared:
                stats = kappa([per_reviewer[ra][r] for r in shared],
                              [per_reviewer[rb][r] for r in shared])
                kappa_per_pair[f"{ra}|{rb}"] = stats["kappa"]

    report = {
        "precision_estimate": all_correct / len(store.items) if store.items else 0.0,
        "kappa_per_pair": kappa_per_pair,
        "flagged_records": sorted(flagged),
        "items": len(store.items),
    }
    if incomplete:
        report["warning"] = f"review incomplete for {len(incomplete)} item(s)"
    return report
