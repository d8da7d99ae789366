"""Scoring of model submissions against a benchmark.

Numeric answers pass through rule-based extraction and an inclusive 20%
relative tolerance; ranking answers must reproduce the ground-truth order
exactly; open-ended answers go to a judge endpoint (or a recorded replay of
one). Mask quality is reported as mIoU (mean of per-pair IoU) and cIoU
(dataset-cumulative intersection over union).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SubmissionError
from .rle import MaskRLE, decode_rle
from .taskgen import MASK_TASKS, TASK_LEVELS, TASK_ORDER, QARecord
from .textparse import extract_int_sequence, extract_numeric

logger = logging.getLogger(__name__)

NUMERIC_TOL = 0.20        # inclusive relative tolerance
ZERO_ABS_EPS = 0.5        # absolute window when the ground truth is 0

LEVEL_ORDER = ("pixel", "object", "scene", "reasoning")
LEVEL_TITLES = {"pixel": "Pixel-level", "object": "Object-level",
                "scene": "Scene-level", "reasoning": "Reasoning-level"}

# Primary scored quantity for numeric-routed tasks with dict answer_value.
_NUMERIC_FIELD = {"PI": "height_m", "CS": "instance_count"}
_OPEN_TASKS = frozenset({"PD", "LI", "FI"})


def judge_numeric(pred: float, gt: float, tol: float = NUMERIC_TOL,
                  zero_abs_eps: float = ZERO_ABS_EPS) -> bool:
    """Inclusive relative-tolerance check; absolute window at gt == 0."""
    if gt == 0:
        return abs(pred) <= zero_abs_eps
    return abs(pred - gt) <= tol * abs(gt)


JUDGE_SYSTEM_PROMPT = (
    "You are an impartial grader of question answering about terrain and "
    "object heights. Compare the candidate answer with the reference answer "
    "for semantic accuracy and logical quality. Respond with exactly one "
    'JSON object of the form {"correct": true, "score": 87} where "correct" '
    "is a boolean and \"score\" is an integer from 0 to 100. No other text."
)

JUDGE_USER_TEMPLATE = (
    "Question:\n{question}\n\n"
    "Reference answer:\n{reference}\n\n"
    "Candidate answer:\n{candidate}\n\n"
    "Grade the candidate against the reference."
)


def build_judge_prompt(question: str, reference: str, candidate: str) -> tuple[str, str]:
    return JUDGE_SYSTEM_PROMPT, JUDGE_USER_TEMPLATE.format(
        question=question, reference=reference, candidate=candidate)


def judge_open(question: str, gt_answer: str, pred_answer: str, client) -> dict:
    """One judged item. Unparseable judge output marks the item unscored;
    an unreachable endpoint raises."""
    system, user = build_judge_prompt(question, gt_answer, pred_answer)
    raw = client.complete(system, user)
    try:
        obj = json.loads(raw.strip())
        correct = obj["correct"]
        score = obj["score"]
        if not isinstance(correct, bool) or isinstance(score, bool):
            raise ValueError("wrong field types")
        score = float(score)
        if not (0 <= score <= 100):
            raise ValueError("score out of range")
    except (ValueError, KeyError, TypeError) as exc:
        logger.warning("unparseable judge output (%s): %.80r", exc, raw)
        return {"unscored": True, "raw": raw}
    return {"correct": correct, "score": score, "raw": raw}


# ---------------------------------------------------------------------------
# Mask metrics
# ---------------------------------------------------------------------------

def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union; two empty masks count as a perfect match."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise SubmissionError(f"mask dims differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum()) / union


def aggregate_masks(pairs) -> dict:
    """mIoU and cIoU over (gt, pred) pairs; pred may be None (missing).

    A missing prediction scores IoU 0 and contributes intersection 0 with
    union |gt|. When the summed union is 0 the cumulative ratio is defined
    as the mean ratio, which keeps single-pair cIoU == mIoU.
    """
    pairs = list(pairs)
    if not pairs:
        raise SubmissionError("aggregate_masks needs at least one pair")
    per_pair = []
    inter_sum = 0
    union_sum = 0
    for gt, pred in pairs:
        gt = np.asarray(gt, dtype=bool)
        if pred is None:
            per_pair.append(0.0)
            union_sum += int(gt.sum())
            continue
        per_pair.append(iou(gt, pred))
        pred = np.asarray(pred, dtype=bool)
        inter_sum += int(np.logical_and(gt, pred).sum())
        union_sum += int(np.logical_or(gt, pred).sum())
    miou = float(np.mean(per_pair))
    ciou = inter_sum / union_sum if union_sum > 0 else miou
    return {"miou": miou, "ciou": float(ciou)}


# ---------------------------------------------------------------------------
# Submissions and the report
# ---------------------------------------------------------------------------

@dataclass
class Submission:
    model_name: str
    entries: dict[str, dict] = field(default_factory=dict)
    # entries: record_id -> {"answer_text": str, "mask": MaskRLE | None}


def load_submission(text: str, model_name: str = "submission") -> Submission:
    entries = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        mask = obj.get("mask")
        entries[obj["record_id"]] = {
            "answer_text": obj.get("answer_text", ""),
            "mask": MaskRLE.from_json(mask) if mask is not None else None,
        }
    return Submission(model_name=model_name, entries=entries)


def oracle_submission(records: list[QARecord], model_name: str = "oracle") -> Submission:
    """Answers and masks copied straight from the benchmark; the harness
    self-consistency reference point."""
    entries = {r.id: {"answer_text": r.answer, "mask": r.mask} for r in records}
    return Submission(model_name=model_name, entries=entries)


@dataclass
class EvalReport:
    model_name: str
    per_record: list[dict]
    per_task: dict[str, float]
    per_level: dict[str, float]
    mask_miou: dict[str, float]
    mask_ciou: dict[str, float]
    overall_text: float
    unscored: int

    def to_json(self) -> dict:
        return {
            "model_name": self.model_name,
            "aggregation": "overall_text is the unweighted mean of per-task accuracies",
            "overall_text": self.overall_text,
            "per_task": self.per_task,
            "per_level": self.per_level,
            "mask_miou": self.mask_miou,
            "mask_ciou": self.mask_ciou,
            "unscored": self.unscored,
            "per_record": self.per_record,
        }


def _route_numeric_gt(record: QARecord):
    if record.task in _NUMERIC_FIELD:
        return float(record.answer_value[_NUMERIC_FIELD[record.task]])
    return float(record.answer_value)


def _score_text(record: QARecord, answer_text: str, judge_client) -> dict:
    """Per-record text verdict: kind, correct (None = unscored), extras."""
    task = record.task
    if task == "HR":
        got = extract_int_sequence(answer_text)
        return {"kind": "ranking", "correct": got == list(record.answer_value),
                "extracted": got}
    if task in _OPEN_TASKS:
        if judge_client is None:
            return {"kind": "open", "correct": None, "extracted": None}
        verdict = judge_open(record.question, record.answer, answer_text, judge_client)
        if verdict.get("unscored"):
            return {"kind": "open", "correct": None, "extracted": None,
                    "judge_raw": verdict["raw"]}
        return {"kind": "open", "correct": bool(verdict["correct"]),
                "extracted": verdict["score"], "judge_raw": verdict["raw"]}
    if task == "SI" and record.answer_value.get("flat"):
        return {"kind": "keyword", "correct": "flat" in answer_text.lower(),
                "extracted": None}
    gt = _route_numeric_gt(record) if task != "SI" else float(
        record.answer_value["slope_deg"])
    pred = extract_numeric(answer_text)
    correct = pred is not None and judge_numeric(pred, gt)
    return {"kind": "numeric", "correct": correct, "extracted": pred}


def score_submission(benchmark: list[QARecord], submission: Submission,
                     judge_client=None) -> EvalReport:
    """Score every benchmark record; missing entries score 0.

    Open-ended items with no judge available (or unparseable judge output)
    are excluded from accuracy and counted as unscored.
    """
    known = {r.id for r in benchmark}
    unknown = sorted(set(submission.entries) - known)
    if unknown:
        raise SubmissionError(f"submission references unknown record ids: {unknown[:5]}")

    per_record = []
    text_outcomes: dict[str, list] = {}
    mask_pairs: dict[str, list] = {}
    unscored = 0

    for record in sorted(benchmark, key=lambda r: r.id):
        entry = submission.entries.get(record.id)
        if entry is None:
            verdict = {"kind": "missing", "correct": False, "extracted": None}
        else:
            verdict = _score_text(record, entry["answer_text"], judge_client)
        if verdict["correct"] is None:
            unscored += 1
        else:
            text_outcomes.setdefault(record.task, []).append(bool(verdict["correct"]))

        row = {"record_id": record.id, "task": record.task, **verdict}
        if record.task in MASK_TASKS:
            gt_mask = decode_rle(record.mask)
            pred_rle = entry["mask"] if entry else None
            pred_mask = decode_rle(pred_rle) if pred_rle is not None else None
            pair_iou = iou(gt_mask, pred_mask) if pred_mask is not None else 0.0
            row["iou"] = pair_iou
            mask_pairs.setdefault(record.task, []).append((gt_mask, pred_mask))
        per_record.append(row)

    per_task = {task: 100.0 * sum(flags) / len(flags)
                for task, flags in sorted(text_outcomes.items(),
                                          key=lambda kv: TASK_ORDER.index(kv[0]))}
    per_level: dict[str, float] = {}
    for level in LEVEL_ORDER:
        accs = [a for t, a in per_task.items() if TASK_LEVELS[t] == level]
        if accs:
            per_level[level] = float(np.mean(accs))
    overall = float(np.mean(list(per_task.values()))) if per_task else 0.0

    mask_miou: dict[str, float] = {}
    mask_ciou: dict[str, float] = {}
    all_pairs = []
    for task in TASK_ORDER:
        if task in mask_pairs:
            agg = aggregate_masks(mask_pairs[task])
            mask_miou[task] = 100.0 * agg["miou"]
            mask_ciou[task] = 100.0 * agg["ciou"]
            all_pairs.extend(mask_pairs[task])
    if all_pairs:
        agg = aggregate_masks(all_pairs)
        mask_miou["overall"] = 100.0 * agg["miou"]
        mask_ciou["overall"] = 100.0 * agg["ciou"]

    return EvalReport(model_name=submission.model_name, per_record=per_record,
                      per_task=per_task, per_level=per_level,
                      mask_miou=mask_miou, mask_ciou=mask_ciou,
                      overall_text=overall, unscored=unscored)


def render_table(report: EvalReport) -> str:
    """Plain-text table: tasks grouped by level, Overall last."""
    lines = [f"Model: {report.model_name}",
             "Text accuracy (%) by task; Overall = unweighted task mean.", ""]
    for level in LEVEL_ORDER:
        tasks = [t for t in TASK_ORDER
                 if TASK_LEVELS[t] == level and t in report.per_task]
        if not tasks:
            continue
        cells = "  ".join(f"{t} {report.per_task[t]:6.2f}" for t in tasks)
        lines.append(f"  {LEVEL_TITLES[level]:<16} {cells}")
    lines.append(f"  {'Overall':<16} {report.overall_text:6.2f}")
    if report.mask_miou:
        lines += ["", "Mask metrics (%):", f"  {'task':<8}{'mIoU':>8}{'cIoU':>8}"]
        for task in [*TASK_ORDER, "overall"]:
            if task in report.mask_miou:
                lines.append(f"  {task:<8}{report.mask_miou[task]:>8.2f}"
                             f"{report.mask_ciou[task]:>8.2f}")
    lines.append("")
    lines.append(f"Unscored (no judge verdict): {report.unscored}")
    return "\n".join(lines) + "\n"
