import numpy as np
import pytest

from heightqa.errors import ReviewError
from heightqa.taskgen import QARecord
from heightqa.verify import (
    ReviewStore,
    ReviewVerdict,
    agreement_report,
    kappa,
    kappa_from_rates,
    render_overlay,
    sample_for_review,
)

from conftest import FIXTURES


def _records(per_task: dict) -> list[QARecord]:
    records = []
    for task, n in per_task.items():
        level = {"ER": "pixel", "PI": "pixel", "SI": "pixel", "IE": "object",
                 "HR": "object", "PD": "scene", "TS": "scene", "CS": "scene",
                 "LI": "reasoning", "FI": "reasoning"}[task]
        for i in range(n):
            records.append(QARecord(
                id=f"t-{task}-{i:03d}", task=task, level=level, bench="plus",
                tile_id="t", question="q", answer="a", answer_value=None,
                mask=None, meta={}, provenance="template"))
    return records


# ---------------------------------------------------------------------------
# sample_for_review
# ---------------------------------------------------------------------------

def test_sampling_two_percent_of_equal_strata():
    records = _records({t: 100 for t in
                        ("ER", "PI", "SI", "IE", "HR", "PD", "TS", "CS", "LI", "FI")})
    items = sample_for_review(records, rate=0.02, seed=1)
    assert len(items) == 20
    per_task = {}
    for item in items:
        per_task[item.task] = per_task.get(item.task, 0) + 1
    assert set(per_task.values()) == {2}


def test_sampling_floor_to_one():
    records = _records({"ER": 10})
    items = sample_for_review(records, rate=0.02, seed=1)
    assert len(items) == 1


def test_sampling_round_half_up():
    # 75 * 0.02 = 1.5 rounds up to 2.
    records = _records({"ER": 75})
    assert len(sample_for_review(records, rate=0.02, seed=3)) == 2


def test_sampling_deterministic():
    records = _records({"ER": 50, "TS": 50})
    a = [i.record_id for i in sample_for_review(records, 0.1, seed=5)]
    b = [i.record_id for i in sample_for_review(records, 0.1, seed=5)]
    assert a == b
    c = [i.record_id for i in sample_for_review(records, 0.1, seed=6)]
    assert a != c


def test_sampling_subset_of_benchmark_ids():
    records = _records({"ER": 30, "HR": 7})
    items = sample_for_review(records, 0.2, seed=2)
    ids = {r.id for r in records}
    assert all(i.record_id in ids for i in items)


def test_sampling_empty_benchmark_rejected():
    with pytest.raises(ReviewError):
        sample_for_review([], 0.02, 1)


def test_sampling_bad_rate_rejected():
    with pytest.raises(ReviewError):
        sample_for_review(_records({"ER": 5}), 0.0, 1)


# ---------------------------------------------------------------------------
# overlays
# ---------------------------------------------------------------------------

def test_overlay_matches_committed_golden(bundles_by_id, plus_records):
    by_id = {r.id: r for r in plus_records}
    for record_id in ("tile01-IE-000", "tile02-TS-000"):
        record = by_id[record_id]
        png = render_overlay(bundles_by_id[record.tile_id], record)
        golden = (FIXTURES / "golden" / f"overlay_{record_id}.png").read_bytes()
        assert png == golden


def test_overlay_deterministic(bundles_by_id, plus_records):
    record = next(r for r in plus_records if r.id == "tile03-CS-000")
    bundle = bundles_by_id["tile03"]
    assert render_overlay(bundle, record) == render_overlay(bundle, record)


def test_overlay_empty_mask_equals_base(bundles_by_id, plus_records):
    import dataclasses

    from heightqa.rle import encode_rle

    record = next(r for r in plus_records if r.id == "tile01-IE-000")
    bundle = bundles_by_id["tile01"]
    empty = dataclasses.replace(
        record, mask=encode_rle(np.zeros((64, 64), dtype=bool)))
    no_mask = dataclasses.replace(record, mask=None)
    assert render_overlay(bundle, empty) == render_overlay(bundle, no_mask)


def test_overlay_full_mask_blends_every_pixel(bundles_by_id, plus_records):
    import dataclasses

    from heightqa.rle import encode_rle

    record = next(r for r in plus_records if r.id == "tile01-IE-000")
    bundle = bundles_by_id["tile01"]
    full = dataclasses.replace(
        record, mask=encode_rle(np.ones((64, 64), dtype=bool)))
    none = dataclasses.replace(record, mask=None)
    assert render_overlay(bundle, full) != render_overlay(bundle, none)


# ---------------------------------------------------------------------------
# verdict store
# ---------------------------------------------------------------------------

def _store(tmp_path=None, n=4, roster=("r1", "r2", "r3")):
    records = _records({"ER": n})
    items = sample_for_review(records, rate=1.0, seed=1)
    log = None if tmp_path is None else tmp_path / "verdicts.jsonl"
    return ReviewStore(items, roster=list(roster), log_path=log)


def test_next_item_oldest_unjudged():
    store = _store()
    first = store.next_item("r1")
    assert first.record_id == store.items[0].record_id
    store.submit(ReviewVerdict(first.record_id, "r1", "correct"))
    assert store.next_item("r1").record_id == store.items[1].record_id
    # Another reviewer still gets the first item.
    assert store.next_item("r2").record_id == first.record_id


def test_idempotent_resubmission():
    store = _store()
    v = ReviewVerdict("t-ER-000", "r1", "correct", note="fine")
    assert store.submit(v) == "stored"
    assert store.submit(ReviewVerdict("t-ER-000", "r1", "correct", note="fine")) \
        == "duplicate"
    assert len(store.verdicts()) == 1


def test_conflicting_resubmission_rejected():
    store = _store()
    store.submit(ReviewVerdict("t-ER-000", "r1", "correct"))
    with pytest.raises(ReviewError, match="conflicting"):
        store.submit(ReviewVerdict("t-ER-000", "r1", "incorrect"))


def test_two_reviewers_complete_item():
    store = _store()
    assert store.status("t-ER-000") == "pending"
    store.submit(ReviewVerdict("t-ER-000", "r1", "correct"))
    assert store.status("t-ER-000") == "partially_reviewed"
    store.submit(ReviewVerdict("t-ER-000", "r2", "correct"))
    assert store.status("t-ER-000") == "complete"
    # A third reviewer no longer sees the completed item.
    nxt = store.next_item("r3")
    assert nxt.record_id != "t-ER-000"


def test_unknown_reviewer_and_record():
    store = _store()
    with pytest.raises(ReviewError, match="unknown reviewer"):
        store.next_item("ghost")
    with pytest.raises(ReviewError, match="unknown record"):
        store.submit(ReviewVerdict("nope", "r1", "correct"))


def test_log_replay_reconstructs_state(tmp_path):
    store = _store(tmp_path)
    store.submit(ReviewVerdict("t-ER-000", "r1", "correct"))
    store.submit(ReviewVerdict("t-ER-000", "r2", "incorrect", note="off"))
    store.submit(ReviewVerdict("t-ER-001", "r1", "ambiguous"))

    fresh = _store()  # no log attached
    applied = fresh.replay_log(tmp_path / "verdicts.jsonl")
    assert applied == 3
    assert fresh.progress() == store.progress()
    assert [v.to_json() for v in fresh.verdicts()] == \
        [v.to_json() for v in store.verdicts()]


def test_roster_must_cover_required_verdicts():
    records = _records({"ER": 2})
    items = sample_for_review(records, 1.0, 1)
    with pytest.raises(ReviewError):
        ReviewStore(items, roster=["only-one"])


# ---------------------------------------------------------------------------
# kappa
# ---------------------------------------------------------------------------

def test_kappa_identical_vectors():
    assert kappa(["correct"] * 5 + ["incorrect"] * 5,
                 ["correct"] * 5 + ["incorrect"] * 5)["kappa"] == 1.0


def test_kappa_symmetry():
    rng = np.random.default_rng(4)
    cats = ["correct", "incorrect", "ambiguous"]
    a = [cats[i] for i in rng.integers(0, 3, size=40)]
    b = [cats[i] for i in rng.integers(0, 3, size=40)]
    assert kappa(a, b)["kappa"] == pytest.approx(kappa(b, a)["kappa"])


def test_kappa_hand_computed_confusion_fixture():
    # 8/10 observed agreement, marginals (6,4) vs (7,3):
    # pe = 0.6*0.7 + 0.4*0.3 = 0.54, kappa = (0.8-0.54)/0.46 = 0.5652...
    stats = kappa_from_rates(0.8, [6, 4, 0], [7, 3, 0])
    assert stats["pe"] == pytest.approx(0.54)
    assert stats["kappa"] == pytest.approx(0.565, abs=1e-3)


def test_kappa_degenerate_marginals():
    stats = kappa(["correct"] * 4, ["correct"] * 4)
    assert stats["degenerate"] and stats["kappa"] == 1.0
    mixed = kappa_from_rates(0.9, [1, 0, 0], [1, 0, 0])
    assert mixed["degenerate"] and mixed["kappa"] == 0.0


def test_kappa_independent_vectors_near_zero():
    rng = np.random.default_rng(123)
    cats = ["correct", "incorrect", "ambiguous"]
    n = 10_000
    a = [cats[i] for i in rng.integers(0, 3, size=n)]
    b = [cats[i] for i in rng.integers(0, 3, size=n)]
    assert abs(kappa(a, b)["kappa"]) < 0.1


def test_kappa_no_overlap_rejected():
    with pytest.raises(ReviewError):
        kappa([], [])


# ---------------------------------------------------------------------------
# agreement_report
# ---------------------------------------------------------------------------

def test_agreement_all_correct():
    store = _store(n=3, roster=("r1", "r2"))
    for item in store.items:
        store.submit(ReviewVerdict(item.record_id, "r1", "correct"))
        store.submit(ReviewVerdict(item.record_id, "r2", "correct"))
    report = agreement_report(store)
    assert report["precision_estimate"] == 1.0
    assert report["flagged_records"] == []
    assert "warning" not in report
    assert report["kappa_per_pair"]["r1|r2"] == 1.0


def test_agreement_flags_conflicts():
    store = _store(n=3, roster=("r1", "r2"))
    verdicts = {"t-ER-000": ("correct", "correct"),
                "t-ER-001": ("correct", "incorrect"),
                "t-ER-002": ("ambiguous", "ambiguous")}
    for rid, (va, vb) in verdicts.items():
        store.submit(ReviewVerdict(rid, "r1", va))
        store.submit(ReviewVerdict(rid, "r2", vb))
    report = agreement_report(store)
    assert report["flagged_records"] == ["t-ER-001"]
    assert report["precision_estimate"] == pytest.approx(1 / 3)


def test_agreement_hand_tally_fixture():
    store = _store(n=4, roster=("r1", "r2"))
    table = [("correct", "correct"), ("correct", "correct"),
             ("incorrect", "incorrect"), ("correct", "ambiguous")]
    for item, (va, vb) in zip(store.items, table):
        store.submit(ReviewVerdict(item.record_id, "r1", va))
        store.submit(ReviewVerdict(item.record_id, "r2", vb))
    report = agreement_report(store)
    # Hand tally: 2 all-correct of 4; flags = incorrect pair + split pair.
    assert report["precision_estimate"] == 0.5
    assert len(report["flagged_records"]) == 2
    # po = 3/4; marginals r1 (3,1,0)/4, r2 (2,1,1)/4 -> pe = 6/16+1/16+0 = 0.4375
    expected = (0.75 - 0.4375) / (1 - 0.4375)
    assert report["kappa_per_pair"]["r1|r2"] == pytest.approx(expected)


def test_agreement_incomplete_warns():
    store = _store(n=2, roster=("r1", "r2"))
    store.submit(ReviewVerdict("t-ER-000", "r1", "correct"))
    report = agreement_report(store)
    assert "warning" in report
