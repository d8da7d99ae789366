import itertools
import json

import pytest

from heightqa.errors import (
    EndpointError,
    ExhaustedRetriesError,
    MalformedResponseError,
    TemplateError,
)
from heightqa.vlm import (
    EndpointConfig,
    HttpChatClient,
    RecordingClient,
    ReplayClient,
    build_prompts,
    prompt_key,
    run_self_consistency,
    sanitize,
    self_consistency_filter,
)

from conftest import FIXTURES


# ---------------------------------------------------------------------------
# build_prompts
# ---------------------------------------------------------------------------

TEMPLATES = {
    "system": "Be precise.",
    "variants": [
        "Describe the scene from: {stats_block}",
        "Summarize these figures: {stats_block}",
        "Report the height profile given {stats_block}",
    ],
}


def test_every_variant_embeds_every_number():
    meta = {"stats_block": "building: mean 11.2 m"}
    spec = build_prompts(meta, TEMPLATES, k=3)
    assert spec.k == 3
    assert all("11.2" in v for v in spec.user_variants)


def test_too_few_templates_rejected():
    short = {"system": "", "variants": TEMPLATES["variants"][:2]}
    with pytest.raises(TemplateError, match="paraphrases"):
        build_prompts({"stats_block": "x"}, short, k=3)


def test_missing_metadata_field_rejected():
    bad = {"system": "", "variants": ["a {nope}", "b {nope}", "c {nope}"]}
    with pytest.raises(TemplateError):
        build_prompts({"stats_block": "x"}, bad, k=3)


def test_same_meta_identical_promptspec():
    meta = {"stats_block": "tree: mean 9.0 m"}
    assert build_prompts(meta, TEMPLATES, 3) == build_prompts(meta, TEMPLATES, 3)


def test_k_below_three_rejected():
    with pytest.raises(TemplateError):
        build_prompts({"stats_block": "x"}, TEMPLATES, k=2)


# ---------------------------------------------------------------------------
# sanitize: golden pairs and the 50-case idempotence fixture
# ---------------------------------------------------------------------------

def _cases():
    return json.loads((FIXTURES / "sanitize_cases.json").read_text())


def test_sanitize_golden_fixture():
    for case in _cases()["golden"]:
        assert sanitize(case["input"]) == case["expected"], case["input"]


def test_sanitize_idempotent_on_fixture():
    cases = _cases()["idempotence"]
    assert len(cases) == 50
    for text in cases:
        once = sanitize(text)
        assert sanitize(once) == once, text


def test_sanitize_identity_without_hedges():
    assert sanitize("The area is flat.") == "The area is flat."


def test_sanitize_empty():
    assert sanitize("") == ""


# ---------------------------------------------------------------------------
# self_consistency_filter: numeric
# ---------------------------------------------------------------------------

def test_numeric_majority_cluster_median():
    trace = self_consistency_filter(["12.3 m", "12.4 m", "80 m"], "numeric")
    assert trace.accepted
    assert trace.verdict["answer"] == pytest.approx(12.35)


def test_numeric_three_way_disagreement_rejected():
    trace = self_consistency_filter(["1 m", "50 m", "900 m"], "numeric")
    assert not trace.accepted
    assert trace.verdict["reason"] == "no majority"


def test_numeric_identical_responses_accepted():
    trace = self_consistency_filter(["7.0 m"] * 3, "numeric")
    assert trace.accepted
    assert trace.verdict["answer"] == 7.0


def test_numeric_no_numbers_rejected():
    trace = self_consistency_filter(["none", "nothing", "nada"], "numeric")
    assert not trace.accepted


def test_numeric_exhaustive_k3_pattern_table():
    # Three well-separated value classes; every assignment of the three
    # responses to classes must accept exactly when one class holds a
    # strict majority, with the class median as the answer.
    values = {"A": 10.0, "B": 100.0, "C": 1000.0}
    for pattern in itertools.product("ABC", repeat=3):
        responses = [f"about {values[p]} m" for p in pattern]
        trace = self_consistency_filter(responses, "numeric")
        counts = {c: pattern.count(c) for c in "ABC"}
        top = max(counts.values())
        if top >= 2:
            winner = next(c for c in "ABC" if counts[c] == top)
            assert trace.accepted, pattern
            assert trace.verdict["answer"] == values[winner]
        else:
            assert not trace.accepted, pattern


def test_permutation_invariance_numeric():
    base = ["12.3 m", "12.4 m", "80 m"]
    verdicts = set()
    for perm in itertools.permutations(base):
        trace = self_consistency_filter(list(perm), "numeric")
        verdicts.add((trace.verdict["status"], trace.verdict.get("answer")))
    assert len(verdicts) == 1


def test_acceptance_monotone_in_majority_duplicates():
    responses = ["12.3 m", "12.4 m", "80 m"]
    trace = self_consistency_filter(responses, "numeric")
    assert trace.accepted
    answer = trace.verdict["answer"]
    grown = responses + [f"{answer} m"]
    trace2 = self_consistency_filter(grown, "numeric")
    assert trace2.accepted


# ---------------------------------------------------------------------------
# self_consistency_filter: descriptive
# ---------------------------------------------------------------------------

def test_descriptive_majority_by_category_multiset():
    names = ["building", "tree"]
    responses = [
        "It seems buildings rise above the trees.",
        "Buildings stand taller than the trees here.",
        "Only water is visible.",
    ]
    trace = self_consistency_filter(responses, "descriptive", category_names=names)
    assert trace.accepted
    # Earliest member of the majority group, sanitized.
    assert trace.verdict["answer"] == "Buildings rise above the trees."


def test_descriptive_no_agreement_rejected():
    names = ["building", "tree", "water"]
    responses = ["Buildings only.", "Trees only.", "Water only."]
    trace = self_consistency_filter(responses, "descriptive", category_names=names)
    assert not trace.accepted


def test_descriptive_permutation_invariant_on_acceptance():
    names = ["building"]
    base = ["A building.", "One building.", "No structures."]
    statuses = {self_consistency_filter(list(p), "descriptive",
                                        category_names=names).verdict["status"]
                for p in itertools.permutations(base)}
    assert statuses == {"accepted"}


def test_filter_requires_k_of_three():
    with pytest.raises(ValueError):
        self_consistency_filter(["a", "b"], "numeric")


def test_trace_has_raw_and_normalized():
    trace = self_consistency_filter(["12 m", "12 m", "12 m"], "numeric",
                                    trace_key="t")
    assert len(trace.raw_responses) == 3
    assert len(trace.normalized) == 3
    assert trace.trace_id


# ---------------------------------------------------------------------------
# Endpoint clients
# ---------------------------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests
            raise requests.HTTPError(f"status {self.status_code}")


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def _cfg():
    return EndpointConfig(url="http://endpoint.test/v1/chat", model="m")


def _chat_payload(text):
    return {"choices": [{"message": {"content": text}}]}


def test_stub_endpoint_returns_canned_text():
    session = FakeSession([FakeResponse(payload=_chat_payload("canned"))])
    client = HttpChatClient(_cfg(), session=session, sleeper=lambda s: None)
    assert client.complete("sys", "user") == "canned"
    assert session.calls == 1


def test_http_500_thrice_exhausts_retries():
    session = FakeSession([FakeResponse(500), FakeResponse(500), FakeResponse(500)])
    client = HttpChatClient(_cfg(), session=session, sleeper=lambda s: None)
    with pytest.raises(ExhaustedRetriesError):
        client.complete("sys", "user")
    assert session.calls == 3


def test_transient_failure_then_success():
    session = FakeSession([FakeResponse(500),
                           FakeResponse(payload=_chat_payload("ok"))])
    client = HttpChatClient(_cfg(), session=session, sleeper=lambda s: None)
    assert client.complete("sys", "user") == "ok"
    assert session.calls == 2


def test_missing_text_field_is_malformed():
    session = FakeSession([FakeResponse(payload={"choices": []})])
    client = HttpChatClient(_cfg(), session=session, sleeper=lambda s: None)
    with pytest.raises(MalformedResponseError):
        client.complete("sys", "user")


def test_replay_client_never_touches_network(monkeypatch):
    import requests

    def boom(*args, **kwargs):
        raise AssertionError("network call in replay mode")

    monkeypatch.setattr(requests.Session, "post", boom)
    monkeypatch.setattr(requests, "post", boom)
    store = {prompt_key("s", "u1"): "12 m", prompt_key("s", "u2"): "12 m",
             prompt_key("s", "u3"): "12 m"}
    client = ReplayClient(store)

    class Prompts:
        system_prompt = "s"
        user_variants = ("u1", "u2", "u3")
        image_ref = None
        k = 3

    trace = run_self_consistency(Prompts(), client, "numeric")
    assert trace.accepted and trace.verdict["answer"] == 12.0


def test_replay_client_missing_key_errors():
    client = ReplayClient({})
    with pytest.raises(EndpointError, match="no recorded response"):
        client.complete("s", "u")


def test_recording_client_appends_store(tmp_path):
    class Inner:
        def complete(self, system, user, image_b64=None):
            return f"echo:{user}"

    path = tmp_path / "store.jsonl"
    client = RecordingClient(Inner(), path)
    assert client.complete("s", "hello") == "echo:hello"
    loaded = ReplayClient.load(path)
    assert loaded.complete("s", "hello") == "echo:hello"
