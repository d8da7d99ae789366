"""Prompt construction, response hygiene and self-consistency filtering for
the external vision-language endpoint.

The endpoint is reached through a small client interface so the whole
pipeline runs offline against recorded responses: ``HttpChatClient`` talks
JSON chat-completions, ``ReplayClient`` serves a recorded store and never
touches the network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    EndpointError,
    ExhaustedRetriesError,
    MalformedResponseError,
    TemplateError,
)
from .textparse import extract_numeric

logger = logging.getLogger(__name__)

DEFAULT_K = 3
NUMERIC_REL_TOL = 0.05

# Versioned hedging stop-list; removal is case-insensitive and eats one
# trailing comma so clause punctuation stays tidy.
HEDGE_PHRASES = ("appears to", "might be", "it seems", "possibly", "perhaps", "likely")
_HEDGE_RE = re.compile(
    r"\b(?:" + "|".join(p.replace(" ", r"\s+") for p in HEDGE_PHRASES) + r")\b,?",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class PromptSpec:
    system_prompt: str
    user_variants: tuple[str, ...]
    image_ref: str | None = None

    @property
    def k(self) -> int:
        return len(self.user_variants)


@dataclass
class ConsistencyTrace:
    trace_id: str
    raw_responses: list[str]
    normalized: list[str]
    verdict: dict  # {"status": "accepted", "answer": ...} or {"status": "rejected", "reason": ...}

    @property
    def accepted(self) -> bool:
        return self.verdict.get("status") == "accepted"

    def to_json(self) -> dict:
        return {"trace_id": self.trace_id, "raw_responses": self.raw_responses,
                "normalized": self.normalized, "verdict": self.verdict}


def build_prompts(record_meta: dict, template_set: dict, k: int = DEFAULT_K) -> PromptSpec:
    """Substitute metadata fields into k paraphrased instruction variants.

    Every metadata field must land verbatim in every variant; fewer than k
    paraphrases or a template slot without a matching field is an error.
    """
    if k < 3:
        raise TemplateError("self-consistency needs k >= 3 variants")
    variants = template_set.get("variants", [])
    if len(variants) < k:
        raise TemplateError(f"template set has {len(variants)} paraphrases, need {k}")
    rendered = []
    for tpl in variants[:k]:
        try:
            rendered.append(tpl.format(**record_meta))
        except KeyError as exc:
            raise TemplateError(f"template slot {exc} has no metadata field") from exc
    if len(set(rendered)) != len(rendered):
        raise TemplateError("rendered prompt variants are not pairwise distinct")
    for text in rendered:
        for key, value in record_meta.items():
            if str(value) not in text:
                raise TemplateError(
                    f"metadata field {key!r} ({value!r}) missing from a variant"
                )
    return PromptSpec(system_prompt=template_set.get("system", ""),
                      user_variants=tuple(rendered),
                      image_ref=record_meta.get("image_ref"))


# ---------------------------------------------------------------------------
# Response hygiene
# ---------------------------------------------------------------------------

def _sanitize_pass(text: str) -> str:
    t = _HEDGE_RE.sub(" ", text)
    t = " ".join(t.split())
    t = re.sub(r"\s+([.,;:!?])", r"\1", t)
    t = re.sub(r",(?:\s*,)+", ",", t)
    t = re.sub(r",\s*([.!?])", r"\1", t)
    t = re.sub(r"([.!?])\s*,+\s*", r"\1 ", t)
    t = re.sub(r"^[\s,;:]+", "", t)
    t = re.sub(r"[\s,;:]+$", "", t)
    t = re.sub(r"(^|[.!?]\s+)([a-z])",
               lambda m: m.group(1) + m.group(2).upper(), t)
    return t


def sanitize(text: str) -> str:
    """Strip hedging phrases and renormalize whitespace/punctuation.

    Runs to a fixpoint, so sanitize(sanitize(x)) == sanitize(x) by
    construction.
    """
    current = text or ""
    for _ in range(8):
        nxt = _sanitize_pass(current)
        if nxt == current:
            return current
        current = nxt
    return current


def _normalize_descriptive(text: str) -> str:
    t = sanitize(text).lower()
    t = re.sub(r"[^\w\s]", " ", t)
    return " ".join(t.split())


def _phrase_multiset(normalized: str, category_names) -> tuple:
    counts = []
    for name in sorted(category_names):
        pat = re.compile(rf"\b{re.escape(name.lower())}(?:s|es)?\b")
        counts.append((name, len(pat.findall(normalized))))
    return tuple(counts)


def _numeric_clusters(values: list[float], rel_tol: float) -> list[list[int]]:
    """Union responses whose quantities agree within the relative tolerance."""
    n = len(values)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            a, b = values[i], values[j]
            if abs(a - b) <= rel_tol * max(abs(a), abs(b)):
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _median(values: list[float]) -> float:
    s = sorted(values)
    mid = len(s) // 2
    if len(s) % 2:
        return s[mid]
    return 0.5 * (s[mid - 1] + s[mid])


def self_consistency_filter(responses: list[str], task_kind: str,
                            category_names=(), rel_tol: float = NUMERIC_REL_TOL,
                            trace_key: str = "") -> ConsistencyTrace:
    """Majority filtering over k responses.

    Numeric tasks cluster the leading quantity of each response within a
    relative tolerance and accept when the largest cluster is a strict
    majority (answer: cluster median). Descriptive tasks accept when a
    strict majority of normalized responses agree on the multiset of
    category-name mentions (answer: sanitized text of the earliest majority
    response). Rejection is a verdict, never an exception.
    """
    k = len(responses)
    if k < 3:
        raise ValueError("self-consistency needs k >= 3 responses")
    digest = hashlib.sha256(
        (trace_key + "\x00" + "\x00".join(responses)).encode("utf-8")
    ).hexdigest()[:16]

    if task_kind == "numeric":
        values = [extract_numeric(r) for r in responses]
        normalized = ["" if v is None else repr(v) for v in values]
        indexed = [(i, v) for i, v in enumerate(values) if v is not None]
        verdict: dict = {"status": "rejected", "reason": "no majority"}
        if indexed:
            clusters = _numeric_clusters([v for _, v in indexed], rel_tol)
            best = max(clusters, key=len)
            if len(best) * 2 > k:
                members = [indexed[i][1] for i in best]
                verdict = {"status": "accepted", "answer": _median(members)}
        else:
            verdict = {"status": "rejected", "reason": "no numeric content"}
    elif task_kind == "descriptive":
        normalized = [_normalize_descriptive(r) for r in responses]
        keyed: dict[tuple, list[int]] = {}
        for i, norm in enumerate(normalized):
            keyed.setdefault(_phrase_multiset(norm, category_names), []).append(i)
        best = max(keyed.values(), key=len)
        if len(best) * 2 > k:
            verdict = {"status": "accepted", "answer": sanitize(responses[min(best)])}
        else:
            verdict = {"status": "rejected", "reason": "no majority"}
    else:
        raise ValueError(f"unknown task kind {task_kind!r}")

    return ConsistencyTrace(trace_id=digest, raw_responses=list(responses),
                            normalized=normalized, verdict=verdict)


# ---------------------------------------------------------------------------
# Endpoint clients
# ---------------------------------------------------------------------------

@dataclass
class EndpointConfig:
    url: str = ""
    model: str = ""
    auth_env: str = ""
    timeout_s: float = 30.0
    max_concurrency: int = 4
    mode: str = "live"          # "live" or "replay"
    replay_path: str | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "EndpointConfig":
        return cls(url=obj.get("url", ""), model=obj.get("model", ""),
                   auth_env=obj.get("auth_env", ""),
                   timeout_s=float(obj.get("timeout_s", 30.0)),
                   max_concurrency=int(obj.get("max_concurrency", 4)),
                   mode=obj.get("mode", "live"),
                   replay_path=obj.get("replay_path"))


def prompt_key(system: str, user: str) -> str:
    return hashlib.sha256((system + "\x00" + user).encode("utf-8")).hexdigest()


class HttpChatClient:
    """Chat-completion shaped HTTP client with retry/backoff."""

    MAX_ATTEMPTS = 3

    def __init__(self, config: EndpointConfig, session=None, sleeper=time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.sleeper = sleeper

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env, "") if self.config.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, system: str, user: str, image_b64: str | None = None) -> str:
        content: object = user
        if image_b64 is not None:
            content = [{"type": "text", "text": user},
                       {"type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{image_b64}"}}]
        body = {"model": self.config.model,
                "messages": [{"role": "system", "content": system},
                             {"role": "user", "content": content}]}
        trace = prompt_key(system, user)[:12]
        last_error: Exception | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                resp = self.session.post(self.config.url, json=body,
                                         headers=self._headers(),
                                         timeout=self.config.timeout_s)
                if resp.status_code >= 500:
                    raise EndpointError(f"server error {resp.status_code}")
                resp.raise_for_status()
                payload = resp.json()
                logger.info("endpoint call %s attempt %d ok", trace, attempt + 1)
                try:
                    text = payload["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise MalformedResponseError(
                        f"response for {trace} lacks a text field"
                    ) from exc
                if not isinstance(text, str):
                    raise MalformedResponseError(f"response text for {trace} is not a string")
                return text
            except MalformedResponseError:
                raise
            except (requests.RequestException, EndpointError) as exc:
                last_error = exc
                logger.warning("endpoint call %s attempt %d failed: %s", trace, attempt + 1, exc)
                if attempt + 1 < self.MAX_ATTEMPTS:
                    self.sleeper(0.5 * (2 ** attempt))
        raise ExhaustedRetriesError(
            f"endpoint failed after {self.MAX_ATTEMPTS} attempts: {last_error}"
        )


class ReplayClient:
    """Serves recorded responses keyed by prompt content; strictly offline."""

    def __init__(self, store: dict[str, str]):
        self.store = dict(store)

    @classmethod
    def load(cls, path) -> "ReplayClient":
        store = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    store[obj["key"]] = obj["response"]
        return cls(store)

    def complete(self, system: str, user: str, image_b64: str | None = None) -> str:
        key = prompt_key(system, user)
        if key not in self.store:
            raise EndpointError(f"no recorded response for prompt key {key[:12]}")
        return self.store[key]


class RecordingClient:
    """Wraps a live client and appends (key, response) pairs for later replay."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, system: str, user: str, image_b64: str | None = None) -> str:
        text = self.inner.complete(system, user, image_b64)
        entry = json.dumps({"key": prompt_key(system, user), "response": text},
                           ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(entry + "\n")
        return text


def make_client(config: EndpointConfig):
    if config.mode == "replay":
        if not config.replay_path:
            raise EndpointError("replay mode needs replay_path")
        return ReplayClient.load(config.replay_path)
    return HttpChatClient(config)


def query_endpoint(prompt_variant: str, config: EndpointConfig,
                   system: str = "", client=None) -> str:
    """One variant in, raw model text out (retries handled by the client)."""
    client = client or make_client(config)
    return client.complete(system, prompt_variant)


def run_self_consistency(prompts: PromptSpec, client, task_kind: str,
                         category_names=(), trace_key: str = "",
                         max_concurrency: int = 4) -> ConsistencyTrace:
    """Query every variant (bounded concurrency, order preserved) and filter."""
    workers = max(1, min(max_concurrency, prompts.k))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(client.complete, prompts.system_prompt, variant,
                               prompts.image_ref)
                   for variant in prompts.user_variants]
        responses = [f.result() for f in futures]
    return self_consistency_filter(responses, task_kind,
                                   category_names=category_names,
                                   trace_key=trace_key)


def write_traces(traces, path) -> None:
    """Append-style trace persistence: one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_json(), ensure_ascii=False) + "\n")
