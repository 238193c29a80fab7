"""Retrieval-augmented prompt assembly and sextuplet extraction.

Providers are pluggable: the mock provider applies a fixed rule table to
the current window so the whole pipeline runs offline and deterministically;
the remote provider speaks a chat-completion HTTP contract. Both return raw
text that flows through the same response parser.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence, runtime_checkable

import requests

from .errors import ResponseParseError, TransportError
from .kb import KnowledgeBase, RetrievalHit, TimeWindow, retrieve
from .model import Dialogue, SENTIMENT_LABELS, ScoringConfig, Sextuplet

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM_INSTRUCTIONS = (
    "You analyse long multi-party dialogues. Identify every emotional-opinion "
    "event in the current window: who expresses a sentiment (holder), about whom "
    "or what (target), which facet of the target (aspect), the opinion wording, "
    "the sentiment polarity, and the stated rationale. Use the retrieved earlier "
    "context only to resolve references; report events from the current window."
)

DEFAULT_SCHEMA_INSTRUCTIONS = (
    "Reply with exactly one JSON array. Each element must be an object with keys "
    '"holder", "target", "aspect", "opinion", "sentiment" (one of "positive", '
    '"negative", "neutral"), "rationale", and "utterance_index" (the [#N] number '
    "of the line the event appears in). Use an empty string for an implicit "
    "aspect. Output nothing but the array."
)

NO_CONTEXT_MARKER = "(no prior context retrieved)"

_SECTION_TASK = "=== TASK ==="
_SECTION_CONTEXT = "=== RETRIEVED CONTEXT ==="
_SECTION_WINDOW = "=== CURRENT WINDOW ==="
_SECTION_OUTPUT = "=== OUTPUT FORMAT ==="


@dataclass(frozen=True)
class ExtractionPrompt:
    """All sections of one extraction request; rendering is deterministic."""

    system_instructions: str
    current_window_text: str
    retrieved_context: tuple[tuple[str, float], ...]
    output_schema_instructions: str

    def render(self) -> str:
        parts = [_SECTION_TASK, self.system_instructions, "", _SECTION_CONTEXT]
        if not self.retrieved_context:
            parts.append(NO_CONTEXT_MARKER)
        else:
            for rank, (text, similarity) in enumerate(self.retrieved_context, start=1):
                parts.append(f"--- context {rank} (similarity {similarity:.4f}) ---")
                parts.append(text)
        parts += ["", _SECTION_WINDOW, self.current_window_text, "", _SECTION_OUTPUT,
                  self.output_schema_instructions]
        return "\n".join(parts)

    def messages(self) -> list[dict]:
        """Chat-shaped view: instructions as system, the rest as user content."""
        rendered = self.render()
        body = rendered.split(_SECTION_CONTEXT, 1)[1]
        return [
            {"role": "system", "content": self.system_instructions},
            {"role": "user", "content": _SECTION_CONTEXT + body},
        ]


def assemble_prompt(
    window: TimeWindow,
    context: Sequence[RetrievalHit],
    cfg: ScoringConfig | None = None,
    *,
    system_instructions: str = DEFAULT_SYSTEM_INSTRUCTIONS,
    schema_instructions: str = DEFAULT_SCHEMA_INSTRUCTIONS,
) -> ExtractionPrompt:
    """Order: instructions, retrieved context by descending similarity,
    current window, output schema."""
    hits = sorted(context, key=lambda h: -h.similarity)
    if cfg is not None:
        hits = hits[: cfg.top_n]
    return ExtractionPrompt(
        system_instructions=system_instructions,
        current_window_text=window.text,
        retrieved_context=tuple((h.window.text, h.similarity) for h in hits),
        output_schema_instructions=schema_instructions,
    )


# ---------------------------------------------------------------------------
# Rule table shared by the mock provider, the synthetic generator, and the
# brute-force test oracle. Surface patterns are single sentences of the form
#   "<Holder> praises/criticizes <Target>'s <aspect> because <rationale>."
#   "<Holder> feels/is/sounded positive|negative|neutral about <Target>'s
#    <aspect> because <rationale>."
# ---------------------------------------------------------------------------

VERB_SENTIMENTS = {"praises": "positive", "criticizes": "negative"}

_RULE_VERB = re.compile(
    r"(?P<holder>[A-Z][\w-]*) (?P<verb>praises|criticizes) "
    r"(?P<target>[A-Z][\w-]*)'s (?P<aspect>[\w-]+) because (?P<rationale>[^.!?\n]+)"
)
_RULE_FEELING = re.compile(
    r"(?P<holder>[A-Z][\w-]*) (?:feels|is|sounded) (?P<label>positive|negative|neutral) "
    r"about (?P<target>[A-Z][\w-]*)'s (?P<aspect>[\w-]+) because (?P<rationale>[^.!?\n]+)"
)

_WINDOW_LINE = re.compile(
    r"^\[#(?P<index>\d+)\] (?P<speaker>[^:]+): (?P<text>.*?)(?: \[voice: [^][]*\])?$"
)


def apply_rule_table(text: str) -> list[dict]:
    """All rule-table matches in one utterance text, in match order."""
    found = []
    for match in _RULE_VERB.finditer(text):
        found.append(
            (
                match.start(),
                {
                    "holder": match["holder"],
                    "target": match["target"],
                    "aspect": match["aspect"],
                    "opinion": match["verb"],
                    "sentiment": VERB_SENTIMENTS[match["verb"]],
                    "rationale": match["rationale"].strip(),
                },
            )
        )
    for match in _RULE_FEELING.finditer(text):
        found.append(
            (
                match.start(),
                {
                    "holder": match["holder"],
                    "target": match["target"],
                    "aspect": match["aspect"],
                    "opinion": match["label"],
                    "sentiment": match["label"],
                    "rationale": match["rationale"].strip(),
                },
            )
        )
    found.sort(key=lambda pair: pair[0])
    return [item for _, item in found]


@runtime_checkable
class ExtractorProvider(Protocol):
    id: str
    mode: str

    def complete(self, prompt_text: str) -> str: ...


class MockExtractor:
    """Offline extractor: applies the rule table to each current-window line.

    A pure function of the prompt text, so pipeline runs are reproducible
    without any model dependency.
    """

    id = "mock"
    mode = "mock"

    def __init__(self, seed: int = 0):
        self.seed = seed  # reserved; the rule table itself is deterministic

    def complete(self, prompt_text: str) -> str:
        window_text = _current_window_section(prompt_text)
        results = []
        for line in window_text.splitlines():
            parsed = _WINDOW_LINE.match(line)
            if parsed is None:
                index, text = None, line
            else:
                index, text = int(parsed["index"]), parsed["text"]
            for item in apply_rule_table(text):
                entry = dict(item)
                if index is not None:
                    entry["utterance_index"] = index
                results.append(entry)
        return "Extracted events follow.\n" + json.dumps(results)


def _current_window_section(prompt_text: str) -> str:
    try:
        after = prompt_text.split(_SECTION_WINDOW + "\n", 1)[1]
    except IndexError:
        raise ResponseParseError("prompt has no current-window section", prompt_text)
    return after.split("\n" + _SECTION_OUTPUT, 1)[0]


class RemoteExtractor:
    """Chat-completion HTTP provider.

    POST {model, messages, temperature: 0} -> {content}; endpoint and
    credential come from LLM_ENDPOINT / LLM_API_KEY unless given explicitly.
    Temperature is pinned to 0 for determinism where the backend honors it.
    """

    mode = "remote"

    def __init__(
        self,
        model: str,
        endpoint: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.model = model
        self.id = f"remote:{model}"
        self.endpoint = endpoint or os.environ.get("LLM_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.timeout = timeout
        self._session = session or requests.Session()
        if not self.endpoint:
            raise TransportError("no extractor endpoint configured (set LLM_ENDPOINT)", retryable=False)

    def complete(self, prompt_text: str) -> str:
        head, _, body = prompt_text.partition("\n\n" + _SECTION_CONTEXT)
        messages = [
            {"role": "system", "content": head.removeprefix(_SECTION_TASK + "\n")},
            {"role": "user", "content": (_SECTION_CONTEXT + body) if body else prompt_text},
        ]
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.endpoint,
                json={"model": self.model, "messages": messages, "temperature": 0},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"extractor request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"extractor endpoint returned HTTP {resp.status_code}")
        try:
            return str(resp.json()["content"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ResponseParseError(f"malformed extractor response: {exc}", resp.text) from exc


def extractor_from_spec(spec: str) -> ExtractorProvider:
    if spec == "mock":
        return MockExtractor()
    if spec.startswith("remote:"):
        return RemoteExtractor(model=spec.split(":", 1)[1])
    raise ValueError(f"unknown extractor spec {spec!r} (use 'mock' or 'remote:<model>')")


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TupleCandidate:
    """One parsed element of a provider response, before provenance is attached."""

    holder: str
    target: str
    aspect: str
    opinion: str
    sentiment: str
    rationale: str
    sentiment_score: float | None = None
    utterance_index: int | None = None


@dataclass(frozen=True)
class RejectedElement:
    position: int
    reason: str


_FIELD_ALIASES = {"sentiment_label": "sentiment", "polarity": "sentiment"}


def parse_provider_response(raw: str) -> tuple[list[TupleCandidate], list[RejectedElement]]:
    """Extract the first well-formed JSON array from possibly prose-wrapped
    output; invalid elements are rejected individually with their positions."""
    decoder = json.JSONDecoder()
    array = None
    for i, ch in enumerate(raw):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(raw, i)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            array = value
            break
    if array is None:
        raise ResponseParseError("no JSON array found in provider response", raw)

    candidates: list[TupleCandidate] = []
    rejections: list[RejectedElement] = []
    for pos, element in enumerate(array):
        if not isinstance(element, dict):
            rejections.append(RejectedElement(pos, "element is not an object"))
            continue
        fields: dict[str, object] = {}
        for key, value in element.items():
            k = str(key).casefold()
            fields[_FIELD_ALIASES.get(k, k)] = value

        def text_field(name: str) -> str:
            v = fields.get(name, "")
            return v.strip() if isinstance(v, str) else ""

        holder = text_field("holder")
        target = text_field("target")
        opinion = text_field("opinion")
        rationale = text_field("rationale")
        sentiment = text_field("sentiment").casefold()
        missing = [
            n
            for n, v in (
                ("holder", holder),
                ("target", target),
                ("opinion", opinion),
                ("rationale", rationale),
            )
            if not v
        ]
        if missing:
            rejections.append(RejectedElement(pos, f"missing or empty: {', '.join(missing)}"))
            continue
        if sentiment not in SENTIMENT_LABELS:
            rejections.append(RejectedElement(pos, f"sentiment {sentiment!r} not recognized"))
            continue

        score = fields.get("sentiment_score")
        if score is not None:
            if isinstance(score, bool) or not isinstance(score, (int, float)) or not -1 <= score <= 1:
                rejections.append(RejectedElement(pos, f"sentiment_score {score!r} outside [-1, 1]"))
                continue
            score = float(score)
        index = fields.get("utterance_index")
        if isinstance(index, bool) or not isinstance(index, int):
            index = None

        candidates.append(
            TupleCandidate(
                holder=holder,
                target=target,
                aspect=text_field("aspect"),
                opinion=opinion,
                sentiment=sentiment,
                rationale=rationale,
                sentiment_score=score,
                utterance_index=index,
            )
        )
    return candidates, rejections


# ---------------------------------------------------------------------------
# Extraction with provenance
# ---------------------------------------------------------------------------


def extract_sextuplets(
    prompt: ExtractionPrompt,
    provider: ExtractorProvider,
    window: TimeWindow,
    dialogue: Dialogue,
    *,
    max_retries: int = 3,
    backoff_base: float = 0.5,
) -> list[Sextuplet]:
    """Run the provider on one window and attach id, window and timing provenance.

    Transport failures are retried up to max_retries with exponential backoff
    (at most max_retries + 1 calls); an unparseable response is not retried.
    """
    rendered = prompt.render()
    attempt = 0
    while True:
        try:
            raw = provider.complete(rendered)
            break
        except TransportError as exc:
            if not exc.retryable or attempt >= max_retries:
                raise
            delay = backoff_base * (2.0**attempt)
            logger.warning(
                "provider %s transport failure on window %d (attempt %d/%d): %s",
                provider.id, window.window_index, attempt + 1, max_retries + 1, exc,
            )
            if delay > 0:
                time.sleep(delay)
            attempt += 1

    candidates, rejections = parse_provider_response(raw)
    for rejection in rejections:
        logger.warning(
            "window %d: dropped element %d: %s",
            window.window_index, rejection.position, rejection.reason,
        )

    in_window = dialogue.utterances[window.start_index : window.end_index + 1]
    span_start = min(u.t_start for u in in_window)
    span_end = max(u.t_end for u in in_window)
    results = []
    for seq, c in enumerate(candidates):
        if c.utterance_index is not None and window.start_index <= c.utterance_index <= window.end_index:
            anchor = dialogue.utterances[c.utterance_index]
            t_start, t_end = anchor.t_start, anchor.t_end
        else:
            t_start, t_end = span_start, span_end
        results.append(
            Sextuplet(
                id=f"{dialogue.id}-w{window.window_index:04d}-t{seq:02d}",
                holder=c.holder,
                target=c.target,
                aspect=c.aspect,
                opinion=c.opinion,
                sentiment_label=c.sentiment,
                rationale=c.rationale,
                window_index=window.window_index,
                t_start=t_start,
                t_end=t_end,
                sentiment_score=c.sentiment_score,
            )
        )
    return results


def dedup_sextuplets(items: Sequence[Sextuplet]) -> list[Sextuplet]:
    """Merge duplicates from overlapping windows: case-folded (holder, target,
    aspect, opinion) keys keep the instance with the earliest window_index."""
    best: dict[tuple, Sextuplet] = {}
    order: list[tuple] = []
    for s in items:
        key = s.dedup_key()
        if key not in best:
            best[key] = s
            order.append(key)
        elif s.window_index < best[key].window_index:
            best[key] = s
    return [best[key] for key in order]


def extract_dialogue(
    dialogue: Dialogue,
    kb: KnowledgeBase,
    provider: ExtractorProvider,
    cfg: ScoringConfig | None = None,
    *,
    jobs: int = 1,
    max_retries: int = 3,
    backoff_base: float = 0.5,
) -> list[Sextuplet]:
    """Extract over every indexed window of the dialogue, with retrieval-
    augmented prompts, then deduplicate across overlapping windows.

    Windows may run concurrently; results are re-sorted by window index so
    the output is independent of scheduling.
    """
    cfg = cfg or ScoringConfig()
    indexed = [
        (i, w) for i, w in enumerate(kb.windows) if w.dialogue_id == dialogue.id
    ]
    if not indexed:
        raise ValueError(f"dialogue {dialogue.id!r} has no windows in the knowledge base")

    def run_one(item: tuple[int, TimeWindow]) -> tuple[int, list[Sextuplet]]:
        i, window = item
        context = retrieve(window, kb.vectors[i], kb, cfg.top_n)
        prompt = assemble_prompt(window, context, cfg)
        found = extract_sextuplets(
            prompt, provider, window, dialogue,
            max_retries=max_retries, backoff_base=backoff_base,
        )
        return window.window_index, found

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, indexed))
    else:
        outcomes = [run_one(item) for item in indexed]
    outcomes.sort(key=lambda pair: pair[0])
    flat = [s for _, found in outcomes for s in found]
    return dedup_sextuplets(flat)


def sextuplets_to_dict(dialogue_id: str, items: Sequence[Sextuplet]) -> dict:
    from .model import sextuplet_to_dict

    return {"dialogue_id": dialogue_id, "sextuplets": [sextuplet_to_dict(s) for s in items]}


def sextuplets_from_dict(obj: Mapping) -> tuple[str, list[Sextuplet]]:
    from .model import _as_list, _as_obj, _as_str, _need, sextuplet_from_dict

    obj = _as_obj(obj, "")
    items = [
        sextuplet_from_dict(item, f"sextuplets[{i}]")
        for i, item in enumerate(_as_list(_need(obj, "sextuplets", ""), "sextuplets"))
    ]
    return _as_str(_need(obj, "dialogue_id", ""), "dialogue_id"), items
