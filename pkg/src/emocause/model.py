"""Core domain types, their invariants, and the canonical JSON schema.

Every other module builds on the types defined here. Construction is
permissive (so test fixtures can hold deliberately broken values);
``validate_dialogue`` is the single gate that downstream stages rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping

from .errors import ConfigError, SchemaError

SCENARIOS = (
    "customer_service",
    "social_media",
    "medical",
    "education",
    "tech_support",
    "emotional_support",
    "market_research",
    "multi_party",
)

SENTIMENT_LABELS = ("positive", "negative", "neutral")

# Fixed ordered emotion category list; vectors in AudioFeatureRecord are soft
# distributions over this list unless a caller supplies its own.
DEFAULT_EMOTION_CATEGORIES = (
    "happy",
    "sad",
    "angry",
    "fearful",
    "disgusted",
    "surprised",
    "calm",
    "neutral",
)

EMOTION_SUM_TOLERANCE = 1e-6
WEIGHT_SUM_TOLERANCE = 1e-9

# Dialogues outside this turn range are flagged with a warning, not an error,
# so short unit-test fixtures remain usable.
SOFT_TURN_RANGE = (70, 300)


@dataclass(frozen=True)
class Utterance:
    """A single dialogue turn with timing in seconds from dialogue start."""

    index: int
    speaker: str
    text: str
    t_start: float
    t_end: float

    @property
    def word_count(self) -> int:
        """Number of whitespace-delimited tokens in the text."""
        return len(self.text.split())

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class AudioFeatureRecord:
    """Precomputed voice features for one utterance.

    ``emotion`` is a soft distribution over a fixed category list,
    ``intensity`` is in [0, 1] and ``speech_rate`` is words per second.
    """

    utterance_index: int
    emotion: tuple[float, ...]
    intensity: float
    speech_rate: float

    def __post_init__(self):
        object.__setattr__(self, "emotion", tuple(float(x) for x in self.emotion))

    def problems(self) -> list[str]:
        """Return invariant violations as human-readable strings."""
        out: list[str] = []
        if not self.emotion:
            out.append("emotion vector is empty")
        elif any(c < 0.0 for c in self.emotion):
            out.append("emotion components must be non-negative")
        elif abs(sum(self.emotion) - 1.0) > EMOTION_SUM_TOLERANCE:
            out.append(f"emotion components sum to {sum(self.emotion)!r}, expected 1")
        if not 0.0 <= self.intensity <= 1.0:
            out.append(f"intensity {self.intensity!r} outside [0, 1]")
        if self.speech_rate <= 0.0:
            out.append(f"speech_rate {self.speech_rate!r} must be > 0")
        return out


@dataclass(frozen=True)
class Dialogue:
    """An ordered multi-turn conversation with optional audio sidecar records."""

    id: str
    scenario: str
    utterances: tuple[Utterance, ...]
    audio: Mapping[int, AudioFeatureRecord] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        object.__setattr__(self, "audio", dict(self.audio))

    @property
    def n(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Sextuplet:
    """One emotional-opinion event: who feels what about whom, and why.

    ``t_start``/``t_end`` anchor the event to the earliest/latest timestamps
    of its supporting utterance span. ``aspect`` may be empty (implicit
    aspect); all other text fields must be non-empty.
    """

    id: str
    holder: str
    target: str
    aspect: str
    opinion: str
    sentiment_label: str
    rationale: str
    window_index: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    sentiment_score: float | None = None

    def problems(self) -> list[str]:
        out: list[str] = []
        for name in ("id", "holder", "target", "opinion", "rationale"):
            if not getattr(self, name).strip():
                out.append(f"{name} must be non-empty")
        if self.sentiment_label not in SENTIMENT_LABELS:
            out.append(f"sentiment_label {self.sentiment_label!r} not one of {SENTIMENT_LABELS}")
        if self.sentiment_score is not None and not -1.0 <= self.sentiment_score <= 1.0:
            out.append(f"sentiment_score {self.sentiment_score!r} outside [-1, 1]")
        if self.t_end < self.t_start:
            out.append("t_end must be >= t_start")
        return out

    def match_key(self) -> tuple[str, str, str]:
        """Case-folded (holder, target, aspect), used for gold-link matching."""
        return (self.holder.casefold(), self.target.casefold(), self.aspect.casefold())

    def dedup_key(self) -> tuple[str, str, str, str]:
        """Case-folded (holder, target, aspect, opinion), used to merge duplicates."""
        return self.match_key() + (self.opinion.casefold(),)


@dataclass(frozen=True)
class ScoringConfig:
    """Knobs for windowing, retrieval and causal-edge scoring.

    ``alpha``/``beta``/``gamma`` weight the semantic, temporal and rationale
    components of an edge and must sum to 1. ``max_gap`` of ``None`` means
    ``10 * tau``, beyond which the temporal component is negligible.
    """

    alpha: float = 1.0 / 3.0
    beta: float = 1.0 / 3.0
    gamma: float = 1.0 / 3.0
    tau: float = 30.0
    edge_threshold: float = 0.5
    normalize_scores: bool = True
    top_n: int = 3
    window_size: int = 10
    stride: int = 5
    rate_scale: float = 5.0
    max_gap: float | None = None
    consistency_floor: float = 0.5

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name}={v!r} must lie in (0, 1)")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ConfigError(
                f"alpha + beta + gamma must equal 1 (got {total!r}); "
                "the three edge-weight components are a convex combination"
            )
        if self.tau <= 0.0:
            raise ConfigError(f"tau={self.tau!r} must be > 0 seconds")
        if not 0.0 <= self.edge_threshold <= 1.0:
            raise ConfigError(f"edge_threshold={self.edge_threshold!r} outside [0, 1]")
        if self.top_n < 1:
            raise ConfigError(f"top_n={self.top_n!r} must be >= 1")
        if self.window_size < 2:
            raise ConfigError(f"window_size={self.window_size!r} must be >= 2")
        if self.stride < 1:
            raise ConfigError(f"stride={self.stride!r} must be >= 1")
        if self.rate_scale <= 0.0:
            raise ConfigError(f"rate_scale={self.rate_scale!r} must be > 0")
        if self.max_gap is not None and self.max_gap <= 0.0:
            raise ConfigError(f"max_gap={self.max_gap!r} must be > 0 or None")

    def effective_max_gap(self) -> float:
        return self.max_gap if self.max_gap is not None else 10.0 * self.tau


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    message: str
    location: str


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_dialogue: a flat list of errors and warnings."""

    issues: tuple[ValidationIssue, ...]

    @property
    def errors(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_dialogue(d: Dialogue) -> ValidationReport:
    """Check every dialogue invariant, reporting errors and soft warnings.

    Pure: the same dialogue always yields the same report. A dialogue with
    zero errors is accepted by every downstream stage.
    """
    issues: list[ValidationIssue] = []

    def err(message: str, location: str) -> None:
        issues.append(ValidationIssue("error", message, location))

    def warn(message: str, location: str) -> None:
        issues.append(ValidationIssue("warning", message, location))

    if not d.id.strip():
        err("dialogue id must be non-empty", "id")
    if d.scenario not in SCENARIOS:
        err(f"scenario {d.scenario!r} not one of {SCENARIOS}", "scenario")

    n = d.n
    if n < 2:
        err(f"dialogue must contain at least 2 utterances (got {n})", "utterances")
    lo, hi = SOFT_TURN_RANGE
    if n and not lo <= n <= hi:
        warn(f"turn count {n} outside the expected range [{lo}, {hi}]", "utterances")

    prev_start = None
    for pos, u in enumerate(d.utterances):
        loc = f"utterances[{pos}]"
        if u.index != pos:
            err(f"utterance index {u.index} at position {pos}; indices must be contiguous from 0", loc)
        if u.word_count < 1:
            err("utterance text must contain at least one token", loc)
        if not u.t_end > u.t_start:
            err(f"t_end ({u.t_end!r}) must be strictly greater than t_start ({u.t_start!r})", loc)
        if prev_start is not None and u.t_start < prev_start:
            err("t_start must be non-decreasing in utterance index", loc)
        prev_start = u.t_start

    emo_dim = None
    for key in sorted(d.audio):
        rec = d.audio[key]
        loc = f"audio[{key}]"
        if not 0 <= key < n:
            err(f"audio record references unknown utterance index {key}", loc)
        if rec.utterance_index != key:
            err(f"audio record key {key} disagrees with utterance_index {rec.utterance_index}", loc)
        for problem in rec.problems():
            err(problem, loc)
        if rec.emotion:
            if emo_dim is None:
                emo_dim = len(rec.emotion)
            elif len(rec.emotion) != emo_dim:
                err(f"emotion vector length {len(rec.emotion)} differs from {emo_dim} seen earlier", loc)

    missing = [i for i in range(n) if i not in d.audio]
    if missing and len(missing) < n:
        warn(f"{len(missing)} of {n} utterances lack audio records", "audio")
    elif missing and n:
        warn("dialogue has no audio records; fusion will use neutral defaults", "audio")

    return ValidationReport(tuple(issues))


# ---------------------------------------------------------------------------
# Canonical JSON schema
# ---------------------------------------------------------------------------
#
# Dialogue document:
#   {id, scenario,
#    utterances: [{index, speaker, text, t_start, t_end}],
#    audio: [{utterance_index, emotion: [...], intensity, speech_rate?}]}
#
# Sextuplet object:
#   {id, holder, target, aspect, opinion, sentiment, sentiment_score?,
#    rationale, window_index, t_start, t_end}


def _need(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, f"expected string, got {type(value).__name__}")
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected integer, got {type(value).__name__}")
    return value


def _as_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, f"expected array, got {type(value).__name__}")
    return value


def _as_obj(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise SchemaError(path, f"expected object, got {type(value).__name__}")
    return value


def utterance_to_dict(u: Utterance) -> dict:
    return {
        "index": u.index,
        "speaker": u.speaker,
        "text": u.text,
        "t_start": u.t_start,
        "t_end": u.t_end,
    }


def utterance_from_dict(obj: Mapping[str, Any], path: str = "") -> Utterance:
    obj = _as_obj(obj, path)
    return Utterance(
        index=_as_int(_need(obj, "index", path), f"{path}.index"),
        speaker=_as_str(_need(obj, "speaker", path), f"{path}.speaker"),
        text=_as_str(_need(obj, "text", path), f"{path}.text"),
        t_start=_as_number(_need(obj, "t_start", path), f"{path}.t_start"),
        t_end=_as_number(_need(obj, "t_end", path), f"{path}.t_end"),
    )


def audio_record_to_dict(rec: AudioFeatureRecord) -> dict:
    return {
        "utterance_index": rec.utterance_index,
        "emotion": list(rec.emotion),
        "intensity": rec.intensity,
        "speech_rate": rec.speech_rate,
    }


def audio_record_from_dict(obj: Mapping[str, Any], path: str = "") -> AudioFeatureRecord:
    obj = _as_obj(obj, path)
    emotion = _as_list(_need(obj, "emotion", path), f"{path}.emotion")
    components = tuple(_as_number(v, f"{path}.emotion[{i}]") for i, v in enumerate(emotion))
    return AudioFeatureRecord(
        utterance_index=_as_int(_need(obj, "utterance_index", path), f"{path}.utterance_index"),
        emotion=components,
        intensity=_as_number(_need(obj, "intensity", path), f"{path}.intensity"),
        speech_rate=_as_number(_need(obj, "speech_rate", path), f"{path}.speech_rate"),
    )


def dialogue_to_dict(d: Dialogue) -> dict:
    return {
        "id": d.id,
        "scenario": d.scenario,
        "utterances": [utterance_to_dict(u) for u in d.utterances],
        "audio": [audio_record_to_dict(d.audio[k]) for k in sorted(d.audio)],
    }


def dialogue_from_dict(obj: Mapping[str, Any]) -> Dialogue:
    """Build a Dialogue from the canonical schema, raising SchemaError with
    a field path on the first structural violation."""
    obj = _as_obj(obj, "")
    utterances = tuple(
        utterance_from_dict(item, f"utterances[{i}]")
        for i, item in enumerate(_as_list(_need(obj, "utterances", ""), "utterances"))
    )
    known = {u.index for u in utterances}
    audio: dict[int, AudioFeatureRecord] = {}
    for i, item in enumerate(_as_list(obj.get("audio", []), "audio")):
        rec = audio_record_from_dict(item, f"audio[{i}]")
        if rec.utterance_index not in known:
            raise SchemaError(
                f"audio[{i}].utterance_index",
                f"references unknown utterance index {rec.utterance_index}",
            )
        if rec.utterance_index in audio:
            raise SchemaError(
                f"audio[{i}].utterance_index",
                f"duplicate audio record for utterance {rec.utterance_index}",
            )
        audio[rec.utterance_index] = rec
    return Dialogue(
        id=_as_str(_need(obj, "id", ""), "id"),
        scenario=_as_str(_need(obj, "scenario", ""), "scenario"),
        utterances=utterances,
        audio=audio,
    )


def sextuplet_to_dict(s: Sextuplet) -> dict:
    out = {
        "id": s.id,
        "holder": s.holder,
        "target": s.target,
        "aspect": s.aspect,
        "opinion": s.opinion,
        "sentiment": s.sentiment_label,
        "rationale": s.rationale,
        "window_index": s.window_index,
        "t_start": s.t_start,
        "t_end": s.t_end,
    }
    if s.sentiment_score is not None:
        out["sentiment_score"] = s.sentiment_score
    return out


def sextuplet_from_dict(obj: Mapping[str, Any], path: str = "") -> Sextuplet:
    obj = _as_obj(obj, path)
    score = obj.get("sentiment_score")
    return Sextuplet(
        id=_as_str(_need(obj, "id", path), f"{path}.id"),
        holder=_as_str(_need(obj, "holder", path), f"{path}.holder"),
        target=_as_str(_need(obj, "target", path), f"{path}.target"),
        aspect=_as_str(obj.get("aspect", ""), f"{path}.aspect"),
        opinion=_as_str(_need(obj, "opinion", path), f"{path}.opinion"),
        sentiment_label=_as_str(_need(obj, "sentiment", path), f"{path}.sentiment"),
        rationale=_as_str(_need(obj, "rationale", path), f"{path}.rationale"),
        window_index=_as_int(obj.get("window_index", 0), f"{path}.window_index"),
        t_start=_as_number(obj.get("t_start", 0.0), f"{path}.t_start"),
        t_end=_as_number(obj.get("t_end", 0.0), f"{path}.t_end"),
        sentiment_score=None if score is None else _as_number(score, f"{path}.sentiment_score"),
    )


def scoring_config_to_dict(cfg: ScoringConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(ScoringConfig)}


def scoring_config_from_dict(obj: Mapping[str, Any]) -> ScoringConfig:
    """Build a ScoringConfig from a flat key/value document.

    Unknown keys are rejected so config-file typos fail loudly.
    """
    obj = _as_obj(obj, "config")
    names = {f.name for f in fields(ScoringConfig)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = ScoringConfig(**{k: obj[k] for k in obj})
    cfg.validate()
    return cfg


def dumps_canonical(obj: Any) -> str:
    """Serialize with a fixed layout so identical values give identical bytes."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=True) + "\n"
