"""Sliding-window knowledge base: construction, exact retrieval, persistence.

Windows advance by a fixed stride so consecutive windows overlap and every
utterance is covered. Retrieval is an exhaustive cosine-similarity scan —
desk-scale corpora do not justify an approximate index, and exactness is
what makes brute-force oracle testing possible.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .embedding import (
    DEFAULT_RATE_SCALE,
    EmbeddingProvider,
    EmbeddingVector,
    KIND_FUSED,
    describe_audio_as_text,
    neutral_audio_record,
    window_embedding,
)
from .errors import EmbeddingError, StoreFormatError
from .model import DEFAULT_EMOTION_CATEGORIES, Dialogue

MAGIC = b"CMKB"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TimeWindow:
    """A contiguous span of utterances; text carries speaker prefixes and
    inline audio descriptions for prompt assembly."""

    window_index: int
    dialogue_id: str
    start_index: int
    end_index: int  # inclusive
    text: str

    @property
    def size(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass(frozen=True)
class KnowledgeBaseMeta:
    text_dim: int
    emotion_dim: int
    window_size: int
    stride: int
    provider_id: str
    entry_count: int

    @property
    def fused_dim(self) -> int:
        return self.text_dim + self.emotion_dim + 1


@dataclass
class KnowledgeBase:
    """Indexed (window, fused embedding) pairs, ordered by (dialogue_id,
    window_index). Immutable after indexing; safe for concurrent readers."""

    windows: list[TimeWindow]
    vectors: np.ndarray  # shape (entry_count, fused_dim)
    meta: KnowledgeBaseMeta

    def entries(self):
        for i, w in enumerate(self.windows):
            yield w, self.vectors[i]

    def find(self, dialogue_id: str, window_index: int) -> int | None:
        for i, w in enumerate(self.windows):
            if w.dialogue_id == dialogue_id and w.window_index == window_index:
                return i
        return None


@dataclass(frozen=True)
class RetrievalHit:
    window: TimeWindow
    embedding: np.ndarray
    similarity: float


def render_window_line(
    utterance, audio, categories: Sequence[str] = DEFAULT_EMOTION_CATEGORIES
) -> str:
    """One window-text line: "[#idx] speaker: text [voice: ...]"."""
    return (
        f"[#{utterance.index}] {utterance.speaker}: {utterance.text} "
        f"{describe_audio_as_text(audio, categories)}"
    )


def build_windows(
    dialogue: Dialogue,
    window_size: int,
    stride: int,
    *,
    categories: Sequence[str] = DEFAULT_EMOTION_CATEGORIES,
    rate_scale: float = DEFAULT_RATE_SCALE,
) -> list[TimeWindow]:
    """Slice the dialogue into overlapping windows of up to window_size
    utterances, stride apart; the final window may be shorter.

    stride must not exceed window_size or some utterances would fall in no
    window at all, losing context.
    """
    if window_size < 2:
        raise ValueError(f"window_size must be >= 2, got {window_size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride > window_size:
        raise ValueError(
            f"stride ({stride}) must not exceed window_size ({window_size}); "
            "larger strides would leave utterances uncovered"
        )
    n = dialogue.n
    if n == 0:
        return []

    emotion_dim = len(categories)
    windows = []
    j = 0
    while True:
        start = j * stride
        end = min(start + window_size - 1, n - 1)
        lines = []
        for i in range(start, end + 1):
            u = dialogue.utterances[i]
            audio = dialogue.audio.get(i) or neutral_audio_record(i, emotion_dim, rate_scale)
            lines.append(render_window_line(u, audio, categories))
        windows.append(
            TimeWindow(
                window_index=j,
                dialogue_id=dialogue.id,
                start_index=start,
                end_index=end,
                text="\n".join(lines),
            )
        )
        if end >= n - 1:
            break
        j += 1
    return windows


def index_windows(
    windows: Sequence[TimeWindow],
    dialogue: Dialogue,
    provider: EmbeddingProvider,
    *,
    window_size: int,
    stride: int,
    categories: Sequence[str] = DEFAULT_EMOTION_CATEGORIES,
    rate_scale: float = DEFAULT_RATE_SCALE,
) -> KnowledgeBase:
    """Embed each window and assemble the knowledge base entries."""
    emotion_dim = len(categories)
    fused_dim = provider.dim + emotion_dim + 1
    rows = np.zeros((len(windows), fused_dim), dtype=np.float64)
    for i, window in enumerate(windows):
        pairs = [
            (dialogue.utterances[k], dialogue.audio.get(k))
            for k in range(window.start_index, window.end_index + 1)
        ]
        try:
            rows[i] = window_embedding(
                pairs, provider, emotion_dim=emotion_dim, rate_scale=rate_scale
            ).values
        except Exception as exc:
            raise EmbeddingError(
                f"indexing aborted at window {window.window_index} "
                f"of dialogue {dialogue.id!r}: {exc}"
            ) from exc
    meta = KnowledgeBaseMeta(
        text_dim=provider.dim,
        emotion_dim=emotion_dim,
        window_size=window_size,
        stride=stride,
        provider_id=provider.id,
        entry_count=len(windows),
    )
    return KnowledgeBase(list(windows), rows, meta)


def index_dialogue(
    dialogue: Dialogue,
    provider: EmbeddingProvider,
    *,
    window_size: int = 10,
    stride: int = 5,
    categories: Sequence[str] = DEFAULT_EMOTION_CATEGORIES,
    rate_scale: float = DEFAULT_RATE_SCALE,
) -> KnowledgeBase:
    windows = build_windows(
        dialogue, window_size, stride, categories=categories, rate_scale=rate_scale
    )
    return index_windows(
        windows,
        dialogue,
        provider,
        window_size=window_size,
        stride=stride,
        categories=categories,
        rate_scale=rate_scale,
    )


def merge(kbs: Sequence[KnowledgeBase]) -> KnowledgeBase:
    """Combine per-dialogue bases; entries are re-sorted into the canonical
    (dialogue_id, window_index) order."""
    if not kbs:
        raise ValueError("nothing to merge")
    first = kbs[0].meta
    for kb in kbs[1:]:
        m = kb.meta
        if (m.text_dim, m.emotion_dim, m.window_size, m.stride, m.provider_id) != (
            first.text_dim,
            first.emotion_dim,
            first.window_size,
            first.stride,
            first.provider_id,
        ):
            raise ValueError("knowledge bases were built with different parameters")
    pairs = [(w, v) for kb in kbs for w, v in kb.entries()]
    pairs.sort(key=lambda p: (p[0].dialogue_id, p[0].window_index))
    vectors = (
        np.stack([v for _, v in pairs], axis=0)
        if pairs
        else np.zeros((0, first.fused_dim), dtype=np.float64)
    )
    meta = KnowledgeBaseMeta(
        text_dim=first.text_dim,
        emotion_dim=first.emotion_dim,
        window_size=first.window_size,
        stride=first.stride,
        provider_id=first.provider_id,
        entry_count=len(pairs),
    )
    return KnowledgeBase([w for w, _ in pairs], vectors, meta)


def index_corpus(
    dialogues: Sequence[Dialogue],
    provider: EmbeddingProvider,
    *,
    window_size: int = 10,
    stride: int = 5,
    categories: Sequence[str] = DEFAULT_EMOTION_CATEGORIES,
    rate_scale: float = DEFAULT_RATE_SCALE,
) -> KnowledgeBase:
    return merge(
        [
            index_dialogue(
                d,
                provider,
                window_size=window_size,
                stride=stride,
                categories=categories,
                rate_scale=rate_scale,
            )
            for d in dialogues
        ]
    )


def cosine_similarity(a, b) -> float:
    """(a . b) / (|a| |b|); raises on dimension mismatch or zero vectors."""
    va = a.values if isinstance(a, EmbeddingVector) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, EmbeddingVector) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.dot(va, vb)) / (na * nb)


def retrieve(
    query_window: TimeWindow,
    query_embedding,
    kb: KnowledgeBase,
    top_n: int,
) -> list[RetrievalHit]:
    """Exhaustive top-n scan by descending cosine similarity.

    The query window itself (same dialogue_id and window_index) is excluded;
    ties break by (dialogue_id, window_index) ascending. Fewer than top_n
    hits are returned when the base is small.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    q = (
        query_embedding.values
        if isinstance(query_embedding, EmbeddingVector)
        else np.asarray(query_embedding, dtype=np.float64)
    )
    if kb.meta.entry_count and q.shape[0] != kb.vectors.shape[1]:
        raise ValueError(
            f"query dimension {q.shape[0]} does not match index dimension {kb.vectors.shape[1]}"
        )
    scored = []
    for i, window in enumerate(kb.windows):
        if (
            window.dialogue_id == query_window.dialogue_id
            and window.window_index == query_window.window_index
        ):
            continue
        sim = cosine_similarity(q, kb.vectors[i])
        scored.append((-sim, window.dialogue_id, window.window_index, i))
    scored.sort()
    return [
        RetrievalHit(kb.windows[i], kb.vectors[i], -neg_sim)
        for neg_sim, _, _, i in scored[:top_n]
    ]


# ---------------------------------------------------------------------------
# Persistence (.cmkb): magic + version, then length-prefixed CRC-checked
# sections — meta JSON, window JSON, and the raw little-endian float64 matrix.
# ---------------------------------------------------------------------------


def _pack_section(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise StoreFormatError(f"truncated file while reading {what}")
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def section(self, what: str) -> bytes:
        (length,) = struct.unpack("<Q", self.take(8, f"{what} length"))
        payload = self.take(length, what)
        (crc,) = struct.unpack("<I", self.take(4, f"{what} checksum"))
        if zlib.crc32(payload) != crc:
            raise StoreFormatError(f"checksum mismatch in {what} section")
        return payload


def save_kb(kb: KnowledgeBase) -> bytes:
    """Serialize to the versioned binary format; bit-identical for equal inputs."""
    meta_payload = json.dumps(
        {
            "text_dim": kb.meta.text_dim,
            "emotion_dim": kb.meta.emotion_dim,
            "window_size": kb.meta.window_size,
            "stride": kb.meta.stride,
            "provider_id": kb.meta.provider_id,
            "entry_count": kb.meta.entry_count,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    windows_payload = json.dumps(
        [
            {
                "window_index": w.window_index,
                "dialogue_id": w.dialogue_id,
                "start_index": w.start_index,
                "end_index": w.end_index,
                "text": w.text,
            }
            for w in kb.windows
        ],
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    matrix = np.ascontiguousarray(kb.vectors, dtype="<f8").tobytes()
    return (
        MAGIC
        + struct.pack("<H", FORMAT_VERSION)
        + _pack_section(meta_payload)
        + _pack_section(windows_payload)
        + _pack_section(matrix)
    )


def load_kb(data: bytes) -> KnowledgeBase:
    """Parse bytes produced by save_kb; corruption or version drift is rejected."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise StoreFormatError("not a knowledge-base file (bad magic)")
    (version,) = struct.unpack("<H", r.take(2, "version"))
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"unsupported format version {version} (expected {FORMAT_VERSION})")

    try:
        meta_obj = json.loads(r.section("meta"))
        window_objs = json.loads(r.section("windows"))
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"corrupt metadata: {exc}") from exc
    matrix_bytes = r.section("vectors")
    if r.pos != len(data):
        raise StoreFormatError("trailing bytes after final section")

    try:
        meta = KnowledgeBaseMeta(
            text_dim=int(meta_obj["text_dim"]),
            emotion_dim=int(meta_obj["emotion_dim"]),
            window_size=int(meta_obj["window_size"]),
            stride=int(meta_obj["stride"]),
            provider_id=str(meta_obj["provider_id"]),
            entry_count=int(meta_obj["entry_count"]),
        )
        windows = [
            TimeWindow(
                window_index=int(o["window_index"]),
                dialogue_id=str(o["dialogue_id"]),
                start_index=int(o["start_index"]),
                end_index=int(o["end_index"]),
                text=str(o["text"]),
            )
            for o in window_objs
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreFormatError(f"corrupt metadata: {exc}") from exc

    if len(windows) != meta.entry_count:
        raise StoreFormatError(
            f"window count {len(windows)} disagrees with entry_count {meta.entry_count}"
        )
    expected = meta.entry_count * meta.fused_dim * 8
    if len(matrix_bytes) != expected:
        raise StoreFormatError(
            f"vector section is {len(matrix_bytes)} bytes, expected {expected}"
        )
    vectors = np.frombuffer(matrix_bytes, dtype="<f8").reshape(
        meta.entry_count, meta.fused_dim
    ).astype(np.float64)
    return KnowledgeBase(windows, vectors, meta)


def write_kb(kb: KnowledgeBase, path: str | Path) -> None:
    Path(path).write_bytes(save_kb(kb))


def read_kb(path: str | Path) -> KnowledgeBase:
    return load_kb(Path(path).read_bytes())
