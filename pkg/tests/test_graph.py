"""Edge-component scoring, graph construction invariants, export formats."""

from __future__ import annotations

import json
import math
import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emocause.embedding import embed_text
from emocause.errors import PrecedenceError, ResponseParseError, TransportError
from emocause.graph import (
    JaccardNli,
    RemoteNli,
    build_graph,
    edge_weight,
    export_graph,
    graph_from_json,
    nli_from_spec,
    rationale_score,
    semantic_score,
    serialize_event,
    temporal_gap,
    temporal_score,
)
from emocause.model import ScoringConfig

from conftest import make_sextuplet


def test_semantic_identity(embedder):
    assert semantic_score("fine", "fine", embedder) == pytest.approx(1.0, abs=1e-9)
    assert semantic_score("fine", "fine", embedder, normalize=False) == pytest.approx(1.0, abs=1e-9)


def test_semantic_normalization_endpoints():
    # raw -1 maps to 0; verified through the mapping itself at the endpoints
    assert ((-1.0) + 1.0) / 2.0 == 0.0
    assert ((1.0) + 1.0) / 2.0 == 1.0


def test_semantic_matches_independent_recomputation(embedder):
    got = semantic_score("delighted", "positive", embedder, normalize=False)
    a = embedder.embed("delighted")
    b = embedder.embed("positive")
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    norm = math.sqrt(sum(float(x) ** 2 for x in a)) * math.sqrt(sum(float(y) ** 2 for y in b))
    assert got == pytest.approx(dot / norm, abs=1e-12)


def test_semantic_scale_invariance(embedder):
    from emocause.kb import cosine_similarity

    a = embed_text(embedder, "delighted").values
    b = embed_text(embedder, "positive").values
    assert cosine_similarity(3.7 * a, b) == pytest.approx(cosine_similarity(a, b), abs=1e-9)


def test_temporal_gap_sign():
    cause = make_sextuplet("c", t_start=5.0, t_end=10.0)
    effect = make_sextuplet("e", t_start=15.0, t_end=16.0)
    assert temporal_gap(cause, effect) == 5.0
    assert temporal_gap(effect, cause) == pytest.approx(-11.0)
    simultaneous = make_sextuplet("s", t_start=10.0, t_end=12.0)
    assert temporal_gap(cause, simultaneous) == 0.0


def test_temporal_score_values():
    assert temporal_score(0.0, 30.0) == 1.0
    assert temporal_score(30.0, 30.0) == pytest.approx(math.exp(-1), abs=1e-9)
    assert temporal_score(60.0, 30.0) == pytest.approx(math.exp(-2), abs=1e-8)


def test_temporal_score_rejects_negative_gap():
    with pytest.raises(PrecedenceError):
        temporal_score(-1.0, 30.0)
    with pytest.raises(ValueError):
        temporal_score(1.0, 0.0)


@given(st.floats(0.0, 1000.0), st.floats(0.0, 1000.0), st.floats(10.0, 100.0))
def test_temporal_score_monotone_and_bounded(d1, d2, tau):
    # gaps past 10 * tau never reach scoring, so underflow to 0.0 is out of scope
    s1, s2 = temporal_score(d1, tau), temporal_score(d2, tau)
    assert 0.0 < s1 <= 1.0
    if d1 <= d2:
        assert s1 >= s2


class _ConstNli:
    id = "const"
    mode = "mock_overlap"

    def __init__(self, p):
        self.p = p

    def entailment_probability(self, premise, hypothesis):
        return self.p


def test_rationale_score_endpoints():
    effect = make_sextuplet("e")
    assert rationale_score("why", effect, _ConstNli(0.0)) == 0.0
    assert rationale_score("why", effect, _ConstNli(1.0), normalize=False) == pytest.approx(
        0.69314718, abs=1e-8
    )
    assert rationale_score("why", effect, _ConstNli(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_rationale_score_requires_rationale():
    with pytest.raises(ValueError):
        rationale_score("  ", make_sextuplet("e"), _ConstNli(0.5))


def test_jaccard_nli_hand_example():
    # effect serializes to {ana, volt, pricing, negative}; rationale shares
    # two of those four tokens -> 2 / (4 + 4 - 2) = 1/3
    effect = make_sextuplet("e", holder="Ana", target="Volt", aspect="pricing",
                            opinion="negative", sentiment="negative")
    assert serialize_event(effect) == "Ana Volt pricing negative negative"
    nli = JaccardNli()
    p = nli.entailment_probability("ana volt timing cost", serialize_event(effect))
    assert p == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_jaccard_nli_strips_punctuation_and_case():
    nli = JaccardNli()
    assert nli.entailment_probability("Ana, Volt!", "ana volt") == 1.0
    assert nli.entailment_probability("!!!", "???") == 0.0


def test_edge_weight_examples(cfg):
    assert edge_weight(1.0, 1.0, 1.0, cfg) == pytest.approx(1.0, abs=1e-9)
    assert edge_weight(0.0, 0.0, 0.0, cfg) == 0.0
    assert edge_weight(0.8, 0.5, 0.2, cfg) == pytest.approx(0.5, abs=1e-9)
    uneven = ScoringConfig(alpha=0.6, beta=0.3, gamma=0.1)
    assert edge_weight(1.0, 1.0, 1.0, uneven) == pytest.approx(1.0, abs=1e-9)


def _chain_sextuplets():
    # three events, 40 s apart, same sentiment, rationales pointing forward
    a = make_sextuplet("a", holder="Ana", target="Volt", aspect="pricing",
                       opinion="negative", sentiment="negative",
                       rationale="Ben keeps pressing Grid on latency",
                       t_start=0.0, t_end=4.0)
    b = make_sextuplet("b", holder="Ben", target="Grid", aspect="latency",
                       opinion="negative", sentiment="negative",
                       rationale="Cleo keeps pressing Hub on support",
                       t_start=44.0, t_end=48.0)
    c = make_sextuplet("c", holder="Cleo", target="Hub", aspect="support",
                       opinion="negative", sentiment="negative",
                       rationale="the thread wore everyone down",
                       t_start=88.0, t_end=92.0)
    return [a, b, c]


def test_build_graph_single_vertex(cfg, embedder, nli):
    g = build_graph([make_sextuplet("only")], cfg, embedder, nli)
    assert g.vertices == ("only",)
    assert g.edges == ()


def test_build_graph_recovers_chain(cfg, embedder, nli):
    g = build_graph(_chain_sextuplets(), cfg, embedder, nli)
    assert {(e.cause_id, e.effect_id) for e in g.edges} == {("a", "b"), ("b", "c")}
    for e in g.edges:
        assert e.delta_t > 0
        assert 0.0 <= e.weight <= 1.0
        assert e.semantic_score == pytest.approx(1.0, abs=1e-9)


def test_build_graph_precedence_only_one_direction(cfg, embedder, nli):
    early = make_sextuplet("early", t_start=0.0, t_end=4.0)
    late = make_sextuplet("late", holder="Ben", t_start=10.0, t_end=14.0)
    g = build_graph([early, late], replace(cfg, edge_threshold=0.0), embedder, nli)
    assert all(e.delta_t >= 0 for e in g.edges)
    assert ("late", "early") not in {(e.cause_id, e.effect_id) for e in g.edges}


def test_build_graph_max_gap_prunes(cfg, embedder, nli):
    a = make_sextuplet("a", t_start=0.0, t_end=4.0)
    b = make_sextuplet("b", holder="Ben", t_start=5000.0, t_end=5004.0)
    g = build_graph([a, b], replace(cfg, edge_threshold=0.0), embedder, nli)
    assert g.edges == ()  # gap 4996 s exceeds 10 * tau = 300 s


def test_build_graph_duplicate_ids_rejected(cfg, embedder, nli):
    with pytest.raises(ValueError, match="unique"):
        build_graph([make_sextuplet("x"), make_sextuplet("x")], cfg, embedder, nli)


def test_build_graph_jobs_equivalence(cfg, embedder, nli):
    items = _chain_sextuplets()
    assert build_graph(items, cfg, embedder, nli, jobs=1) == build_graph(
        items, cfg, embedder, nli, jobs=4
    )


def test_build_graph_threshold_monotonicity(cfg, embedder, nli):
    items = _chain_sextuplets()
    previous = None
    for step in range(11):
        th = step / 10.0
        g = build_graph(items, replace(cfg, edge_threshold=th), embedder, nli)
        ids = {(e.cause_id, e.effect_id) for e in g.edges}
        if previous is not None:
            assert ids <= previous
        previous = ids


def test_build_graph_weight_monotone_in_gap(cfg, embedder, nli):
    base = _chain_sextuplets()[:2]
    weights = []
    for shift in (0.0, 20.0, 60.0, 120.0):
        moved = replace(base[1], t_start=base[1].t_start + shift, t_end=base[1].t_end + shift)
        g = build_graph([base[0], moved], replace(cfg, edge_threshold=0.0), embedder, nli)
        weights.append(g.edges[0].weight)
    assert weights == sorted(weights, reverse=True)


def test_build_graph_raw_mode_matches_paper_ranges(embedder, nli):
    cfg = ScoringConfig(normalize_scores=False, edge_threshold=0.0)
    g = build_graph(_chain_sextuplets(), cfg, embedder, nli)
    for e in g.edges:
        assert -1.0 <= e.semantic_score <= 1.0
        assert 0.0 < e.temporal_score <= 1.0
        assert 0.0 <= e.rationale_score <= math.log(2.0) + 1e-12


def test_export_empty_dot():
    from emocause.graph import CausalGraph

    assert export_graph(CausalGraph((), ()), "dot") == b"digraph G {\n}\n"


def test_export_json_schema_and_round_trip(cfg, embedder, nli):
    items = _chain_sextuplets()
    g = build_graph(items, cfg, embedder, nli)
    blob = export_graph(g, "json", items, "dlg-9")
    doc = json.loads(blob)
    assert set(doc["edges"][0]) == {
        "cause", "effect", "semantic", "temporal", "rationale", "weight", "delta_t",
    }
    again, sextuplets, dialogue_id = graph_from_json(blob)
    assert again == g
    assert sextuplets == sorted(items, key=lambda s: s.id)
    assert dialogue_id == "dlg-9"


def test_export_deterministic(cfg, embedder, nli):
    items = _chain_sextuplets()
    g = build_graph(items, cfg, embedder, nli)
    assert export_graph(g, "json", items) == export_graph(g, "json", items)
    assert export_graph(g, "dot") == export_graph(g, "dot")


def test_export_dot_labels(cfg, embedder, nli):
    g = build_graph(_chain_sextuplets(), cfg, embedder, nli)
    text = export_graph(g, "dot").decode()
    assert text.startswith("digraph G {")
    assert '"a" -> "b" [label="w=0.' in text


def test_export_unknown_format(cfg, embedder, nli):
    g = build_graph([make_sextuplet("v")], cfg, embedder, nli)
    with pytest.raises(ValueError):
        export_graph(g, "yaml")


class _FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload or {}
        self.text = "raw"

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def post(self, url, **kwargs):
        self.calls.append((url, kwargs))
        return self.response


def test_remote_nli_contract():
    session = _FakeSession(_FakeResponse(payload={"entailment_probability": 0.25}))
    nli = RemoteNli(endpoint="http://nli", api_key="k", session=session)
    assert nli.entailment_probability("p", "h") == 0.25
    _, kwargs = session.calls[0]
    assert kwargs["json"] == {"premise": "p", "hypothesis": "h"}


def test_remote_nli_rejects_out_of_range():
    session = _FakeSession(_FakeResponse(payload={"entailment_probability": 1.5}))
    nli = RemoteNli(endpoint="http://nli", session=session)
    with pytest.raises(ResponseParseError):
        nli.entailment_probability("p", "h")


def test_remote_nli_http_error():
    session = _FakeSession(_FakeResponse(status_code=502))
    nli = RemoteNli(endpoint="http://nli", session=session)
    with pytest.raises(TransportError):
        nli.entailment_probability("p", "h")


def test_nli_from_spec():
    assert nli_from_spec("overlap").id == "overlap"
    with pytest.raises(ValueError):
        nli_from_spec("wat")
