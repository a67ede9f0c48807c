from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DBR, FIXTURES
from kgqa.catalog import Candidates, MatchCandidate
from kgqa.question import InterpretedQuestion
from kgqa.store import KnowledgeGraph
from kgqa.subgraph import EmptySubgraph, NoActivation, build_activations, extract


def cands(*pairs):
    return Candidates(MatchCandidate(t, c) for t, c in pairs)


def test_single_triple():
    kg = KnowledgeGraph.from_uri_triples([("e1", "p", "e2")])
    e1, p, e2 = (kg.resolve(u) for u in ("e1", "p", "e2"))
    sg = extract(kg, [cands((e1, 1.0))], [cands((p, 1.0))])
    assert (sg.n, sg.k) == (2, 1)
    i, j = sg.local_index([e1, e2])
    S = sg.adjacency[0].toarray()
    assert S[i, j] == S[j, i] == 1.0 and S.trace() == 0


def test_holden_subgraph(holden_kg):
    data = json.loads((FIXTURES / "holden_interpretation.json").read_text())
    hop = InterpretedQuestion.from_json(data, holden_kg).hops[0]
    sg = extract(holden_kg, hop.entities, hop.properties)
    uris = {holden_kg.uri_of(t) for t in sg.local_entities.tolist()}
    assert {DBR + "Hardtop", DBR + "Broadmeadows,_Victoria", DBR + "Holden_Monaro"} <= uris
    assert DBR + "Holden" not in uris  # reached only through the hop-2 property


def test_no_triples_is_empty_subgraph():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b"), ("c", "q", "d")])
    with pytest.raises(EmptySubgraph):
        extract(kg, [cands((kg.resolve("a"), 1.0))], [cands((kg.resolve("q"), 1.0))])


def test_self_loops_dropped_and_parallel_collapsed():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "a"), ("a", "p", "b"), ("b", "p", "a")])
    a, p = kg.resolve("a"), kg.resolve("p")
    sg = extract(kg, [cands((a, 1.0))], [cands((p, 1.0))])
    S = sg.adjacency[0].toarray()
    assert S.trace() == 0 and S.max() == 1.0 and sg.nnz == 2


def test_unused_candidate_property_gets_empty_matrix():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b"), ("x", "q", "y")])
    a, p, q = (kg.resolve(u) for u in "apq")
    sg = extract(kg, [cands((a, 1.0))], [cands((p, 1.0), (q, 0.5))])
    assert sg.k == 2 and sg.adjacency[1].nnz == 0


def test_build_activations_with_carry():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "c"), ("b", "p", "c"), ("d", "p", "c")])
    a, b, c, d, p = (kg.resolve(u) for u in "abcdp")
    refs = [cands((a, 0.9)), cands((b, 0.4))]
    sg = extract(kg, refs, [cands((p, 1.0))], seeds=[d])
    act = build_activations(refs, [cands((p, 1.0))], sg, carry={d: 0.7})
    assert act.l == 3 and act.carried
    assert act.E[2, sg.local_index([d])[0]] == 0.7
    assert act.E[0, sg.local_index([a])[0]] == 0.9


def test_absent_candidate_contributes_zero():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b"), ("z", "q", "y")])
    a, p, z = kg.resolve("a"), kg.resolve("p"), kg.resolve("z")
    sg = extract(kg, [cands((a, 0.9), (z, 0.8))], [cands((p, 1.0))])
    act = build_activations([cands((a, 0.9), (z, 0.8))], [cands((p, 1.0))], sg)
    assert act.E.shape == (1, sg.n)
    assert sorted(act.E[0].tolist()) == [0.0, 0.9]


def test_single_cell():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b")])
    a, p = kg.resolve("a"), kg.resolve("p")
    sg = extract(kg, [cands((a, 0.9))], [cands((p, 1.0))])
    act = build_activations([cands((a, 0.9))], [cands((p, 1.0))], sg)
    assert np.count_nonzero(act.E) == 1 and act.E.max() == 0.9
    assert act.P.tolist() == [[1.0]]


def test_no_activation():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b")])
    a, p = kg.resolve("a"), kg.resolve("p")
    sg = extract(kg, [cands((a, 1.0))], [cands((p, 1.0))])
    with pytest.raises(NoActivation):
        build_activations([cands((a, 0.0))], [cands((p, 1.0))], sg)
    with pytest.raises(NoActivation):
        build_activations([cands((a, 1.0))], [cands((p, 0.0))], sg)


def test_dump_lists_edges_once():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b")])
    sg = extract(kg, [cands((kg.resolve("a"), 1.0))], [cands((kg.resolve("p"), 1.0))])
    lines = sg.dump(kg).splitlines()
    assert lines[0] == "subgraph n=2 k=1 nnz=2"
    assert sum(line.startswith("edge\t") for line in lines) == 1


def brute_adjacency(triples, ents, props):
    """Symmetrized 0/1 adjacency per property from a plain filter."""
    hits = [(s, p, o) for s, p, o in triples if p in props and (s in ents or o in ents)]
    local = sorted({x for s, _, o in hits for x in (s, o)})
    pos = {e: i for i, e in enumerate(local)}
    mats = {}
    for p in sorted(props):
        m = np.zeros((len(local), len(local)))
        for s, pp, o in hits:
            if pp == p and s != o:
                m[pos[s], pos[o]] = m[pos[o], pos[s]] = 1.0
        mats[p] = m
    return local, mats


graph = st.lists(st.tuples(st.integers(0, 12), st.integers(13, 16), st.integers(0, 12)),
                 min_size=1, max_size=50)


@settings(max_examples=150, deadline=None)
@given(graph, st.sets(st.integers(0, 12), min_size=1, max_size=4),
       st.sets(st.integers(13, 16), min_size=1, max_size=3), st.randoms(use_true_random=False))
def test_extract_matches_brute_force(rows, ents, props, rnd):
    vocab = [f"t{i}" for i in range(17)]
    kg = KnowledgeGraph.from_uri_triples([(f"t{s}", f"t{p}", f"t{o}") for s, p, o in rows],
                                         vocabulary=vocab)
    rows = list(kg.triples())
    e_refs = [cands(*((e, 1.0) for e in ents))]
    p_refs = [cands(*((p, 1.0) for p in props))]
    local, mats = brute_adjacency(rows, ents, props)
    try:
        sg = extract(kg, e_refs, p_refs)
    except EmptySubgraph:
        assert not local
        return
    assert sg.local_entities.tolist() == local
    for j, p in enumerate(sg.seed_properties.tolist()):
        S = sg.adjacency[j]
        assert np.array_equal(S.toarray(), mats[p])
        assert (S != S.T).nnz == 0 and not S.diagonal().any()

    # Reversing any subset of triples leaves the subgraph unchanged.
    flipped = [(o, p, s) if rnd.random() < 0.5 else (s, p, o) for s, p, o in rows]
    kg2 = KnowledgeGraph.from_uri_triples(
        [(f"t{s}", f"t{p}", f"t{o}") for s, p, o in flipped], vocabulary=vocab)
    sg2 = extract(kg2, e_refs, p_refs)
    assert np.array_equal(sg2.local_entities, sg.local_entities)
    for A, B in zip(sg.adjacency, sg2.adjacency):
        assert (A != B).nnz == 0


def test_extract_brute_force_large():
    rng = np.random.default_rng(3)
    n_ent, n_prop, n = 3000, 20, 100_000
    uris = [f"e{i}" for i in range(n_ent)] + [f"p{i}" for i in range(n_prop)]
    s, o = rng.integers(0, n_ent, n), rng.integers(0, n_ent, n)
    p = rng.integers(n_ent, n_ent + n_prop, n)
    kg = KnowledgeGraph.from_arrays(uris, s, p, o)
    rows = [tuple(t) for t in zip(kg.subjects.tolist(), kg.predicates.tolist(),
                                  kg.objects.tolist())]
    ents = set(rng.integers(0, n_ent, 8).tolist())
    props = set(rng.integers(n_ent, n_ent + n_prop, 3).tolist())
    sg = extract(kg, [cands(*((e, 1.0) for e in ents))], [cands(*((q, 1.0) for q in props))])
    local, mats = brute_adjacency(rows, ents, props)
    assert sg.local_entities.tolist() == local
    for j, q in enumerate(sg.seed_properties.tolist()):
        assert np.array_equal(sg.adjacency[j].toarray(), mats[q])
