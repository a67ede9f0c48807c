from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgqa.store import (
    RDF_TYPE,
    KnowledgeGraph,
    NTriplesParseError,
    SnapshotFormatError,
    TermNotFound,
    Triple,
    load_graph,
    load_ntriples,
)

LABEL = "http://www.w3.org/2000/01/rdf-schema#label"


def write(tmp_path, text, name="g.nt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


FIVE_PLUS_TWO = f"""\
# five URI triples, two labels, one duplicate
<x:a> <x:p> <x:b> .
<x:b> <x:p> <x:c> .
<x:a> <x:q> <x:c> .
<x:c> <{RDF_TYPE}> <x:K> .
<x:a> <{RDF_TYPE}> <x:K> .
<x:a> <x:p> <x:b> .
<x:a> <{LABEL}> "Alpha"@en .
<x:K> <{LABEL}> "kind" .
<x:a> <x:age> "42"^^<http://www.w3.org/2001/XMLSchema#int> .
"""


def test_load_counts(tmp_path):
    kg = load_ntriples(write(tmp_path, FIVE_PLUS_TWO))
    assert len(kg) == 5
    assert len(kg.labels) == 2
    assert kg.labels_of(kg.resolve("x:a")) == ["Alpha"]


def test_empty_file(tmp_path):
    kg = load_ntriples(write(tmp_path, ""))
    assert len(kg) == 0 and kg.num_terms == 0
    assert kg.triples_with({0}, {0}) == []


def test_non_label_literal_dropped(tmp_path):
    kg = load_ntriples(write(tmp_path, '<x:a> <x:name> "A" .\n'))
    assert len(kg) == 0


def test_empty_label_dropped_duplicates_kept(tmp_path):
    text = f'<x:a> <{LABEL}> "" .\n<x:a> <{LABEL}> "A" .\n<x:a> <{LABEL}> "A" .\n<x:a> <x:p> <x:b> .\n'
    kg = load_ntriples(write(tmp_path, text))
    assert kg.labels_of(kg.resolve("x:a")) == ["A", "A"]


@pytest.mark.parametrize("line,lineno", [
    ("<x:a> <x:p> <x:b>", 2),
    ("<x:a> <x:p> _:b1 .", 2),
    ("_:b0 <x:p> <x:b> .", 2),
    ("x:a <x:p> <x:b> .", 2),
])
def test_parse_errors_carry_line_numbers(tmp_path, line, lineno):
    path = write(tmp_path, "<x:a> <x:p> <x:c> .\n" + line + "\n")
    with pytest.raises(NTriplesParseError) as err:
        load_ntriples(path)
    assert err.value.lineno == lineno
    assert f"line {lineno}" in str(err.value)


def test_blank_nodes_rejected_with_message(tmp_path):
    with pytest.raises(NTriplesParseError, match="blank node"):
        load_ntriples(write(tmp_path, "_:b <x:p> <x:o> .\n"))


def test_literal_escapes(tmp_path):
    kg = load_ntriples(write(tmp_path, f'<x:a> <{LABEL}> "say \\"hi\\"\\u00e9" .\n'))
    assert kg.labels_of(kg.resolve("x:a")) == ['say "hi"é']


def test_configurable_predicates(tmp_path):
    text = '<a> <t> <K> .\n<a> <lbl> "Ay" .\n<a> <p> <b> .\n'
    kg = load_ntriples(write(tmp_path, text), label_property="lbl", type_property="t")
    a = kg.resolve("a")
    assert kg.types_of(a) == {kg.resolve("K")}
    assert kg.labels_of(a) == ["Ay"]


def test_first_seen_ids(tmp_path):
    kg = load_ntriples(write(tmp_path, "<c> <p> <a> .\n<a> <q> <b> .\n"))
    assert [kg.uri_of(i) for i in range(kg.num_terms)] == ["c", "p", "a", "q", "b"]


def test_triples_with_examples():
    kg = KnowledgeGraph.from_uri_triples([("e1", "p", "e2")])
    e1, p, e2 = (kg.resolve(u) for u in ("e1", "p", "e2"))
    assert kg.triples_with({e1}, {p}) == [Triple(e1, p, e2)]
    assert kg.triples_with({e2}, {p}) == [Triple(e1, p, e2)]
    kg2 = KnowledgeGraph.from_uri_triples([("e1", "p", "e2"), ("x", "q", "y")])
    assert kg2.triples_with({kg2.resolve("e1")}, {kg2.resolve("q")}) == []


def test_triples_with_sorted_and_unique():
    kg = KnowledgeGraph.from_uri_triples([("b", "p", "a"), ("a", "p", "b"), ("a", "q", "a")])
    a, b, p, q = (kg.resolve(u) for u in "abpq")
    got = kg.triples_with({a, b}, {p, q})
    assert got == sorted(got, key=lambda t: (t.predicate, t.subject, t.object))
    assert len(got) == len(set(got)) == 3


def test_types_of():
    kg = KnowledgeGraph.from_uri_triples([
        ("a", RDF_TYPE, "K1"), ("a", RDF_TYPE, "K2"), ("b", RDF_TYPE, "K1"), ("c", "p", "a"),
    ])
    a, b, c = (kg.resolve(u) for u in "abc")
    assert kg.types_of(a) == {kg.resolve("K1"), kg.resolve("K2")}
    assert kg.types_of(b) == {kg.resolve("K1")}
    assert kg.types_of(c) == set()
    with pytest.raises(TermNotFound):
        kg.types_of(kg.num_terms)


def test_classes_are_entities():
    kg = KnowledgeGraph.from_uri_triples([("a", RDF_TYPE, "K"), ("a", "p", "b")])
    assert kg.classes == {kg.resolve("K")}
    assert kg.classes <= kg.entities


def test_same_uri_entity_and_property():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b"), ("p", "q", "a")])
    p = kg.resolve("p")
    assert p in kg.entities and p in kg.properties


def test_resolve_uri_of():
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b")])
    for i in range(kg.num_terms):
        assert kg.resolve(kg.uri_of(i)) == i
    with pytest.raises(TermNotFound):
        kg.resolve("unknown:uri")
    with pytest.raises(TermNotFound):
        kg.uri_of(kg.num_terms)


def test_ntriples_round_trip(tmp_path):
    kg = load_ntriples(write(tmp_path, FIVE_PLUS_TWO))
    out = tmp_path / "out.nt"
    kg.to_ntriples(out)
    again = load_ntriples(out)

    def uri_triples(g):
        return {(g.uri_of(s), g.uri_of(p), g.uri_of(o)) for s, p, o in g.triples()}

    assert uri_triples(again) == uri_triples(kg)
    assert {again.uri_of(t): v for t, v in again.labels.items()} == \
        {kg.uri_of(t): v for t, v in kg.labels.items()}


def test_snapshot_bit_exact_and_round_trip(tmp_path):
    kg = load_ntriples(write(tmp_path, FIVE_PLUS_TWO))
    a = kg.snapshot_bytes()
    b = load_ntriples(write(tmp_path, FIVE_PLUS_TWO, "again.nt")).snapshot_bytes()
    assert a == b
    snap = tmp_path / "g.snap"
    kg.save_snapshot(snap)
    back = load_graph(snap)
    assert back.uris == kg.uris
    assert list(back.triples()) == list(kg.triples())
    assert back.labels == kg.labels
    assert back.snapshot_bytes() == a


def test_snapshot_rejects_garbage(tmp_path):
    with pytest.raises(SnapshotFormatError):
        KnowledgeGraph.from_snapshot_bytes(b"nope")
    kg = KnowledgeGraph.from_uri_triples([("a", "p", "b")])
    with pytest.raises(SnapshotFormatError):
        KnowledgeGraph.from_snapshot_bytes(kg.snapshot_bytes()[:-3])


def _brute(kg, ents, props):
    return sorted((t for t in kg.triples()
                   if t.predicate in props and (t.subject in ents or t.object in ents)),
                  key=lambda t: (t.predicate, t.subject, t.object))


def _index_consistent(kg):
    for i, t in enumerate(kg.triples()):
        assert i in kg.by_predicate(t.predicate)
        assert i in kg.by_subject(t.subject, t.predicate)
        assert i in kg.by_object(t.object, t.predicate)


triple_lists = st.lists(st.tuples(st.integers(0, 15), st.integers(0, 4), st.integers(0, 15)),
                        max_size=60)


@settings(max_examples=150, deadline=None)
@given(triple_lists, st.sets(st.integers(0, 20), min_size=1), st.sets(st.integers(0, 20), min_size=1))
def test_triples_with_matches_brute_force(rows, ents, props):
    kg = KnowledgeGraph.from_uri_triples(
        [(f"e{s}", f"p{p}", f"e{o}") for s, p, o in rows],
        vocabulary=[f"e{i}" for i in range(16)] + [f"p{i}" for i in range(5)],
    )
    assert kg.triples_with(ents, props) == _brute(kg, ents, props)
    _index_consistent(kg)
    assert len(kg) == len(set(rows))


def test_triples_with_brute_force_large():
    rng = np.random.default_rng(7)
    n_ent, n_prop, n = 5000, 40, 100_000
    uris = [f"e{i}" for i in range(n_ent)] + [f"p{i}" for i in range(n_prop)]
    s = rng.integers(0, n_ent, n)
    o = rng.integers(0, n_ent, n)
    p = rng.integers(n_ent, n_ent + n_prop, n)
    kg = KnowledgeGraph.from_arrays(uris, s, p, o)
    for _ in range(5):
        ents = set(rng.integers(0, n_ent, 30).tolist())
        props = set(rng.integers(n_ent, n_ent + n_prop, 4).tolist())
        mask = np.isin(kg.predicates, list(props)) & (
            np.isin(kg.subjects, list(ents)) | np.isin(kg.objects, list(ents)))
        expected = [Triple(int(a), int(b), int(c)) for a, b, c in
                    zip(kg.subjects[mask], kg.predicates[mask], kg.objects[mask])]
        # brute force through the Python triple list as well
        brute = [t for t in kg.triples() if t.predicate in props
                 and (t.subject in ents or t.object in ents)]
        assert kg.triples_with(ents, props) == expected == brute
