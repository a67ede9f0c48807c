"""Dictionary-encoded, immutable in-memory triple store.

Terms (entities, properties, classes) share one id space: a URI used both as a
node and as a predicate gets a single id, and its role is positional.  Triples
are kept in three parallel ``int64`` arrays sorted by (predicate, subject,
object); a second permutation sorted by (predicate, object, subject) serves
object-position lookups.  All lookups are binary searches over these arrays.
"""
from __future__ import annotations

import io
import re
import struct
from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ._binio import FormatError as SnapshotFormatError
from ._binio import read_exact, read_strings, write_strings

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"

SNAPSHOT_MAGIC = b"KGQASNAP"
SNAPSHOT_VERSION = 1


class TermNotFound(KeyError):
    """Raised when a URI or term id is not in the store."""


class NTriplesParseError(ValueError):
    def __init__(self, lineno: int, message: str, line: str = ""):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {message}")


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


_IRI = r"<([^<>\"{}|^`\\\s]*)>"
_LITERAL = r"\"((?:[^\"\\]|\\.)*)\"(?:@[A-Za-z]+(?:-[A-Za-z0-9]+)*|\^\^<[^>]*>)?"
_LINE_RE = re.compile(
    rf"^\s*{_IRI}\s+{_IRI}\s+(?:{_IRI}|{_LITERAL})\s*\.\s*(?:#.*)?$"
)
_ESCAPE_RE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))")
_SIMPLE_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f",
                   '"': '"', "'": "'", "\\": "\\"}


def _unescape(text: str) -> str:
    def repl(m: re.Match) -> str:
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        ch = m.group(3)
        if ch not in _SIMPLE_ESCAPES:
            raise ValueError(f"invalid escape \\{ch}")
        return _SIMPLE_ESCAPES[ch]

    return _ESCAPE_RE.sub(repl, text)


def _escape(text: str) -> str:
    return (text.replace("\\", "\\\\").replace('"', '\\"')
            .replace("\n", "\\n").replace("\r", "\\r"))


def _expand_ranges(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Concatenate ``arange(lo[i], hi[i])`` for all i without a Python loop."""
    lens = hi - lo
    keep = lens > 0
    lo, lens = lo[keep], lens[keep]
    if lo.size == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.cumsum(lens) - lens
    return np.arange(int(lens.sum()), dtype=np.int64) + np.repeat(lo - offsets, lens)


class KnowledgeGraph:
    """Immutable dictionary-encoded knowledge graph.

    Build one with :func:`load_ntriples`, :meth:`from_uri_triples` or
    :meth:`from_arrays`.  Ids are dense and assigned in first-seen order.
    """

    def __init__(
        self,
        uris: Sequence[str],
        subjects: np.ndarray,
        predicates: np.ndarray,
        objects: np.ndarray,
        labels: dict[int, list[str]] | None = None,
        *,
        label_property: str = RDFS_LABEL,
        type_property: str = RDF_TYPE,
    ):
        self._uris: list[str] = list(uris)
        self._ids: dict[str, int] = {u: i for i, u in enumerate(self._uris)}
        if len(self._ids) != len(self._uris):
            raise ValueError("duplicate URIs in term dictionary")
        self.label_property = label_property
        self.type_property_uri = type_property
        self.labels: dict[int, list[str]] = {
            k: list(v) for k, v in (labels or {}).items() if v
        }

        n_terms = len(self._uris)
        s = np.asarray(subjects, dtype=np.int64)
        p = np.asarray(predicates, dtype=np.int64)
        o = np.asarray(objects, dtype=np.int64)
        if not (s.shape == p.shape == o.shape):
            raise ValueError("triple arrays must have equal length")
        if s.size and (min(s.min(), p.min(), o.min()) < 0
                       or max(s.max(), p.max(), o.max()) >= n_terms):
            raise ValueError("triple references an unknown term id")

        # Deduplicate and sort by (p, s, o) in one lexsort.
        order = np.lexsort((o, s, p))
        s, p, o = s[order], p[order], o[order]
        if s.size:
            dup = np.zeros(s.size, dtype=bool)
            dup[1:] = (s[1:] == s[:-1]) & (p[1:] == p[:-1]) & (o[1:] == o[:-1])
            s, p, o = s[~dup], p[~dup], o[~dup]
        self._s, self._p, self._o = s, p, o
        for arr in (s, p, o):
            arr.setflags(write=False)

        self._n = max(n_terms, 1)
        self._key_ps = p * self._n + s
        self._pos_perm = np.lexsort((s, o, p))
        self._key_po = (p * self._n + o)[self._pos_perm]

        is_entity = np.zeros(n_terms, dtype=bool)
        is_entity[s] = True
        is_entity[o] = True
        is_property = np.zeros(n_terms, dtype=bool)
        is_property[p] = True
        self._is_entity = is_entity
        self._is_property = is_property

        self.type_property: int | None = self._ids.get(type_property)
        if self.type_property is not None and is_property[self.type_property]:
            lo, hi = np.searchsorted(p, [self.type_property, self.type_property + 1])
            self._classes = np.unique(o[lo:hi])
        else:
            self._classes = np.empty(0, dtype=np.int64)
        self._entity_set: frozenset[int] | None = None
        self._property_set: frozenset[int] | None = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_uri_triples(
        cls,
        triples: Iterable[tuple[str, str, str]],
        labels: Iterable[tuple[str, str]] = (),
        *,
        vocabulary: Iterable[str] = (),
        label_property: str = RDFS_LABEL,
        type_property: str = RDF_TYPE,
    ) -> KnowledgeGraph:
        """Build a graph from URI triples and ``(uri, label)`` pairs.

        ``vocabulary`` pre-assigns ids in the given order before anything else
        is interned; useful when two graphs must share an id space.
        """
        ids: dict[str, int] = {}
        for uri in vocabulary:
            ids.setdefault(uri, len(ids))
        label_map: dict[int, list[str]] = {}
        for uri, text in labels:
            if text:
                label_map.setdefault(ids.setdefault(uri, len(ids)), []).append(text)
        rows = [
            (ids.setdefault(s, len(ids)), ids.setdefault(p, len(ids)), ids.setdefault(o, len(ids)))
            for s, p, o in triples
        ]
        arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
        return cls(list(ids), arr[:, 0], arr[:, 1], arr[:, 2], label_map,
                   label_property=label_property, type_property=type_property)

    @classmethod
    def from_arrays(cls, uris: Sequence[str], subjects, predicates, objects,
                    labels: dict[int, list[str]] | None = None, **kw) -> KnowledgeGraph:
        return cls(uris, subjects, predicates, objects, labels, **kw)

    # -- dictionary ----------------------------------------------------------

    def __len__(self) -> int:
        return int(self._s.size)

    @property
    def num_terms(self) -> int:
        return len(self._uris)

    def resolve(self, uri: str) -> int:
        try:
            return self._ids[uri]
        except KeyError:
            raise TermNotFound(uri) from None

    def uri_of(self, term: int) -> str:
        if not isinstance(term, (int, np.integer)) or not 0 <= term < len(self._uris):
            raise TermNotFound(term)
        return self._uris[int(term)]

    def get_id(self, uri: str) -> int | None:
        return self._ids.get(uri)

    @property
    def uris(self) -> Sequence[str]:
        return tuple(self._uris)

    # -- roles -----------------------------------------------------------------

    @property
    def entities(self) -> frozenset[int]:
        if self._entity_set is None:
            self._entity_set = frozenset(np.flatnonzero(self._is_entity).tolist())
        return self._entity_set

    @property
    def properties(self) -> frozenset[int]:
        if self._property_set is None:
            self._property_set = frozenset(np.flatnonzero(self._is_property).tolist())
        return self._property_set

    @property
    def classes(self) -> frozenset[int]:
        return frozenset(self._classes.tolist())

    def entity_ids(self) -> np.ndarray:
        return np.flatnonzero(self._is_entity)

    def property_ids(self) -> np.ndarray:
        return np.flatnonzero(self._is_property)

    def class_ids(self) -> np.ndarray:
        return self._classes.copy()

    def is_entity(self, term: int) -> bool:
        return 0 <= term < self.num_terms and bool(self._is_entity[term])

    def is_property(self, term: int) -> bool:
        return 0 <= term < self.num_terms and bool(self._is_property[term])

    # -- triple access ---------------------------------------------------------

    @property
    def subjects(self) -> np.ndarray:
        return self._s

    @property
    def predicates(self) -> np.ndarray:
        return self._p

    @property
    def objects(self) -> np.ndarray:
        return self._o

    def triples(self) -> Iterator[Triple]:
        for s, p, o in zip(self._s.tolist(), self._p.tolist(), self._o.tolist()):
            yield Triple(s, p, o)

    def triple(self, index: int) -> Triple:
        return Triple(int(self._s[index]), int(self._p[index]), int(self._o[index]))

    def by_predicate(self, predicate: int) -> np.ndarray:
        """Indices of all triples with the given predicate."""
        lo, hi = np.searchsorted(self._p, [predicate, predicate + 1])
        return np.arange(lo, hi, dtype=np.int64)

    def by_subject(self, entity: int, predicate: int) -> np.ndarray:
        key = predicate * self._n + entity
        lo, hi = np.searchsorted(self._key_ps, [key, key + 1])
        return np.arange(lo, hi, dtype=np.int64)

    def by_object(self, entity: int, predicate: int) -> np.ndarray:
        key = predicate * self._n + entity
        lo, hi = np.searchsorted(self._key_po, [key, key + 1])
        return self._pos_perm[lo:hi]

    def triple_indices_with(self, entities, properties) -> np.ndarray:
        """Sorted indices of triples with predicate in ``properties`` and
        subject or object in ``entities``.

        Index order equals (predicate, subject, object) order.
        """
        ents = np.unique(np.asarray(list(entities) if isinstance(entities, (set, frozenset))
                                    else entities, dtype=np.int64))
        props = np.unique(np.asarray(list(properties) if isinstance(properties, (set, frozenset))
                                     else properties, dtype=np.int64))
        ents = ents[(ents >= 0) & (ents < self.num_terms)]
        props = props[(props >= 0) & (props < self.num_terms)]
        if ents.size == 0 or props.size == 0 or self._s.size == 0:
            return np.empty(0, dtype=np.int64)
        keys = (props[:, None] * self._n + ents[None, :]).ravel()
        lo = np.searchsorted(self._key_ps, keys, side="left")
        hi = np.searchsorted(self._key_ps, keys, side="right")
        as_subject = _expand_ranges(lo, hi)
        lo = np.searchsorted(self._key_po, keys, side="left")
        hi = np.searchsorted(self._key_po, keys, side="right")
        as_object = self._pos_perm[_expand_ranges(lo, hi)]
        return np.unique(np.concatenate([as_subject, as_object]))

    def triples_with(self, entities, properties) -> list[Triple]:
        return [self.triple(i) for i in self.triple_indices_with(entities, properties).tolist()]

    def types_of(self, entity: int) -> set[int]:
        if not 0 <= entity < self.num_terms:
            raise TermNotFound(entity)
        if self.type_property is None:
            return set()
        return {int(self._o[i]) for i in self.by_subject(entity, self.type_property)}

    def labels_of(self, term: int) -> list[str]:
        return list(self.labels.get(term, ()))

    # -- serialization -----------------------------------------------------------

    def to_ntriples(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for term in sorted(self.labels):
                for text in self.labels[term]:
                    fh.write(f'<{self._uris[term]}> <{self.label_property}> "{_escape(text)}" .\n')
            for s, p, o in self.triples():
                fh.write(f"<{self._uris[s]}> <{self._uris[p]}> <{self._uris[o]}> .\n")

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_bytes(self.snapshot_bytes())

    def snapshot_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(SNAPSHOT_MAGIC)
        buf.write(struct.pack("<I", SNAPSHOT_VERSION))
        write_strings(buf, [self.label_property, self.type_property_uri])
        write_strings(buf, self._uris)
        buf.write(struct.pack("<Q", self._s.size))
        for arr in (self._s, self._p, self._o):
            buf.write(arr.astype("<i8").tobytes())
        label_ids: list[int] = []
        label_texts: list[str] = []
        for term in sorted(self.labels):
            for text in self.labels[term]:
                label_ids.append(term)
                label_texts.append(text)
        buf.write(struct.pack("<Q", len(label_ids)))
        buf.write(np.asarray(label_ids, dtype="<i8").tobytes())
        write_strings(buf, label_texts)
        return buf.getvalue()

    @classmethod
    def load_snapshot(cls, path: str | Path) -> KnowledgeGraph:
        return cls.from_snapshot_bytes(Path(path).read_bytes())

    @classmethod
    def from_snapshot_bytes(cls, data: bytes) -> KnowledgeGraph:
        buf = io.BytesIO(data)
        if buf.read(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise SnapshotFormatError("not a store snapshot")
        (version,) = struct.unpack("<I", read_exact(buf, 4))
        if version != SNAPSHOT_VERSION:
            raise SnapshotFormatError(f"unsupported snapshot version {version}")
        label_property, type_property = read_strings(buf)
        uris = read_strings(buf)
        (n,) = struct.unpack("<Q", read_exact(buf, 8))
        s, p, o = (np.frombuffer(read_exact(buf, 8 * n), dtype="<i8").astype(np.int64)
                   for _ in range(3))
        (n_labels,) = struct.unpack("<Q", read_exact(buf, 8))
        label_ids = np.frombuffer(read_exact(buf, 8 * n_labels), dtype="<i8").tolist()
        texts = read_strings(buf)
        labels: dict[int, list[str]] = {}
        for term, text in zip(label_ids, texts):
            labels.setdefault(term, []).append(text)
        return cls(uris, s, p, o, labels,
                   label_property=label_property, type_property=type_property)

    def __repr__(self) -> str:
        return f"KnowledgeGraph(terms={self.num_terms}, triples={len(self)})"


def parse_ntriples(lines: Iterable[str]) -> Iterator[tuple[int, str, str, str, bool]]:
    """Yield ``(lineno, s, p, o, is_literal)`` for each statement line."""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE_RE.match(line)
        if m is None:
            if "_:" in line:
                raise NTriplesParseError(lineno, "blank nodes are not supported", line)
            raise NTriplesParseError(lineno, "malformed triple", line)
        s, p, o_iri, literal = m.groups()
        if o_iri is not None:
            yield lineno, s, p, o_iri, False
        else:
            try:
                yield lineno, s, p, _unescape(literal), True
            except ValueError as exc:
                raise NTriplesParseError(lineno, str(exc), line) from None


def load_ntriples(
    path: str | Path,
    *,
    label_property: str = RDFS_LABEL,
    type_property: str = RDF_TYPE,
) -> KnowledgeGraph:
    """Parse an N-Triples file into a :class:`KnowledgeGraph`.

    URI-object triples are stored, ``label_property`` literals become labels,
    every other literal triple is dropped.
    """
    ids: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    labels: dict[int, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for _, s, p, o, is_literal in parse_ntriples(fh):
            if is_literal:
                if p == label_property and o.strip():
                    labels.setdefault(ids.setdefault(s, len(ids)), []).append(o)
                continue
            rows.append((ids.setdefault(s, len(ids)), ids.setdefault(p, len(ids)),
                         ids.setdefault(o, len(ids))))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(list(ids), arr[:, 0], arr[:, 1], arr[:, 2], labels,
                          label_property=label_property, type_property=type_property)


def load_graph(path: str | Path, **kw) -> KnowledgeGraph:
    """Load either a binary snapshot or an N-Triples file, by content sniffing."""
    with open(path, "rb") as fh:
        head = fh.read(len(SNAPSHOT_MAGIC))
    if head == SNAPSHOT_MAGIC:
        return KnowledgeGraph.load_snapshot(path)
    return load_ntriples(path, **kw)
