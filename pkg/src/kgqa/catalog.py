"""Term matching: textual references to ranked KG-term candidates.

Entities and classes are matched lexically with BM25 over character 3-grams
and Snowball stems of their labels; properties are matched by cosine
similarity of mean-pooled word vectors.  Every matcher returns a
:class:`Candidates` list sorted by descending confidence, ties broken by
ascending term id.
"""
from __future__ import annotations

import io
import math
import re
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import unquote

import numpy as np
import snowballstemmer

from ._binio import FormatError, read_array, read_exact, read_strings, write_array, write_strings
from .store import KnowledgeGraph

BM25_K1 = 1.2
BM25_B = 0.75
TOP_ENTITIES = 500
TOP_PROPERTIES = 50

INDEX_MAGIC = b"KGQALEXI"
INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")
_CAMEL_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")


@dataclass(frozen=True)
class MatchCandidate:
    term: int
    confidence: float


class Candidates(list):
    """A ranked list of :class:`MatchCandidate`.

    ``oov`` is set when the reference had no in-vocabulary token, which is
    distinct from an ordinary empty result.
    """

    def __init__(self, items: Iterable[MatchCandidate] = (), *, oov: bool = False):
        super().__init__(items)
        self.oov = oov


class VectorFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def rank(scores: dict[int, float], top_k: int) -> Candidates:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return Candidates(MatchCandidate(t, c) for t, c in ordered[:top_k])


def normalize_uri_label(uri: str) -> str:
    """Derive a label from a URI: drop the namespace, split camel case, lowercase.

    >>> normalize_uri_label("http://dbpedia.org/ontology/bodyStyle")
    'body style'
    """
    local = uri.rstrip("/#")
    cut = max(local.rfind("/"), local.rfind("#"))
    if cut >= 0:
        local = local[cut + 1:]
    elif ":" in local:
        local = local.split(":", 1)[1]
    local = unquote(local).replace("_", " ")
    local = _CAMEL_RE.sub(" ", local)
    return " ".join(local.lower().split()) or uri.lower()


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


_stemmers = threading.local()


def stem(token: str) -> str:
    if len(token) < 3:
        return token
    st = getattr(_stemmers, "english", None)
    if st is None:
        st = _stemmers.english = snowballstemmer.stemmer("english")
    return st.stemWord(token)


def analyze(text: str) -> list[str]:
    """Index features of ``text``: character 3-grams (``g:``) and stems (``s:``)."""
    feats: list[str] = []
    for tok in tokenize(text):
        if len(tok) < 3:
            feats.append("g:" + tok)
        else:
            feats.extend("g:" + tok[i:i + 3] for i in range(len(tok) - 2))
        feats.append("s:" + stem(tok))
    return feats


def term_labels(kg: KnowledgeGraph, term: int) -> list[str]:
    """Explicit labels of ``term``, or its URI-derived label if it has none."""
    labels = [t for t in kg.labels_of(term) if t.strip()]
    return labels or [normalize_uri_label(kg.uri_of(term))]


class LexicalIndex:
    """BM25 inverted index over label features, one document per (term, label).

    A term's score is the maximum over its label documents.  A document whose
    token sequence equals the query's is lifted to the best score in the
    result, so verbatim labels always come back with confidence 1.0.
    """

    def __init__(self, doc_terms: Sequence[int], doc_texts: Sequence[str],
                 classes: Iterable[int] = (), entities: Iterable[int] = (),
                 properties: Iterable[int] = (), *, k1: float = BM25_K1, b: float = BM25_B):
        self.k1 = k1
        self.b = b
        self.doc_terms = np.asarray(doc_terms, dtype=np.int64)
        self.doc_texts = list(doc_texts)
        self.classes = np.unique(np.asarray(list(classes), dtype=np.int64))
        self.entities = np.unique(np.asarray(list(entities), dtype=np.int64))
        self.properties = np.unique(np.asarray(list(properties), dtype=np.int64))

        postings: dict[str, dict[int, int]] = {}
        lengths = np.zeros(len(self.doc_texts), dtype=np.float64)
        exact: dict[str, list[int]] = {}
        for doc, text in enumerate(self.doc_texts):
            feats = analyze(text)
            lengths[doc] = len(feats)
            for f in feats:
                row = postings.setdefault(f, {})
                row[doc] = row.get(doc, 0) + 1
            exact.setdefault(" ".join(tokenize(text)), []).append(doc)
        self.doc_len = lengths
        self.avgdl = float(lengths.mean()) if lengths.size else 0.0
        self.postings: dict[str, tuple[np.ndarray, np.ndarray]] = {
            f: (np.fromiter(row.keys(), dtype=np.int64, count=len(row)),
                np.fromiter(row.values(), dtype=np.float64, count=len(row)))
            for f, row in sorted(postings.items())
        }
        self._exact = {k: np.asarray(v, dtype=np.int64) for k, v in exact.items()}

    def __len__(self) -> int:
        return len(self.doc_texts)

    @property
    def num_docs(self) -> int:
        return len(self.doc_texts)

    def idf(self, feature: str) -> float:
        df = self.postings[feature][0].size if feature in self.postings else 0
        n = self.num_docs
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def bm25(self, text: str) -> np.ndarray:
        """Raw BM25 score of every document for ``text``."""
        scores = np.zeros(self.num_docs, dtype=np.float64)
        if not self.num_docs:
            return scores
        norm = self.k1 * (1.0 - self.b + self.b * self.doc_len / self.avgdl)
        for feat in sorted(set(analyze(text))):
            hit = self.postings.get(feat)
            if hit is None:
                continue
            docs, tf = hit
            scores[docs] += self.idf(feat) * tf * (self.k1 + 1.0) / (tf + norm[docs])
        return scores

    def search(self, text: str, top_k: int, restrict: np.ndarray | None = None) -> Candidates:
        """Top-``top_k`` terms for ``text`` with max-normalized scores.

        ``restrict`` is a sorted array of allowed term ids.
        """
        if top_k <= 0 or not self.num_docs:
            return Candidates()
        scores = self.bm25(text)
        docs = np.flatnonzero(scores > 0)
        if restrict is not None:
            docs = docs[np.isin(self.doc_terms[docs], restrict)]
        if docs.size == 0:
            return Candidates()
        doc_scores = scores[docs]
        best = float(doc_scores.max())
        lifted = self._exact.get(" ".join(tokenize(text)))
        if lifted is not None:
            doc_scores = np.where(np.isin(docs, lifted), best, doc_scores)
        per_term: dict[int, float] = {}
        for term, score in zip(self.doc_terms[docs].tolist(), doc_scores.tolist()):
            if score > per_term.get(term, 0.0):
                per_term[term] = score
        return rank({t: s / best for t, s in per_term.items()}, top_k)

    def match_entity(self, reference: str, top_k: int = TOP_ENTITIES) -> Candidates:
        return self.search(reference, top_k, self.entities)

    def match_class(self, reference: str, top_k: int = TOP_ENTITIES) -> Candidates:
        return self.search(reference, top_k, self.classes)

    def match_property(self, reference: str, top_k: int = TOP_PROPERTIES) -> Candidates:
        return self.search(reference, top_k, self.properties)

    # -- serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        buf.write(INDEX_MAGIC)
        buf.write(struct.pack("<Idd", INDEX_VERSION, self.k1, self.b))
        write_array(buf, self.doc_terms, "<i8")
        write_strings(buf, self.doc_texts)
        for arr in (self.entities, self.classes, self.properties):
            write_array(buf, arr, "<i8")
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> LexicalIndex:
        buf = io.BytesIO(data)
        if buf.read(len(INDEX_MAGIC)) != INDEX_MAGIC:
            raise FormatError("not a lexical index file")
        version, k1, b = struct.unpack("<Idd", read_exact(buf, 20))
        if version != INDEX_VERSION:
            raise FormatError(f"unsupported index version {version}")
        doc_terms = read_array(buf, "<i8")
        doc_texts = read_strings(buf)
        entities, classes, properties = (read_array(buf, "<i8") for _ in range(3))
        return cls(doc_terms, doc_texts, classes, entities, properties, k1=k1, b=b)

    @classmethod
    def load(cls, path: str | Path) -> LexicalIndex:
        return cls.from_bytes(Path(path).read_bytes())


def build_lexical_index(kg: KnowledgeGraph, *, k1: float = BM25_K1, b: float = BM25_B) -> LexicalIndex:
    """Index every entity, class and property of ``kg`` under its labels."""
    terms = np.union1d(kg.entity_ids(), kg.property_ids())
    doc_terms: list[int] = []
    doc_texts: list[str] = []
    for term in terms.tolist():
        for text in term_labels(kg, term):
            doc_terms.append(term)
            doc_texts.append(text)
    return LexicalIndex(doc_terms, doc_texts, kg.class_ids(), kg.entity_ids(),
                        kg.property_ids(), k1=k1, b=b)


def match_entity(index: LexicalIndex, reference: str, top_k: int = TOP_ENTITIES) -> Candidates:
    return index.match_entity(reference, top_k)


def match_class(reference: str, index: LexicalIndex, top_k: int = TOP_ENTITIES) -> Candidates:
    return index.match_class(reference, top_k)


class VectorTable:
    """Token vectors loaded from a text file; all rows share one dimension."""

    def __init__(self, tokens: Sequence[str], matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(tokens):
            raise ValueError("matrix must have one row per token")
        self.matrix = matrix
        self.index: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            self.index.setdefault(tok, i)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token in self.index or token.lower() in self.index

    def get(self, token: str) -> np.ndarray | None:
        row = self.index.get(token)
        if row is None:
            row = self.index.get(token.lower())
        return None if row is None else self.matrix[row]

    def embed(self, text: str) -> np.ndarray | None:
        """Mean of the in-vocabulary token vectors of ``text``; ``None`` if none."""
        vecs = [v for v in (self.get(t) for t in _TOKEN_RE.findall(text)) if v is not None]
        if not vecs:
            return None
        return np.mean(vecs, axis=0)


def load_vectors(path: str | Path) -> VectorTable:
    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise VectorFormatError(1, "header must be '<token-count> <dimension>'")
        try:
            dim = int(header[1])
        except ValueError:
            raise VectorFormatError(1, "dimension is not an integer") from None
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) - 1 != dim:
                raise VectorFormatError(lineno, f"expected {dim} values, got {len(parts) - 1}")
            try:
                values = [float(x) for x in parts[1:]]
            except ValueError:
                raise VectorFormatError(lineno, "non-numeric vector component") from None
            if parts[0] in seen:
                continue
            seen.add(parts[0])
            tokens.append(parts[0])
            rows.append(values)
    return VectorTable(tokens, np.array(rows, dtype=np.float64).reshape(len(rows), dim))


class EmbeddingMatcher:
    """Exact cosine nearest neighbours between a reference and term labels."""

    def __init__(self, vectors: VectorTable, kg: KnowledgeGraph, terms: Iterable[int]):
        self.vectors = vectors
        label_terms: list[int] = []
        label_vecs: list[np.ndarray] = []
        for term in sorted(set(int(t) for t in terms)):
            for text in term_labels(kg, term):
                v = vectors.embed(text)
                if v is None:
                    continue
                norm = np.linalg.norm(v)
                if norm > 0:
                    label_terms.append(term)
                    label_vecs.append(v / norm)
        self.label_terms = np.asarray(label_terms, dtype=np.int64)
        self.label_matrix = (np.vstack(label_vecs) if label_vecs
                             else np.zeros((0, vectors.dim)))

    def match(self, reference: str, top_k: int = TOP_PROPERTIES) -> Candidates:
        q = self.vectors.embed(reference)
        if q is None:
            return Candidates(oov=True)
        norm = np.linalg.norm(q)
        if norm == 0 or not self.label_terms.size or top_k <= 0:
            return Candidates()
        # Rounding absorbs the last-ulp noise of normalized dot products.
        cos = np.round(self.label_matrix @ (q / norm), 12)
        best: dict[int, float] = {}
        for term, c in zip(self.label_terms.tolist(), cos.tolist()):
            c = min(c, 1.0)
            if c > 0 and c > best.get(term, 0.0):
                best[term] = c
        return rank(best, top_k)


def match_property(reference: str, vectors: VectorTable, kg: KnowledgeGraph,
                   top_k: int = TOP_PROPERTIES) -> Candidates:
    return EmbeddingMatcher(vectors, kg, kg.property_ids()).match(reference, top_k)


class Catalog:
    """Matchers for the three reference kinds over one graph.

    ``entity_matcher`` and ``property_matcher`` pick ``"lexical"`` or
    ``"embedding"``.  Without vectors, embedding matching falls back to the
    lexical index.
    """

    def __init__(self, kg: KnowledgeGraph, index: LexicalIndex | None = None,
                 vectors: VectorTable | None = None, *, top_entities: int = TOP_ENTITIES,
                 top_properties: int = TOP_PROPERTIES, entity_matcher: str = "lexical",
                 property_matcher: str = "embedding"):
        for name in (entity_matcher, property_matcher):
            if name not in ("lexical", "embedding"):
                raise ValueError(f"unknown matcher {name!r}")
        self.kg = kg
        self.index = index if index is not None else build_lexical_index(kg)
        self.vectors = vectors
        self.top_entities = top_entities
        self.top_properties = top_properties
        self.entity_matcher = entity_matcher if vectors is not None else "lexical"
        self.property_matcher = property_matcher if vectors is not None else "lexical"
        self._embed_props = (EmbeddingMatcher(vectors, kg, kg.property_ids())
                             if self.property_matcher == "embedding" else None)
        self._embed_ents = (EmbeddingMatcher(vectors, kg, kg.entity_ids())
                            if self.entity_matcher == "embedding" else None)

    def match_entity(self, reference: str) -> Candidates:
        if self._embed_ents is not None:
            return self._embed_ents.match(reference, self.top_entities)
        return self.index.match_entity(reference, self.top_entities)

    def match_property(self, reference: str) -> Candidates:
        if self._embed_props is not None:
            return self._embed_props.match(reference, self.top_properties)
        return self.index.match_property(reference, self.top_properties)

    def match_class(self, reference: str) -> Candidates:
        return self.index.match_class(reference, self.top_entities)
