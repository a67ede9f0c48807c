"""Question models, annotators, and interpretation against the catalogs."""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable

from .catalog import Candidates, Catalog, MatchCandidate, rank
from .store import KnowledgeGraph

if TYPE_CHECKING:
    from .evaluation import DatasetRecord

log = logging.getLogger(__name__)

MAX_HOPS = 2
ROLES = ("E1", "P1", "C1", "E2", "P2", "C2")
_KIND_FIELD = {"E": "entities", "P": "properties", "C": "classes"}


class QuestionType(str, enum.Enum):
    SELECT = "SELECT"
    ASK = "ASK"
    COUNT = "COUNT"

    @classmethod
    def parse(cls, value: str | QuestionType) -> QuestionType:
        try:
            return cls(str(value.value if isinstance(value, cls) else value).upper())
        except ValueError:
            raise ValueError(f"unknown question type {value!r}") from None


class AnnotationMissing(ValueError):
    pass


class InvalidQuestion(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSpan:
    text: str
    role: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("reference span text must be non-empty")
        if not re.fullmatch(r"[EPC][1-9][0-9]*", self.role):
            raise ValueError(f"invalid reference role {self.role!r}")

    @property
    def hop(self) -> int:
        return int(self.role[1:])

    @property
    def kind(self) -> str:
        return _KIND_FIELD[self.role[0]]


@dataclass
class Hop:
    entities: list[str] = field(default_factory=list)
    properties: list[str] = field(default_factory=list)
    classes: list[str] = field(default_factory=list)


@dataclass
class QuestionModel:
    qtype: QuestionType
    hops: list[Hop]

    def validate(self, max_hops: int = MAX_HOPS) -> QuestionModel:
        if not 1 <= len(self.hops) <= max_hops:
            raise InvalidQuestion(f"hop count {len(self.hops)} outside 1..{max_hops}")
        for i, hop in enumerate(self.hops[1:], start=2):
            if not hop.properties:
                raise InvalidQuestion(f"hop {i} has no property reference")
        return self

    def spans(self) -> list[ReferenceSpan]:
        out = []
        for i, hop in enumerate(self.hops, start=1):
            for prefix, refs in (("E", hop.entities), ("P", hop.properties), ("C", hop.classes)):
                out.extend(ReferenceSpan(text, f"{prefix}{i}") for text in refs)
        return out

    def to_json(self) -> dict[str, Any]:
        return {
            "qtype": self.qtype.value,
            "hops": [{"entities": list(h.entities), "properties": list(h.properties),
                      "classes": list(h.classes)} for h in self.hops],
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> QuestionModel:
        return cls(QuestionType.parse(data["qtype"]),
                   [Hop(list(h.get("entities", [])), list(h.get("properties", [])),
                        list(h.get("classes", []))) for h in data["hops"]])


@dataclass
class InterpretedHop:
    entities: list[Candidates] = field(default_factory=list)
    properties: list[Candidates] = field(default_factory=list)
    classes: list[Candidates] = field(default_factory=list)


@dataclass
class InterpretedQuestion:
    qtype: QuestionType
    hops: list[InterpretedHop]

    def to_json(self, kg: KnowledgeGraph) -> dict[str, Any]:
        def dump(lists: list[Candidates]) -> list[list[list[Any]]]:
            return [[[kg.uri_of(c.term), c.confidence] for c in cands] for cands in lists]

        return {
            "qtype": self.qtype.value,
            "hops": [{"entities": dump(h.entities), "properties": dump(h.properties),
                      "classes": dump(h.classes)} for h in self.hops],
        }

    @classmethod
    def from_json(cls, data: dict[str, Any], kg: KnowledgeGraph) -> InterpretedQuestion:
        """Rebuild from the JSON shape; URIs unknown to ``kg`` are dropped."""

        def load(lists: Iterable[Iterable[Any]]) -> list[Candidates]:
            out = []
            for cands in lists:
                scores: dict[int, float] = {}
                for uri, conf in cands:
                    conf = float(conf)
                    if not 0.0 <= conf <= 1.0:
                        raise ValueError(f"confidence {conf} for {uri} outside [0, 1]")
                    term = kg.get_id(uri)
                    if term is None:
                        log.warning("dropping candidate %s: not in the graph", uri)
                        continue
                    scores[term] = max(conf, scores.get(term, 0.0))
                out.append(rank(scores, len(scores)))
            return out

        return cls(QuestionType.parse(data["qtype"]),
                   [InterpretedHop(load(h.get("entities", [])), load(h.get("properties", [])),
                                   load(h.get("classes", []))) for h in data["hops"]])


def model_from_spans(qtype: QuestionType | str, spans: Iterable[ReferenceSpan],
                     max_hops: int = MAX_HOPS) -> QuestionModel:
    spans = list(spans)
    n_hops = max((s.hop for s in spans), default=1)
    hops = [Hop() for _ in range(n_hops)]
    for span in spans:
        getattr(hops[span.hop - 1], span.kind).append(span.text)
    return QuestionModel(QuestionType.parse(qtype), hops).validate(max_hops)


def annotate_gold(record: DatasetRecord, max_hops: int = MAX_HOPS) -> QuestionModel:
    """Pass the record's ground-truth spans straight into a question model."""
    if not record.gold_spans:
        raise AnnotationMissing(f"record {record.id!r} has no span annotations")
    return model_from_spans(record.qtype, record.gold_spans, max_hops)


def interpret_gold_uris(record: DatasetRecord, kg: KnowledgeGraph,
                        max_hops: int = MAX_HOPS) -> InterpretedQuestion:
    """Interpretation where every reference is its gold URI with confidence 1."""
    if not record.gold_uris:
        raise AnnotationMissing(f"record {record.id!r} has no gold URIs")
    n_hops = max(s.hop for s in record.gold_uris)
    if n_hops > max_hops:
        raise InvalidQuestion(f"hop count {n_hops} exceeds {max_hops}")
    hops = [InterpretedHop() for _ in range(n_hops)]
    for ref in record.gold_uris:
        term = kg.get_id(ref.text)
        cands = Candidates() if term is None else Candidates([MatchCandidate(term, 1.0)])
        getattr(hops[ref.hop - 1], ref.kind).append(cands)
    return InterpretedQuestion(record.qtype, hops)


_AUX = {"is", "are", "was", "were", "does", "did", "do"}


def detect_question_type(text: str) -> QuestionType:
    low = text.strip().lower()
    if low.startswith("how many") or re.search(r"\b(count|number of)\b", low):
        return QuestionType.COUNT
    words = low.split()
    if words and words[0] in _AUX:
        return QuestionType.ASK
    return QuestionType.SELECT


_WH = {"what", "which", "who", "whom", "whose", "where", "when", "how", "name", "list",
       "give", "tell", "show"}
_STOP = _WH | _AUX | {
    "a", "an", "the", "of", "in", "on", "at", "to", "for", "by", "with", "from", "and",
    "or", "as", "into", "its", "it", "his", "her", "their", "has", "have", "had", "be",
    "been", "that", "this", "these", "those", "also", "me", "many", "much", "there",
    "whose", "some", "any", "all", "both", "does", "did", "can", "you", "he", "she",
    "they", "them", "i", "we", "us", "our", "my", "your", "than", "then", "so", "not",
}
_RELATIVE = {"whose", "which", "who", "whom", "that", "where"}
_WORD_RE = re.compile(r"[A-Za-z0-9][\w'.-]*[\w]|[A-Za-z0-9]|,")


def _is_cap(token: str) -> bool:
    return token[:1].isupper() or token[:1].isdigit()


def annotate_heuristic(text: str, max_hops: int = MAX_HOPS) -> QuestionModel:
    """Rule-based baseline annotator.

    Capitalized runs (not sentence-initial) become hop-1 entities, the nearest
    content word on each side of an entity becomes a hop-1 property, and the
    noun after an initial which/what becomes a hop-2 property when a second
    clause follows.
    """
    qtype = detect_question_type(text)
    toks = [(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]
    words = [t[0] for t in toks]

    # Entity runs: consecutive capitalized tokens, a comma may join two of them.
    runs: list[tuple[int, int]] = []
    i = 1
    while i < len(toks):
        if words[i] != "," and _is_cap(words[i]) and words[i].lower() not in _STOP:
            j = i
            while True:
                if j + 1 < len(toks) and words[j + 1] != "," and _is_cap(words[j + 1]):
                    j += 1
                elif (j + 2 < len(toks) and words[j + 1] == ","
                      and _is_cap(words[j + 2]) and words[j + 2].lower() not in _STOP):
                    j += 2
                else:
                    break
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    in_run = {k for a, b in runs for k in range(a, b + 1)}

    def content(k: int) -> bool:
        return (k not in in_run and words[k] != ","
                and words[k].lower() not in _STOP and not _is_cap(words[k]))

    hop1 = Hop(entities=[text[toks[a][1]:toks[b][2]] for a, b in runs])

    wh_noun = None
    if len(words) > 1 and words[0].lower() in ("which", "what") and content(1):
        wh_noun = 1
    second_clause = any(
        w.lower() in _RELATIVE or (w.lower() == "and" and k + 1 < len(words)
                                   and words[k + 1].lower() in _AUX | {"has", "have", "had"})
        for k, w in enumerate(words) if k > 0
    )
    use_hop2 = wh_noun is not None and second_clause and max_hops >= 2

    props: list[int] = []
    for a, b in runs:
        for step, start in ((-1, a - 1), (1, b + 1)):
            k = start
            while 0 <= k < len(words) and words[k] != "," and k not in in_run:
                if content(k):
                    if k not in props and not (use_hop2 and k == wh_noun):
                        props.append(k)
                    break
                k += step
    hop1.properties = [words[k] for k in sorted(props)]

    hops = [hop1]
    if use_hop2:
        hops.append(Hop(properties=[words[wh_noun]]))
    return QuestionModel(qtype, hops)


def interpret(qm: QuestionModel, catalog: Catalog) -> InterpretedQuestion:
    """Replace every reference by its ranked candidate list; empty lists are kept."""
    return InterpretedQuestion(
        qm.qtype,
        [InterpretedHop([catalog.match_entity(r) for r in hop.entities],
                        [catalog.match_property(r) for r in hop.properties],
                        [catalog.match_class(r) for r in hop.classes])
         for hop in qm.hops],
    )
