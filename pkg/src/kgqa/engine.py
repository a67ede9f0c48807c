"""Confidence propagation over hop subgraphs, answer thresholding, class
filtering, hop chaining and question-type aggregation.

For every property reference the candidate-weighted adjacency matrices are
summed into one matrix, entity-reference confidences are pushed across it, and
the per-entity results are combined as::

    A = (2 * W / (l + m) + N_E + N_P) / (l + m + 1)

where ``W`` is the summed activation an entity received, ``N_E`` the number
of entity references and ``N_P`` the number of property references that
reached it.  An entity supported by every reference with confidence 1 through
non-overlapping edges scores exactly 1.
"""
from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from .catalog import Candidates, MatchCandidate
from .question import InterpretedHop, InterpretedQuestion, QuestionType
from .store import KnowledgeGraph
from .subgraph import ActivationInputs, Subgraph, Unanswerable, build_activations, extract

log = logging.getLogger(__name__)

EPS = 1e-12
DEFAULT_THRESHOLD = 0.5


class UnanswerableHop(Unanswerable):
    pass


@dataclass(frozen=True)
class Hyperparams:
    answer_threshold: float = DEFAULT_THRESHOLD
    class_filter: bool = True
    max_hops: int = 2
    # Per-hop threshold overrides; hop i uses hop_thresholds[i] when given.
    hop_thresholds: tuple[float, ...] | None = None
    # Count N_P per (entity ref, property ref) pair instead of per property ref.
    count_pairs: bool = False

    def __post_init__(self):
        for t in (self.answer_threshold, *(self.hop_thresholds or ())):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")
        if self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")

    def threshold_for(self, hop: int) -> float:
        if self.hop_thresholds is not None and hop < len(self.hop_thresholds):
            return self.hop_thresholds[hop]
        return self.answer_threshold


@dataclass
class HopTrace:
    propagated: list[np.ndarray]
    W_raw: np.ndarray
    W: np.ndarray
    Y_E: np.ndarray
    N_E: np.ndarray
    N_P: np.ndarray
    A: np.ndarray

    @property
    def l(self) -> int:  # noqa: E743
        return int(self.Y_E.shape[0])

    @property
    def m(self) -> int:
        return len(self.propagated)


@dataclass
class Provenance:
    entity_refs: list[int]
    property_refs: list[int]
    carried: bool = False


@dataclass
class AnswerSet:
    answers: list[tuple[int, float]]
    threshold: float
    provenance: dict[int, Provenance] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.answers)

    def __bool__(self) -> bool:
        return bool(self.answers)

    def terms(self) -> list[int]:
        return [t for t, _ in self.answers]

    def as_dict(self) -> dict[int, float]:
        return dict(self.answers)


def property_update(p_row: Sequence[float], adjacency: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    """Sum of the property matrices weighted by one reference's confidences."""
    if not adjacency:
        raise ValueError("no adjacency matrices")
    if len(p_row) != len(adjacency):
        raise ValueError("property row length must equal the number of matrices")
    n = adjacency[0].shape[0]
    out = sp.csr_matrix((n, n))
    for weight, mat in zip(p_row, adjacency):
        if weight > 0:
            out = out + float(weight) * mat
    out.sort_indices()
    return out


def entity_update(E: np.ndarray, S_j: sp.spmatrix) -> np.ndarray:
    """Sum-product propagation ``E @ S_j`` of every entity-reference row."""
    E = np.atleast_2d(np.asarray(E, dtype=np.float64))
    if E.shape[1] != S_j.shape[0]:
        raise ValueError("entity rows and matrix dimensions disagree")
    return np.asarray((S_j.T @ E.T).T)


def message_pass(sg: Subgraph, act: ActivationInputs, *, count_pairs: bool = False) -> HopTrace:
    l, m, n = act.l, act.m, sg.n
    if l == 0 or m == 0:
        raise UnanswerableHop(f"hop needs entity and property references (l={l}, m={m})")
    W = np.zeros(n)
    N_P = np.zeros(n)
    Y_E = np.zeros((l, n))
    propagated = []
    for j in range(m):
        S_j = property_update(act.P[j], sg.adjacency)
        Y = entity_update(act.E, S_j)
        col = Y.sum(axis=0)
        W += col
        if count_pairs:
            N_P += (Y > EPS).sum(axis=0)
        else:
            N_P += col > EPS
        Y_E += Y
        propagated.append(Y)
    W_raw = W.copy()
    W = 2.0 * W / (l + m)
    N_E = (Y_E > EPS).sum(axis=0).astype(np.float64)
    A = (W + N_E + N_P) / (l + m + 1)
    return HopTrace(propagated, W_raw, W, Y_E, N_E, N_P, A)


def apply_threshold(trace: HopTrace, sg: Subgraph, act: ActivationInputs,
                    threshold: float) -> AnswerSet:
    """Entities with activation >= ``threshold``, excluding this hop's seeds."""
    A = trace.A
    seeds = act.E.max(axis=0) > 0 if act.l else np.zeros(sg.n, bool)
    hits = np.flatnonzero((A >= threshold) & (A > EPS) & ~seeds)
    terms = sg.local_entities[hits]
    order = np.lexsort((terms, -A[hits]))
    answers = [(int(terms[i]), float(A[hits[i]])) for i in order]
    ent_support = trace.Y_E[:, hits] > EPS
    prop_support = np.vstack([Y[:, hits].sum(axis=0) for Y in trace.propagated]) > EPS
    provenance = {}
    for i in order:
        refs = np.flatnonzero(ent_support[:, i]).tolist()
        provenance[int(terms[i])] = Provenance(
            entity_refs=refs,
            property_refs=np.flatnonzero(prop_support[:, i]).tolist(),
            carried=act.carried and (trace.l - 1) in refs,
        )
    return AnswerSet(answers, threshold, provenance)


def filter_by_class(ans: AnswerSet, class_candidates: Iterable[MatchCandidate | Candidates],
                    kg: KnowledgeGraph, enabled: bool = True) -> AnswerSet:
    """Keep answers typed with any candidate class; identity when there are none."""
    classes: set[int] = set()
    for item in class_candidates:
        if isinstance(item, MatchCandidate):
            classes.add(item.term)
        else:
            classes.update(c.term for c in item)
    if not enabled or not classes:
        return ans
    kept = [(t, a) for t, a in ans.answers if kg.types_of(t) & classes]
    return AnswerSet(kept, ans.threshold, {t: ans.provenance[t] for t, _ in kept
                                           if t in ans.provenance})


@dataclass
class HopResult:
    index: int
    status: str = "ok"
    reason: str = ""
    subgraph: Subgraph | None = None
    inputs: ActivationInputs | None = None
    trace: HopTrace | None = None
    thresholded: AnswerSet | None = None
    answers: AnswerSet | None = None

    @property
    def answerable(self) -> bool:
        return self.status == "ok"

    def to_json(self, kg: KnowledgeGraph) -> dict[str, Any]:
        out: dict[str, Any] = {"hop": self.index + 1, "status": self.status}
        if self.reason:
            out["reason"] = self.reason
        if self.subgraph is not None:
            out["subgraph"] = {"n": self.subgraph.n, "k": self.subgraph.k,
                               "nnz": self.subgraph.nnz}
        if self.inputs is not None:
            out["l"], out["m"] = self.inputs.l, self.inputs.m
        if self.answers is not None:
            out["threshold"] = self.answers.threshold
            if self.thresholded is not None:
                out["before_class_filter"] = len(self.thresholded)
            out["answers"] = [
                {"uri": kg.uri_of(t), "activation": a,
                 "entity_refs": _ref_labels(self.answers.provenance[t], self.inputs),
                 "property_refs": [f"P{self.index + 1}[{j}]"
                                   for j in self.answers.provenance[t].property_refs]}
                for t, a in self.answers.answers
            ]
        return out


def _ref_labels(prov: Provenance, inputs: ActivationInputs | None) -> list[str]:
    carried_row = inputs.l - 1 if inputs is not None and inputs.carried else -1
    return ["carried" if r == carried_row else f"E[{r}]" for r in prov.entity_refs]


@dataclass
class FinalAnswer:
    qtype: QuestionType
    answers: list[tuple[str, float]]
    count: int | None = None
    boolean: bool | None = None
    hops: list[HopResult] = field(default_factory=list)

    @property
    def uris(self) -> list[str]:
        return [u for u, _ in self.answers]

    @property
    def answered(self) -> bool:
        return bool(self.answers)

    def to_json(self, kg: KnowledgeGraph, qid: str | None = None,
                include_trace: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {"id": qid, "qtype": self.qtype.value,
                               "answers": [[u, a] for u, a in self.answers]}
        if self.qtype is QuestionType.COUNT:
            out["count"] = self.count
        if self.qtype is QuestionType.ASK:
            out["boolean"] = self.boolean
        if include_trace:
            out["trace"] = [h.to_json(kg) for h in self.hops]
        return out


def _run_hop(kg: KnowledgeGraph, hop: InterpretedHop, index: int, carry: dict[int, float] | None,
             h: Hyperparams) -> HopResult:
    result = HopResult(index)
    try:
        if index > 0 and not carry:
            raise UnanswerableHop("previous hop produced no answers")
        if not hop.properties:
            raise UnanswerableHop("hop has no property reference")
        result.subgraph = extract(kg, hop.entities, hop.properties,
                                  seeds=(carry or {}).keys())
        result.inputs = build_activations(hop.entities, hop.properties, result.subgraph, carry)
        result.trace = message_pass(result.subgraph, result.inputs, count_pairs=h.count_pairs)
    except Unanswerable as exc:
        result.status, result.reason = "unanswerable", str(exc)
        return result
    result.thresholded = apply_threshold(result.trace, result.subgraph, result.inputs,
                                         h.threshold_for(index))
    result.answers = filter_by_class(result.thresholded, hop.classes, kg, h.class_filter)
    return result


def explain(kg: KnowledgeGraph, iq: InterpretedQuestion, h: Hyperparams = Hyperparams()
            ) -> list[HopResult]:
    """Run every hop and return the per-hop results, stopping at the first
    unanswerable one."""
    if not iq.hops:
        raise ValueError("interpreted question has no hops")
    if len(iq.hops) > h.max_hops:
        raise ValueError(f"{len(iq.hops)} hops exceed max_hops={h.max_hops}")
    results: list[HopResult] = []
    carry: dict[int, float] | None = None
    for i, hop in enumerate(iq.hops):
        res = _run_hop(kg, hop, i, carry, h)
        results.append(res)
        if not res.answerable:
            break
        carry = res.answers.as_dict()
    return results


def answer_question(kg: KnowledgeGraph, iq: InterpretedQuestion,
                    h: Hyperparams = Hyperparams()) -> FinalAnswer:
    hops = explain(kg, iq, h)
    last = hops[-1]
    final = last.answers.answers if last.answerable and len(hops) == len(iq.hops) else []
    answers = [(kg.uri_of(t), a) for t, a in final]
    out = FinalAnswer(iq.qtype, answers, hops=hops)
    if iq.qtype is QuestionType.COUNT:
        out.count = len(answers)
    elif iq.qtype is QuestionType.ASK:
        out.boolean = bool(answers)
    return out
