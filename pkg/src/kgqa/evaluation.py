"""Benchmark records, QALD-style scoring and macro-averaged reports."""
from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .catalog import Catalog
from .engine import FinalAnswer, Hyperparams, answer_question
from .question import (
    InterpretedQuestion,
    QuestionType,
    ReferenceSpan,
    annotate_gold,
    annotate_heuristic,
    interpret,
    interpret_gold_uris,
)
from .store import KnowledgeGraph

log = logging.getLogger(__name__)

PARSERS = ("gold", "heuristic", "gold-uris")


class DatasetError(ValueError):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"record {index}: {message}")


@dataclass
class DatasetRecord:
    id: str
    question: str
    qtype: QuestionType
    gold_answers: frozenset[str] | bool | int
    gold_spans: list[ReferenceSpan] | None = None
    gold_uris: list[ReferenceSpan] | None = None

    def payload_matches(self) -> bool:
        if self.qtype is QuestionType.SELECT:
            return isinstance(self.gold_answers, frozenset)
        if self.qtype is QuestionType.ASK:
            return isinstance(self.gold_answers, bool)
        return isinstance(self.gold_answers, int) and not isinstance(self.gold_answers, bool)

    def to_json(self) -> dict[str, Any]:
        answers = (sorted(self.gold_answers) if isinstance(self.gold_answers, frozenset)
                   else self.gold_answers)
        out: dict[str, Any] = {"id": self.id, "question": self.question,
                               "qtype": self.qtype.value, "answers": answers}
        if self.gold_spans is not None:
            out["spans"] = [{"text": s.text, "role": s.role} for s in self.gold_spans]
        if self.gold_uris is not None:
            out["uris"] = [{"uri": s.text, "role": s.role} for s in self.gold_uris]
        return out


def _parse_record(index: int, data: Any) -> DatasetRecord:
    if not isinstance(data, dict):
        raise DatasetError(index, "record is not a JSON object")
    try:
        qtype = QuestionType.parse(data["qtype"])
        answers = data["answers"]
        if isinstance(answers, list):
            answers = frozenset(str(a) for a in answers)
        spans = uris = None
        if data.get("spans") is not None:
            spans = [ReferenceSpan(s["text"], s["role"]) for s in data["spans"]]
        if data.get("uris") is not None:
            uris = [ReferenceSpan(s["uri"], s["role"]) for s in data["uris"]]
        return DatasetRecord(str(data["id"]), str(data.get("question", "")), qtype,
                             answers, spans, uris)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(index, f"invalid record: {exc}") from None


def read_dataset(path: str | Path) -> tuple[list[DatasetRecord], list[str]]:
    """Parse a JSON-lines dataset; returns accepted records and rejected ids.

    Records whose answer payload does not fit their question type are rejected.
    """
    records: list[DatasetRecord] = []
    rejected: list[str] = []
    with open(path, encoding="utf-8") as fh:
        index = 0
        for line in fh:
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(index, f"malformed JSON: {exc.msg}") from None
            record = _parse_record(index, data)
            index += 1
            if record.payload_matches():
                records.append(record)
            else:
                rejected.append(record.id)
    return records, rejected


def load_dataset(path: str | Path) -> list[DatasetRecord]:
    records, rejected = read_dataset(path)
    if rejected:
        log.warning("rejected %d record(s) with mismatched answer payload: %s",
                    len(rejected), ", ".join(rejected))
    return records


def score_question(predicted: FinalAnswer, gold: DatasetRecord) -> tuple[float, float]:
    """Precision and recall of one prediction under the QALD zero rules."""
    if predicted.qtype is not gold.qtype:
        return 0.0, 0.0
    if gold.qtype is QuestionType.COUNT:
        return (1.0, 1.0) if predicted.count == gold.gold_answers else (0.0, 0.0)
    if gold.qtype is QuestionType.ASK:
        return (1.0, 1.0) if predicted.boolean == gold.gold_answers else (0.0, 0.0)
    pred = set(predicted.uris)
    truth = set(gold.gold_answers)
    if not pred:
        return (1.0, 1.0) if not truth else (0.0, 0.0)
    if not truth:
        return 0.0, 1.0
    hit = len(pred & truth)
    return hit / len(pred), hit / len(truth)


@dataclass
class QuestionResult:
    id: str
    precision: float
    recall: float
    elapsed: float
    answered: bool
    error: str | None = None


@dataclass
class EvalReport:
    results: list[QuestionResult] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return statistics.fmean(r.precision for r in self.results) if self.results else 0.0

    @property
    def recall(self) -> float:
        return statistics.fmean(r.recall for r in self.results) if self.results else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def unanswered(self) -> int:
        return sum(not r.answered for r in self.results)

    def timing(self) -> dict[str, float]:
        times = [r.elapsed for r in self.results]
        if not times:
            return {"min": 0.0, "median": 0.0, "mean": 0.0, "max": 0.0}
        return {"min": min(times), "median": statistics.median(times),
                "mean": statistics.fmean(times), "max": max(times)}

    def to_json(self, include_timing: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "questions": len(self.results),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "unanswered": self.unanswered,
            "per_question": [
                {"id": r.id, "precision": r.precision, "recall": r.recall,
                 "answered": r.answered, **({"error": r.error} if r.error else {}),
                 **({"elapsed": r.elapsed} if include_timing else {})}
                for r in self.results
            ],
        }
        if include_timing:
            out["timing"] = self.timing()
        return out

    def table(self) -> str:
        t = self.timing()
        rows = [
            ("questions", f"{len(self.results)}"),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("F1", f"{self.f1:.4f}"),
            ("unanswered", f"{self.unanswered}"),
            ("time min/median/mean/max (s)",
             f"{t['min']:.4f} / {t['median']:.4f} / {t['mean']:.4f} / {t['max']:.4f}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


class QAEngine:
    """A graph, its catalog and hyperparameters bundled for answering records."""

    def __init__(self, kg: KnowledgeGraph, catalog: Catalog | None = None,
                 hyperparams: Hyperparams = Hyperparams(), parser: str = "gold"):
        if parser not in PARSERS:
            raise ValueError(f"unknown parser {parser!r}")
        self.kg = kg
        self.catalog = catalog if catalog is not None else Catalog(kg)
        self.hyperparams = hyperparams
        self.parser = parser

    def interpret_record(self, record: DatasetRecord) -> InterpretedQuestion:
        max_hops = self.hyperparams.max_hops
        if self.parser == "gold-uris":
            return interpret_gold_uris(record, self.kg, max_hops)
        if self.parser == "gold":
            qm = annotate_gold(record, max_hops)
        else:
            qm = annotate_heuristic(record.question, max_hops)
        return interpret(qm, self.catalog)

    def answer_text(self, text: str) -> FinalAnswer:
        qm = annotate_heuristic(text, self.hyperparams.max_hops)
        return answer_question(self.kg, interpret(qm, self.catalog), self.hyperparams)

    def answer_record(self, record: DatasetRecord) -> FinalAnswer:
        return answer_question(self.kg, self.interpret_record(record), self.hyperparams)


def _evaluate_one(engine: QAEngine, record: DatasetRecord,
                  clock: Callable[[], float]) -> QuestionResult:
    start = clock()
    try:
        pred = engine.answer_record(record)
    except Exception as exc:  # a failing question scores zero, the run continues
        log.warning("question %s failed: %s", record.id, exc)
        return QuestionResult(record.id, 0.0, 0.0, clock() - start, False, str(exc))
    elapsed = clock() - start
    p, r = score_question(pred, record)
    answered = pred.answered if pred.qtype is QuestionType.SELECT else bool(pred.hops and pred.hops[-1].answerable)
    return QuestionResult(record.id, p, r, elapsed, answered)


def evaluate(engine: QAEngine, records: Sequence[DatasetRecord], *, jobs: int = 1,
             clock: Callable[[], float] = time.perf_counter) -> EvalReport:
    """Answer and score every record; results keep the input order."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: _evaluate_one(engine, r, clock), records))
    else:
        results = [_evaluate_one(engine, r, clock) for r in records]
    return EvalReport(results)
