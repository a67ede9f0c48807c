"""Command-line entry point: ``kgqa {load,index,answer,explain,eval}``.

Settings come from built-in defaults, then a flat JSON config file (``--config``
or ``$KGQA_CONFIG``), then flags.  Exit codes: 0 success, 1 usage error,
2 data or format error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from ._binio import FormatError
from .catalog import TOP_ENTITIES, TOP_PROPERTIES, Catalog, LexicalIndex, VectorFormatError, \
    build_lexical_index, load_vectors
from .engine import DEFAULT_THRESHOLD, Hyperparams, answer_question
from .evaluation import PARSERS, DatasetError, QAEngine, evaluate, read_dataset
from .question import InterpretedQuestion, QuestionType, annotate_heuristic, interpret
from .store import NTriplesParseError, load_graph, load_ntriples

log = logging.getLogger("kgqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class Config:
    kg_path: str | None = None
    vectors_path: str | None = None
    dataset_path: str | None = None
    index_path: str | None = None
    answer_threshold: float = DEFAULT_THRESHOLD
    top_entities: int = TOP_ENTITIES
    top_properties: int = TOP_PROPERTIES
    class_filter: bool = True
    parser: str = "gold"
    max_hops: int = 2

    @classmethod
    def from_sources(cls, file_values: dict[str, Any], flag_values: dict[str, Any]) -> Config:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(file_values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
        cfg = cls(**merged)
        if cfg.parser not in PARSERS:
            raise UsageError(f"unknown parser {cfg.parser!r}")
        return cfg

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(answer_threshold=self.answer_threshold,
                           class_filter=self.class_filter, max_hops=self.max_hops)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file (default: $KGQA_CONFIG)")
    p.add_argument("--kg", dest="kg_path", help="N-Triples file or store snapshot")
    p.add_argument("--vectors", dest="vectors_path", help="text word-vector file")
    p.add_argument("--index", dest="index_path", help="saved lexical index")
    p.add_argument("--threshold", dest="answer_threshold", type=float)
    p.add_argument("--top-entities", dest="top_entities", type=int)
    p.add_argument("--top-properties", dest="top_properties", type=int)
    p.add_argument("--no-class-filter", dest="class_filter", action="store_const", const=False)
    p.add_argument("--parser", dest="parser", choices=PARSERS)
    p.add_argument("--max-hops", dest="max_hops", type=int)
    p.add_argument("--output", "-o", help="write output here instead of stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgqa", description="Message-passing question answering over a knowledge graph.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("load", help="parse N-Triples and write a binary store snapshot")
    _add_common(p)

    p = sub.add_parser("index", help="build and save the lexical label index")
    _add_common(p)

    for name, text in (("answer", "answer one question"),
                       ("explain", "answer one question and dump per-hop traces")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("question", nargs="?", help="question text (heuristic annotation)")
        p.add_argument("--interpretation", help="interpreted-question JSON file")
        p.add_argument("--qtype", type=str.upper, choices=[t.value for t in QuestionType])
        if name == "answer":
            p.add_argument("--explain", action="store_true", help="include per-hop trace")

    p = sub.add_parser("eval", help="evaluate on a JSON-lines dataset")
    _add_common(p)
    p.add_argument("--dataset", dest="dataset_path")
    p.add_argument("--jobs", type=int, default=1)
    return parser


_CONFIG_FLAGS = [f.name for f in dataclasses.fields(Config)]


def _config(args: argparse.Namespace) -> Config:
    path = args.config or os.environ.get("KGQA_CONFIG")
    file_values: dict[str, Any] = {}
    if path:
        try:
            file_values = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a JSON object")
    flags = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    return Config.from_sources(file_values, flags)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _require(value: str | None, flag: str) -> str:
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _catalog(cfg: Config, kg) -> Catalog:
    index = LexicalIndex.load(cfg.index_path) if cfg.index_path else None
    vectors = load_vectors(cfg.vectors_path) if cfg.vectors_path else None
    return Catalog(kg, index, vectors, top_entities=cfg.top_entities,
                   top_properties=cfg.top_properties)


def cmd_load(args: argparse.Namespace, cfg: Config) -> int:
    src = _require(cfg.kg_path, "--kg")
    kg = load_ntriples(src)
    out = args.output or f"{src}.snap"
    kg.save_snapshot(out)
    print(f"terms={kg.num_terms} triples={len(kg)} labeled={len(kg.labels)} snapshot={out}")
    return EXIT_OK


def cmd_index(args: argparse.Namespace, cfg: Config) -> int:
    kg = load_graph(_require(cfg.kg_path, "--kg"))
    index = build_lexical_index(kg)
    out = args.output or f"{cfg.kg_path}.index"
    index.save(out)
    print(f"documents={index.num_docs} features={len(index.postings)} index={out}")
    return EXIT_OK


def _interpreted(args: argparse.Namespace, cfg: Config, kg, catalog: Catalog) -> InterpretedQuestion:
    if args.interpretation:
        data = json.loads(Path(args.interpretation).read_text(encoding="utf-8"))
        iq = InterpretedQuestion.from_json(data, kg)
    elif args.question:
        iq = interpret(annotate_heuristic(args.question, cfg.max_hops), catalog)
    else:
        raise UsageError("give a question or --interpretation")
    if args.qtype:
        iq.qtype = QuestionType(args.qtype)
    return iq


def cmd_answer(args: argparse.Namespace, cfg: Config, dump_subgraphs: bool = False) -> int:
    kg = load_graph(_require(cfg.kg_path, "--kg"))
    catalog = _catalog(cfg, kg)
    iq = _interpreted(args, cfg, kg, catalog)
    final = answer_question(kg, iq, cfg.hyperparams())
    trace = dump_subgraphs or getattr(args, "explain", False)
    text = json.dumps(final.to_json(kg, include_trace=trace), indent=2)
    if dump_subgraphs:
        dumps = [h.subgraph.dump(kg) for h in final.hops if h.subgraph is not None]
        text = "\n".join([*dumps, text])
    _emit(text, args.output)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: Config) -> int:
    records, rejected = read_dataset(_require(cfg.dataset_path, "--dataset"))
    for rid in rejected:
        print(f"rejected record {rid}: answer payload does not match qtype", file=sys.stderr)
    kg = load_graph(_require(cfg.kg_path, "--kg"))
    engine = QAEngine(kg, _catalog(cfg, kg), cfg.hyperparams(), cfg.parser)
    report = evaluate(engine, records, jobs=max(1, args.jobs))
    print(report.table())
    payload = json.dumps(report.to_json(), indent=2)
    if args.output:
        Path(args.output).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "load":
            return cmd_load(args, cfg)
        if args.command == "index":
            return cmd_index(args, cfg)
        if args.command == "answer":
            return cmd_answer(args, cfg)
        if args.command == "explain":
            return cmd_answer(args, cfg, dump_subgraphs=True)
        return cmd_eval(args, cfg)
    except UsageError as exc:
        print(f"kgqa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NTriplesParseError as exc:
        print(f"kgqa: parse error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, FormatError, VectorFormatError, DatasetError, ValueError) as exc:
        print(f"kgqa: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
