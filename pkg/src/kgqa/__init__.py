"""Question answering over knowledge graphs by confidence message passing."""
from .catalog import (
    Candidates,
    Catalog,
    LexicalIndex,
    MatchCandidate,
    VectorTable,
    build_lexical_index,
    load_vectors,
    match_class,
    match_entity,
    match_property,
    normalize_uri_label,
)
from .engine import (
    AnswerSet,
    FinalAnswer,
    HopTrace,
    Hyperparams,
    answer_question,
    apply_threshold,
    entity_update,
    explain,
    filter_by_class,
    message_pass,
    property_update,
)
from .evaluation import (
    DatasetRecord,
    EvalReport,
    QAEngine,
    evaluate,
    load_dataset,
    score_question,
)
from .question import (
    InterpretedQuestion,
    QuestionModel,
    QuestionType,
    ReferenceSpan,
    annotate_gold,
    annotate_heuristic,
    detect_question_type,
    interpret,
)
from .store import KnowledgeGraph, Triple, load_graph, load_ntriples
from .subgraph import ActivationInputs, Subgraph, build_activations, extract

__version__ = "0.1.0"
