"""Knowledge-graph logical-form engine and weakly-supervised data generator."""

from .bfs import (BfsConfig, Candidate, GenerationResult, Scores,
                  SilverExample, answer_f1, generate, select)
from .grammar import (Apply, Leaf, LfType, LfTypeError, ParseError, Token,
                      lf_to_text, linearize, parse_lf_text, parse_tokens,
                      type_check)
from .interp import EvalError, EvalResult, ValueKindMismatch, evaluate
from .kg import GraphLoadError, KnowledgeGraph, Value, load_graph
from .nel import Annotation, AnswerSpec, Dialog, Turn, link, resolve_history

__version__ = "0.1.0"

__all__ = [
    "Annotation", "AnswerSpec", "Apply", "BfsConfig", "Candidate", "Dialog",
    "EvalError", "EvalResult", "GenerationResult", "GraphLoadError",
    "KnowledgeGraph", "Leaf", "LfType", "LfTypeError", "ParseError", "Scores",
    "SilverExample", "Token", "Turn", "Value", "ValueKindMismatch",
    "answer_f1", "evaluate", "generate", "lf_to_text", "linearize", "link",
    "load_graph", "parse_lf_text", "parse_tokens", "resolve_history",
    "select", "type_check",
]
