"""Python bindings for the leitsatz summarisation and evaluation pipeline."""

import json as _json

from ._core import (
    PRF,
    ConfigError,
    DataError,
    ServiceError,
    bertscore,
    build_assignments,
    count_tokens,
    detect_entities,
    enrich,
    fleiss_kappa,
    fulfillment_report,
    lexrank_scores,
    lexrank_summary,
    rouge_l,
    rouge_n,
    run_cli,
    spearman,
    split_sentences,
    strip_tags,
    tokenize,
    version,
)
from ._core import extract_reasons as _extract_reasons


def extract_reasons(judgment):
    """Reasons text of a judgment given as a dict or a JSON string."""
    if not isinstance(judgment, str):
        judgment = _json.dumps(judgment)
    return _extract_reasons(judgment)


__version__ = version()

__all__ = [
    "PRF",
    "ConfigError",
    "DataError",
    "ServiceError",
    "bertscore",
    "build_assignments",
    "count_tokens",
    "detect_entities",
    "enrich",
    "extract_reasons",
    "fleiss_kappa",
    "fulfillment_report",
    "lexrank_scores",
    "lexrank_summary",
    "rouge_l",
    "rouge_n",
    "run_cli",
    "spearman",
    "split_sentences",
    "strip_tags",
    "tokenize",
    "version",
]
