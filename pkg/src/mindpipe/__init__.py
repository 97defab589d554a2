"""Raw-corpus-to-dialogue pretraining data pipeline."""

__version__ = "0.1.0"

from .corpus import Chunk, Document, chunk_document, read_corpus
from .errors import (
    BudgetExhaustedError,
    ConfigurationError,
    EndpointError,
    MindpipeError,
    ScoreParseError,
    TransportError,
    UndefinedCorrelationError,
    ValidationError,
)
from .tokenizers import TokenizerSpec, count_tokens, register_tokenizer

__all__ = [
    "__version__",
    "Chunk",
    "Document",
    "TokenizerSpec",
    "chunk_document",
    "count_tokens",
    "read_corpus",
    "register_tokenizer",
    "MindpipeError",
    "ConfigurationError",
    "ValidationError",
    "ScoreParseError",
    "BudgetExhaustedError",
    "TransportError",
    "EndpointError",
    "UndefinedCorrelationError",
]
