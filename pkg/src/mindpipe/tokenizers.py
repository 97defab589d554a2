"""Token counting and the pluggable tokenizer registry.

The reference tokenizer splits on Unicode whitespace and rejoins with single
spaces, so token counts are cheap and deterministic. Anything with
encode/decode/count can be registered under a new name.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError

DEFAULT_WINDOW = 500
DEFAULT_MIN_TRAILING = 50


@dataclass(frozen=True)
class TokenizerSpec:
    """Names a registered tokenizer plus the chunking window geometry."""

    name: str = "whitespace"
    window: int = DEFAULT_WINDOW
    min_trailing: int = DEFAULT_MIN_TRAILING

    def __post_init__(self):
        if self.window <= 0:
            raise ConfigurationError(f"window must be positive, got {self.window}")
        if self.min_trailing <= 0:
            raise ConfigurationError(
                f"min_trailing must be positive, got {self.min_trailing}"
            )
        if self.min_trailing >= self.window:
            raise ConfigurationError(
                f"min_trailing ({self.min_trailing}) must be smaller than "
                f"window ({self.window})"
            )


class WhitespaceTokenizer:
    """Splits on runs of Unicode whitespace; detokenizes with single spaces."""

    def encode(self, text: str) -> list[str]:
        return text.split()

    def decode(self, tokens: list[str]) -> str:
        return " ".join(tokens)

    def count(self, text: str) -> int:
        return len(text.split())


_REGISTRY: dict[str, object] = {"whitespace": WhitespaceTokenizer()}


def register_tokenizer(name: str, tokenizer) -> None:
    """Register a tokenizer object exposing encode/decode/count."""
    for attr in ("encode", "decode", "count"):
        if not callable(getattr(tokenizer, attr, None)):
            raise ConfigurationError(f"tokenizer {name!r} lacks a callable {attr}()")
    _REGISTRY[name] = tokenizer


def get_tokenizer(name: str):
    try:
        return _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ConfigurationError(
            f"unknown tokenizer {name!r} (registered: {known})"
        ) from None


def count_tokens(text: str, spec: TokenizerSpec | None = None) -> int:
    """Token count of text under the tokenizer named by spec."""
    spec = spec or TokenizerSpec()
    return get_tokenizer(spec.name).count(text)


def encode(text: str, spec: TokenizerSpec | None = None) -> list[str]:
    spec = spec or TokenizerSpec()
    return get_tokenizer(spec.name).encode(text)


def decode(tokens: list[str], spec: TokenizerSpec | None = None) -> str:
    spec = spec or TokenizerSpec()
    return get_tokenizer(spec.name).decode(tokens)
