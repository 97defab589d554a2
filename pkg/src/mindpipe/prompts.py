"""Dialogue-style prompt registry and prompt rendering.

Each style is a text file under ``templates/styles/`` whose stem is the style
key. A prompt is the raw context, one blank line, then the style's
instruction, sent as a single user message.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigurationError, ValidationError

CANONICAL_STYLES = [
    "two_professors",
    "teacher_student",
    "two_students",
    "interview",
    "problem_solving",
    "layman_knowall",
    "debate",
]

REQUIRED_PHRASE = "DONOT add any new information"


def _builtin_styles_dir() -> Path:
    return Path(resources.files("mindpipe") / "templates" / "styles")


def _rubric_path() -> Path:
    return Path(resources.files("mindpipe") / "templates" / "judge_rubric.txt")


class StyleRegistry:
    """Loads style instructions from a templates directory."""

    def __init__(self, templates_dir: str | Path | None = None):
        directory = Path(templates_dir) if templates_dir else _builtin_styles_dir()
        if not directory.is_dir():
            raise ConfigurationError(f"templates directory not found: {directory}")
        self._instructions: dict[str, str] = {}
        for path in directory.glob("*.txt"):
            self._instructions[path.stem] = path.read_text(encoding="utf-8").strip()
        missing = [s for s in CANONICAL_STYLES if s not in self._instructions]
        if missing:
            raise ConfigurationError(
                f"templates directory {directory} is missing styles: {missing}"
            )
        degenerate = [
            key
            for key, text in self._instructions.items()
            if REQUIRED_PHRASE not in text
        ]
        if degenerate:
            raise ConfigurationError(
                f"style templates missing the {REQUIRED_PHRASE!r} guard: {degenerate}"
            )

    def list_styles(self) -> list[str]:
        """Canonical styles first, any extensions after in name order."""
        extras = sorted(set(self._instructions) - set(CANONICAL_STYLES))
        return list(CANONICAL_STYLES) + extras

    def instruction(self, style: str) -> str:
        try:
            return self._instructions[style]
        except KeyError:
            raise ConfigurationError(
                f"unknown style {style!r} (have: {', '.join(self.list_styles())})"
            ) from None

    def render_prompt(self, style: str, context: str) -> str:
        if not context:
            raise ValidationError("context must be nonempty")
        return f"{context}\n\n{self.instruction(style)}"

    def style_rank(self, style: str) -> tuple[int, str]:
        """Sort key: canonical position, then name for extension styles."""
        try:
            return (CANONICAL_STYLES.index(style), "")
        except ValueError:
            return (len(CANONICAL_STYLES), style)


_DEFAULT: StyleRegistry | None = None


def default_registry() -> StyleRegistry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = StyleRegistry()
    return _DEFAULT


def list_styles() -> list[str]:
    return default_registry().list_styles()


def render_prompt(style: str, context: str) -> str:
    return default_registry().render_prompt(style, context)


def judge_rubric_template() -> str:
    """Raw rubric template with {context} and {conversation} placeholders."""
    return _rubric_path().read_text(encoding="utf-8")
