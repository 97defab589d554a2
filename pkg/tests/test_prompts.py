import pytest

from mindpipe.errors import ConfigurationError, ValidationError
from mindpipe.prompts import (
    CANONICAL_STYLES,
    REQUIRED_PHRASE,
    StyleRegistry,
    default_registry,
    judge_rubric_template,
    list_styles,
    render_prompt,
)

EXPECTED_ORDER = [
    "two_professors",
    "teacher_student",
    "two_students",
    "interview",
    "problem_solving",
    "layman_knowall",
    "debate",
]


def test_canonical_styles_fixed_order():
    assert CANONICAL_STYLES == EXPECTED_ORDER
    assert list_styles() == EXPECTED_ORDER


def test_every_builtin_instruction_carries_the_guard_phrase():
    reg = default_registry()
    for style in CANONICAL_STYLES:
        text = reg.instruction(style)
        assert REQUIRED_PHRASE in text
        assert text == text.strip()


def test_instructions_are_distinct():
    reg = default_registry()
    texts = [reg.instruction(s) for s in CANONICAL_STYLES]
    assert len(set(texts)) == len(texts)


def test_render_prompt_layout():
    prompt = render_prompt("debate", "some context text")
    instruction = default_registry().instruction("debate")
    assert prompt == f"some context text\n\n{instruction}"


def test_render_prompt_rejects_empty_context():
    with pytest.raises(ValidationError):
        render_prompt("debate", "")


def test_unknown_style_is_config_error():
    with pytest.raises(ConfigurationError, match="unknown style"):
        default_registry().instruction("soliloquy")


def test_missing_templates_dir(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        StyleRegistry(tmp_path / "nowhere")


def test_registry_requires_all_canonical_styles(tmp_path):
    (tmp_path / "debate.txt").write_text(f"x {REQUIRED_PHRASE}", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="missing styles"):
        StyleRegistry(tmp_path)


def test_registry_rejects_templates_without_guard(tmp_path):
    for style in CANONICAL_STYLES:
        (tmp_path / f"{style}.txt").write_text(
            f"make a {style} conversation. {REQUIRED_PHRASE}", encoding="utf-8"
        )
    (tmp_path / "extra.txt").write_text("free-form instruction", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="extra"):
        StyleRegistry(tmp_path)


def test_extension_styles_sort_after_canonical(tmp_path):
    for style in CANONICAL_STYLES:
        (tmp_path / f"{style}.txt").write_text(
            f"{style} instruction. {REQUIRED_PHRASE}", encoding="utf-8"
        )
    (tmp_path / "zz_custom.txt").write_text(f"custom. {REQUIRED_PHRASE}", encoding="utf-8")
    (tmp_path / "aa_custom.txt").write_text(f"custom. {REQUIRED_PHRASE}", encoding="utf-8")
    reg = StyleRegistry(tmp_path)
    assert reg.list_styles() == EXPECTED_ORDER + ["aa_custom", "zz_custom"]
    assert reg.style_rank("two_professors") < reg.style_rank("debate")
    assert reg.style_rank("debate") < reg.style_rank("aa_custom")
    assert reg.style_rank("aa_custom") < reg.style_rank("zz_custom")


def test_judge_rubric_has_placeholders_and_metrics():
    template = judge_rubric_template()
    assert "{context}" in template
    assert "{conversation}" in template
    lowered = template.lower()
    for metric in ("correctness", "faithfulness", "information preservation", "new knowledge"):
        assert metric in lowered
