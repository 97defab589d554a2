import json

import pytest

from mindpipe.genclient import Conversation


def make_conversation(
    doc_id="d1",
    chunk_index=0,
    style="two_professors",
    text="**A:** hello there\n**B:** hi again",
    status="ok",
    **meta,
):
    return Conversation(
        doc_id=doc_id,
        chunk_index=chunk_index,
        style=style,
        text=text,
        prompt_tokens=len(text.split()) + 40,
        output_tokens=len(text.split()),
        gen_config_digest="cafe00000000",
        status=status,
        meta={k: str(v) for k, v in meta.items()},
    )


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def corpus_file(tmp_path):
    """Three well-formed documents of assorted lengths."""
    path = tmp_path / "corpus.jsonl"
    docs = [
        {"id": "doc-a", "text": " ".join(f"w{i}" for i in range(120)), "source": "t"},
        {"id": "doc-b", "text": " ".join(f"x{i}" for i in range(60))},
        {"id": "doc-c", "text": "short text here", "meta": {"k": "v"}},
    ]
    write_jsonl(path, docs)
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" and outcome != "skipped":
                continue
            nodeid = rep.nodeid
            if "test_acceptance" not in nodeid or "criterion" not in nodeid:
                continue
            name = nodeid.rsplit("::", 1)[-1]
            rows.append((name, outcome.upper()))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(rows):
        label = {"PASSED": "PASS", "FAILED": "FAIL", "SKIPPED": "SKIP"}[outcome]
        terminalreporter.write_line(f"{label}  {name}")
