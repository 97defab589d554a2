"""Acceptance gate: one test per shipping criterion.

Each test pins the tolerances it checks and, where the contract bounds
runtime, times only its own work. The terminal summary section lists one
PASS/FAIL line per criterion.
"""

import itertools
import json
import os
import random
import threading
import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from _oracles import bleu_from_grams, grams_upto, rouge_from_parts
from mindpipe.analysis import bleu, rouge
from mindpipe.compose import (
    DatasetSpec,
    compute_blend,
    epochs_for,
    sample_blend,
    select_longest,
)
from mindpipe.corpus import Document, chunk_document
from mindpipe.filters import QualityScore, heuristic_filter, parse_turns, quality_gate
from mindpipe.genclient import Conversation, MockChatClient
from mindpipe.pipeline import PipelineConfig, chunk_stage, generate_stage, run_pipeline
from mindpipe.prompts import CANONICAL_STYLES
from mindpipe.tokenizers import TokenizerSpec

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden"


def test_criterion_1_chunker_round_trip():
    """1,000 random docs of 0..5,000 tokens re-concatenate exactly; all
    non-final chunks are 500 tokens and nothing exceeds 549; under 5 s."""
    rng = random.Random(20260816)
    spec = TokenizerSpec()
    pool = [f"t{i}" for i in range(5000)]
    start = time.monotonic()
    for case in range(1000):
        n = rng.randrange(0, 5001)
        tokens = pool[:n]
        doc = Document(id=f"d{case}", text=" ".join(tokens))
        chunks = chunk_document(doc, spec)
        rebuilt = []
        for i, chunk in enumerate(chunks):
            got = chunk.text.split()
            assert len(got) == chunk.token_count
            assert len(got) <= 549
            if i < len(chunks) - 1:
                assert len(got) == 500
            rebuilt.extend(got)
        assert rebuilt == tokens
    assert time.monotonic() - start < 5.0


def test_criterion_2_filter_boundaries_are_exact():
    """49 tokens rejected, 50 kept; gate mean 2.99 rejected, 3.00 kept."""
    def conv(n):
        return Conversation(
            doc_id="d", chunk_index=0, style="debate",
            text=" ".join(["w"] * n), prompt_tokens=10, output_tokens=n,
            gen_config_digest="x", status="ok",
        )

    short = heuristic_filter(conv(49))
    assert not short.keep
    assert short.token_count == 49
    assert short.reason == "token_count 49 < 50"
    assert heuristic_filter(conv(50)).keep

    assert not quality_gate(SimpleNamespace(mean=2.99))
    assert quality_gate(SimpleNamespace(mean=3.00))
    assert quality_gate(QualityScore(3, 3, 3, 3))
    assert not quality_gate(QualityScore(2, 3, 3, 3))


def test_criterion_3_metrics_match_oracles_exhaustively():
    """BLEU and ROUGE agree with brute-force oracles within 1e-12 on every
    ordered pair of token strings of length 1..6 over a 3-symbol alphabet
    (1092 strings, 1,192,464 pairs); identity scores exactly 1.0 and
    disjoint pairs exactly 0.0; under 60 s."""
    alphabet = ("a", "b", "c")
    entries = []
    for k in range(1, 7):
        for toks in itertools.product(alphabet, repeat=k):
            tok_list = list(toks)
            entries.append(
                (
                    " ".join(tok_list),
                    tok_list,
                    grams_upto(tok_list),
                    len(tok_list),
                    frozenset(tok_list),
                )
            )
    assert len(entries) == 1092

    rouge_keys = ("rouge1_f", "rouge2_f", "rougeL_f")
    bad = []
    checked = 0
    start = time.monotonic()
    for ref_text, ref_toks, ref_grams, ref_len, ref_syms in entries:
        for cand_text, cand_toks, cand_grams, cand_len, cand_syms in entries:
            got_b = bleu(ref_text, cand_text)
            want_b = bleu_from_grams(ref_grams, ref_len, cand_grams, cand_len)
            d = got_b - want_b
            if d > 1e-12 or d < -1e-12:
                bad.append(("bleu", ref_text, cand_text, got_b, want_b))
            got_r = rouge(ref_text, cand_text)
            want_r = rouge_from_parts(ref_toks, ref_grams, cand_toks, cand_grams)
            for key in rouge_keys:
                d = got_r[key] - want_r[key]
                if d > 1e-12 or d < -1e-12:
                    bad.append((key, ref_text, cand_text, got_r[key], want_r[key]))
            if ref_text == cand_text:
                # a single token carries no bigram evidence, so rouge2 is 0
                want_r2 = 1.0 if cand_len >= 2 else 0.0
                if got_b != 1.0 or got_r != {
                    "rouge1_f": 1.0, "rouge2_f": want_r2, "rougeL_f": 1.0,
                }:
                    bad.append(("identity", ref_text, got_b, got_r))
            elif not (ref_syms & cand_syms):
                if got_b != 0.0 or got_r != {k: 0.0 for k in rouge_keys}:
                    bad.append(("disjoint", ref_text, cand_text, got_b, got_r))
            checked += 1
            if len(bad) > 5:
                pytest.fail(f"metric mismatches: {bad}")
    elapsed = time.monotonic() - start
    assert checked == 1_192_464
    assert not bad, bad
    assert elapsed < 60.0, f"exhaustive sweep took {elapsed:.1f}s"


def test_criterion_4_longest_selection_matches_brute_force():
    """select_longest agrees with an exhaustive max (token count, then
    canonical style order) on 10,000 random seven-style groups."""
    rng = random.Random(44)
    for _ in range(10_000):
        lengths = [rng.randrange(0, 25) for _ in CANONICAL_STYLES]
        group = [
            Conversation(
                doc_id="d", chunk_index=0, style=style,
                text=" ".join(["w"] * n), prompt_tokens=1, output_tokens=n,
                gen_config_digest="x", status="ok",
            )
            for style, n in zip(CANONICAL_STYLES, lengths)
        ]
        rng.shuffle(group)
        expected_i = max(range(7), key=lambda i: (lengths[i], -i))
        assert select_longest(group).style == CANONICAL_STYLES[expected_i]


def test_criterion_5_blend_accounting_is_exact():
    """A 2:1 blend of 50e9 tokens allocates 33,333,333,334 / 16,666,666,666
    within plus or minus 1 token while summing exactly; 32e9 tokens over a
    4e9-token dataset is 8.000 epochs."""
    specs = [
        DatasetSpec(name="own", path="-", total_tokens=4_000_000_000, weight=2.0),
        DatasetSpec(name="other", path="-", total_tokens=8_000_000_000, weight=1.0),
    ]
    manifest = compute_blend(specs, 50_000_000_000)
    quota = {a.name: a.tokens_to_see for a in manifest.allocations}
    assert quota["own"] + quota["other"] == 50_000_000_000
    assert abs(quota["own"] - 33_333_333_334) <= 1
    assert abs(quota["other"] - 16_666_666_666) <= 1
    epochs = {a.name: a.epochs for a in manifest.allocations}
    assert epochs["own"] == round(quota["own"] / 4_000_000_000, 3)
    assert epochs["other"] == round(quota["other"] / 8_000_000_000, 3)
    assert round(quota["own"] / 1e9) == 33 and round(quota["other"] / 1e9) == 17
    assert epochs_for(32_000_000_000, 4_000_000_000) == 8.000


def test_criterion_6_sampler_is_deterministic_and_converges():
    """Two sampling runs at a fixed seed are byte-identical; the 2:1 token
    share over the first 10,000 documents is within 2 points of 2/3 and the
    deviation shrinks (or holds) from 1e4 to 1e5 documents; under 30 s."""
    rng = random.Random(69)
    syn = [
        Document(id=f"s{i}", text=" ".join(["s"] * rng.randrange(8, 13)), source="syn")
        for i in range(400)
    ]
    raw = [
        Document(id=f"r{i}", text=" ".join(["r"] * rng.randrange(12, 19)), source="raw")
        for i in range(300)
    ]
    specs = [
        DatasetSpec(name="syn", path="-", total_tokens=sum(len(d.text.split()) for d in syn), weight=2.0),
        DatasetSpec(name="raw", path="-", total_tokens=sum(len(d.text.split()) for d in raw), weight=1.0),
    ]
    manifest = compute_blend(specs, 1_200_000, seed=17)
    sources = {"syn": syn, "raw": raw}

    start = time.monotonic()
    run_a = list(sample_blend(manifest, sources))
    run_b = list(sample_blend(manifest, sources))
    bytes_a = "\n".join(json.dumps(d.to_record(), ensure_ascii=False) for d in run_a).encode()
    bytes_b = "\n".join(json.dumps(d.to_record(), ensure_ascii=False) for d in run_b).encode()
    assert bytes_a == bytes_b
    assert len(run_a) >= 100_000

    def deviation(first_n):
        syn_tokens = total = 0
        for doc in run_a[:first_n]:
            n = len(doc.text.split())
            total += n
            if doc.meta["blend_source"] == "syn":
                syn_tokens += n
        return abs(syn_tokens / total - 2 / 3)

    dev_small, dev_large = deviation(10_000), deviation(100_000)
    assert dev_small <= 0.02
    assert dev_large <= dev_small
    assert time.monotonic() - start < 30.0


class _InterruptingClient:
    """Delegates to the offline mock until one call raises KeyboardInterrupt."""

    def __init__(self, explode_at):
        self.inner = MockChatClient()
        self.explode_at = explode_at
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request):
        with self._lock:
            self.calls += 1
            n = self.calls
        if n == self.explode_at:
            raise KeyboardInterrupt
        return self.inner.complete(request)


def test_criterion_7_end_to_end_golden_run(tmp_path):
    """The full offline pipeline over the four-document fixture reproduces
    the committed outputs byte for byte, and an interrupted then resumed
    run converges to the same 28 records with no duplicate keys."""
    corpus = str(GOLDEN / "corpus.jsonl")
    files = [
        "chunks.jsonl",
        "manifest.tsv",
        "filter/decisions.jsonl",
        "filter/kept.jsonl",
        "composed/dataset.jsonl",
        "composed/summary.json",
        "report.json",
    ] + [f"conversations/{style}.jsonl" for style in CANONICAL_STYLES]

    clean = tmp_path / "clean"
    report = run_pipeline(PipelineConfig(corpus=[corpus], job_dir=str(clean), mode="all"))
    assert report["generated"] == 28
    for rel in files:
        assert (clean / rel).read_bytes() == (GOLDEN / "job" / rel).read_bytes(), rel

    resumed = tmp_path / "resumed"
    cfg = PipelineConfig(corpus=[corpus], job_dir=str(resumed), mode="all")
    chunk_stage(cfg)
    with pytest.raises(KeyboardInterrupt):
        generate_stage(cfg, client=_InterruptingClient(explode_at=9))
    report = run_pipeline(cfg)
    assert report["generated"] == 28

    keys = []
    for style in CANONICAL_STYLES:
        shard = resumed / "conversations" / f"{style}.jsonl"
        for line in shard.read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            keys.append((obj["doc_id"], obj["chunk_index"], obj["style"]))
        assert shard.read_bytes() == (GOLDEN / "job" / "conversations" / f"{style}.jsonl").read_bytes()
    assert len(keys) == 28
    assert len(set(keys)) == 28


def test_criterion_8_example_dialogues_parse():
    """Every bundled example dialogue parses to at least four turns with
    nonempty speakers; the turn-numbered transcript matches its hand count
    of 24."""
    fixtures = sorted((DATA / "dialogues").glob("*.txt"))
    assert len(fixtures) == 7
    for path in fixtures:
        turns = parse_turns(path.read_text(encoding="utf-8"))
        assert len(turns) >= 4, path.name
        assert all(t.speaker.strip() for t in turns), path.name
    two_students = parse_turns((DATA / "dialogues" / "two_students.txt").read_text(encoding="utf-8"))
    assert len(two_students) == 24


@pytest.mark.skipif(
    not os.environ.get("MIND_SMOKE_ENDPOINT"),
    reason="live smoke check; set MIND_SMOKE_ENDPOINT (and MIND_API_KEY) to run",
)
def test_criterion_9_live_endpoint_smoke(tmp_path):
    """Manual, non-gating: a ten-document run against a real endpoint has
    at least 80% of generations pass the length filter, and the similarity
    report comes out."""
    from mindpipe.analysis import style_similarity_report
    from mindpipe.corpus import read_chunks
    from mindpipe.genclient import read_shard
    from mindpipe.pipeline import filter_stage

    corpus = tmp_path / "corpus.jsonl"
    with open(corpus, "w", encoding="utf-8") as fh:
        for i in range(10):
            text = " ".join(
                f"term{i}n{j} relates to term{i}n{j + 1} by a factor of {j + 2}"
                for j in range(12)
            )
            fh.write(json.dumps({"id": f"smoke-{i}", "text": text}) + "\n")

    cfg = PipelineConfig(
        corpus=[str(corpus)],
        job_dir=str(tmp_path / "job"),
        styles=["two_professors"],
        endpoint=os.environ["MIND_SMOKE_ENDPOINT"],
        model=os.environ.get("MIND_SMOKE_MODEL", "mock"),
    )
    chunk_stage(cfg)
    generate_stage(cfg)
    summary = filter_stage(cfg)
    assert summary["considered"] > 0
    assert summary["kept"] / summary["considered"] >= 0.8

    chunks = {(c.doc_id, c.index): c for c in read_chunks(str(tmp_path / "job" / "chunks.jsonl"))}
    kept = list(read_shard(tmp_path / "job" / "filter" / "kept.jsonl"))
    report = style_similarity_report(
        [(chunks[(c.doc_id, c.chunk_index)], c) for c in kept]
    )
    assert report and report[0].style == "two_professors"
