"""Pipeline configuration and the file-to-file stage functions.

Every stage reads the previous stage's files from the job directory and
writes its own, so stages can run separately or be sequenced by
run_pipeline; both paths produce identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .compose import (
    BlendManifest,
    DatasetSpec,
    compose_dataset,
    compute_blend,
    dataset_token_total,
    sample_blend,
    select_longest,
)
from .corpus import (
    ReadStats,
    chunk_corpus,
    read_chunks,
    read_corpus,
    write_chunks,
    write_corpus,
)
from .errors import ConfigurationError, EndpointError, ScoreParseError, ValidationError
from .filters import (
    conversation_flags,
    heuristic_filter,
    quality_gate,
    score_conversation,
)
from .genclient import (
    Conversation,
    GenerationConfig,
    HttpChatClient,
    MockChatClient,
    read_shard,
    run_generation_over_chunks,
)
from .prompts import CANONICAL_STYLES, StyleRegistry
from .tokenizers import TokenizerSpec, count_tokens, get_tokenizer

COMPOSE_SELECT = ("none", "longest")


@dataclass
class PipelineConfig:
    corpus: list[str] = field(default_factory=list)
    job_dir: str = "job"
    tokenizer: str = "whitespace"
    window: int = 500
    min_trailing: int = 50
    styles: list[str] = field(default_factory=lambda: list(CANONICAL_STYLES))
    model: str = "mock"
    endpoint: str | None = None
    temperature: float = 1.0
    top_p: float = 0.9
    total_token_limit: int = 4096
    max_retries: int = 3
    max_in_flight: int = 4
    retry_base_delay: float = 1.0
    retry_failed: bool = False
    min_tokens: int = 50
    strict: bool = False
    with_judge: bool = False
    quality_threshold: float = 3.0
    rescore: bool = False
    mode: str = "all"
    select: str = "none"
    budget: int | None = None
    seed: int = 0
    blend_sources: list[dict] = field(default_factory=list)
    manifest_only: bool = False
    templates_dir: str | None = None

    def __post_init__(self):
        get_tokenizer(self.tokenizer)
        if self.mode not in ("longest", "all", "concat", "mix1to1"):
            raise ConfigurationError(f"unknown compose mode {self.mode!r}")
        if self.select not in COMPOSE_SELECT:
            raise ConfigurationError(f"select must be one of {COMPOSE_SELECT}")
        if self.total_token_limit < self.window + self.min_trailing:
            raise ConfigurationError(
                f"total_token_limit {self.total_token_limit} leaves no output room "
                f"for chunks up to {self.window + self.min_trailing - 1} tokens"
            )
        if self.min_tokens < 0:
            raise ConfigurationError("min_tokens must be >= 0")
        if not isinstance(self.blend_sources, list):
            raise ConfigurationError("blend_sources must be a list of objects")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def merged(self, overrides: dict) -> "PipelineConfig":
        """New config with non-None override values applied."""
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if value is not None:
                current[key] = value
        return PipelineConfig.from_dict(current)

    def tokenizer_spec(self) -> TokenizerSpec:
        return TokenizerSpec(
            name=self.tokenizer, window=self.window, min_trailing=self.min_trailing
        )

    def gen_config(self) -> GenerationConfig:
        return GenerationConfig(
            model_name=self.model,
            temperature=self.temperature,
            top_p=self.top_p,
            total_token_limit=self.total_token_limit,
            max_retries=self.max_retries,
            max_in_flight=self.max_in_flight,
            retry_base_delay=self.retry_base_delay,
        )

    def judge_config(self) -> GenerationConfig:
        return GenerationConfig(
            model_name=self.model,
            temperature=0.0,
            top_p=1.0,
            total_token_limit=self.total_token_limit,
            max_retries=self.max_retries,
            max_in_flight=self.max_in_flight,
            retry_base_delay=self.retry_base_delay,
        )

    def registry(self) -> StyleRegistry:
        return StyleRegistry(self.templates_dir) if self.templates_dir else StyleRegistry()

    def client(self):
        if self.endpoint in (None, "", "mock"):
            return MockChatClient()
        return HttpChatClient(self.endpoint)


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return data


def _paths(cfg: PipelineConfig) -> dict[str, Path]:
    job = Path(cfg.job_dir)
    return {
        "job": job,
        "chunks": job / "chunks.jsonl",
        "conversations": job / "conversations",
        "decisions": job / "filter" / "decisions.jsonl",
        "filter_kept": job / "filter" / "kept.jsonl",
        "scores": job / "scores" / "scores.jsonl",
        "score_excluded": job / "scores" / "excluded.jsonl",
        "score_kept": job / "scores" / "kept.jsonl",
        "composed_dir": job / "composed",
        "compose_summary": job / "composed" / "summary.json",
        "blend_dir": job / "blend",
        "blend_manifest": job / "blend" / "manifest.json",
        "blend_out": job / "blend" / "blend.jsonl",
        "report": job / "report.json",
    }


def chunk_stage(cfg: PipelineConfig) -> dict:
    """Corpus files to chunks.jsonl. Duplicate ids across files are fatal."""
    if not cfg.corpus:
        raise ConfigurationError("no corpus paths configured")
    paths = _paths(cfg)
    paths["job"].mkdir(parents=True, exist_ok=True)
    spec = cfg.tokenizer_spec()
    stats = ReadStats()
    seen: dict[str, str] = {}

    def documents():
        for corpus_path in cfg.corpus:
            for doc in read_corpus(corpus_path, stats):
                if doc.id in seen:
                    raise ValidationError(
                        f"duplicate document id {doc.id!r}: {seen[doc.id]} and {corpus_path}"
                    )
                seen[doc.id] = corpus_path
                yield doc

    n_chunks = write_chunks(chunk_corpus(documents(), spec), str(paths["chunks"]))
    return {
        "documents": stats.documents,
        "skipped_lines": stats.skipped,
        "chunks": n_chunks,
    }


def generate_stage(cfg: PipelineConfig, client=None) -> dict:
    """chunks.jsonl to per-style conversation shards plus the job manifest."""
    paths = _paths(cfg)
    if not paths["chunks"].exists():
        raise FileNotFoundError(f"missing input shard {paths['chunks']}; run chunk first")
    client = client if client is not None else cfg.client()
    summary = run_generation_over_chunks(
        read_chunks(str(paths["chunks"])),
        list(cfg.styles),
        cfg.gen_config(),
        client,
        paths["job"],
        cfg.tokenizer_spec(),
        retry_failed=cfg.retry_failed,
        registry=cfg.registry(),
    )
    out = summary.to_dict()
    if summary.requested > 0 and summary.ok == 0 and summary.failed == summary.requested:
        raise EndpointError(
            f"every generation attempt failed ({summary.failed} of {summary.requested})"
        )
    return out


def _iter_shards(cfg: PipelineConfig, paths: dict[str, Path]):
    for style in cfg.styles:
        shard = paths["conversations"] / f"{style}.jsonl"
        if not shard.exists():
            raise FileNotFoundError(f"missing input shard {shard}; run generate first")
        yield from read_shard(shard)


def filter_stage(cfg: PipelineConfig) -> dict:
    """Apply the length floor; log every decision; write survivors."""
    paths = _paths(cfg)
    spec = cfg.tokenizer_spec()
    paths["decisions"].parent.mkdir(parents=True, exist_ok=True)
    summary = {"considered": 0, "kept": 0, "rejected": 0, "failed_skipped": 0}
    with open(paths["decisions"], "w", encoding="utf-8") as dec_fh, open(
        paths["filter_kept"], "w", encoding="utf-8"
    ) as kept_fh:
        for conv in _iter_shards(cfg, paths):
            if conv.status != "ok":
                summary["failed_skipped"] += 1
                continue
            summary["considered"] += 1
            decision = heuristic_filter(conv, cfg.min_tokens, spec)
            keep, reason = decision.keep, decision.reason
            if keep:
                flags = conversation_flags(conv)
                if flags and cfg.strict:
                    keep, reason = False, "strict:" + ",".join(flags)
                elif flags:
                    reason = "flagged:" + ",".join(flags)
            record = {
                "doc_id": conv.doc_id,
                "chunk_index": conv.chunk_index,
                "style": conv.style,
                "decision": "keep" if keep else "reject",
                "reason": reason,
                "token_count": decision.token_count,
            }
            dec_fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            if keep:
                kept_fh.write(json.dumps(conv.to_record(), ensure_ascii=False) + "\n")
                summary["kept"] += 1
            else:
                summary["rejected"] += 1
    return summary


def score_stage(cfg: PipelineConfig, judge=None) -> dict:
    """Judge-score the heuristic survivors and gate on the mean."""
    paths = _paths(cfg)
    if not paths["filter_kept"].exists():
        raise FileNotFoundError(
            f"missing input shard {paths['filter_kept']}; run filter first"
        )
    spec = cfg.tokenizer_spec()
    contexts = {
        (c.doc_id, c.index): c.text for c in read_chunks(str(paths["chunks"]))
    }
    judge = judge if judge is not None else cfg.client()
    judge_cfg = cfg.judge_config()
    paths["scores"].parent.mkdir(parents=True, exist_ok=True)
    summary = {"scored": 0, "kept": 0, "rejected": 0, "excluded": 0}
    with open(paths["scores"], "w", encoding="utf-8") as score_fh, open(
        paths["score_kept"], "w", encoding="utf-8"
    ) as kept_fh, open(paths["score_excluded"], "w", encoding="utf-8") as ex_fh:
        for conv in read_shard(paths["filter_kept"]):
            key = (conv.doc_id, conv.chunk_index)
            if key not in contexts:
                raise ValidationError(f"no chunk found for conversation key {key}")
            attempts = 2 if cfg.rescore else 1
            score = None
            error: ScoreParseError | None = None
            for _ in range(attempts):
                try:
                    score = score_conversation(
                        contexts[key], conv, judge, judge_cfg, spec
                    )
                    break
                except ScoreParseError as exc:
                    error = exc
            if score is None:
                assert error is not None
                ex_fh.write(
                    json.dumps(
                        {
                            "doc_id": conv.doc_id,
                            "chunk_index": conv.chunk_index,
                            "style": conv.style,
                            "error": str(error),
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
                summary["excluded"] += 1
                continue
            summary["scored"] += 1
            record = {
                "doc_id": conv.doc_id,
                "chunk_index": conv.chunk_index,
                "style": conv.style,
                **score.to_record(),
            }
            score_fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            if quality_gate(score, cfg.quality_threshold):
                kept_fh.write(json.dumps(conv.to_record(), ensure_ascii=False) + "\n")
                summary["kept"] += 1
            else:
                summary["rejected"] += 1
    return summary


def compose_stage(cfg: PipelineConfig) -> dict:
    """Kept conversations plus raw chunks to a re-ingestible dataset."""
    paths = _paths(cfg)
    kept_path = paths["score_kept"] if cfg.with_judge else paths["filter_kept"]
    if not kept_path.exists():
        raise FileNotFoundError(f"missing input shard {kept_path}; run filter first")
    spec = cfg.tokenizer_spec()
    registry = cfg.registry()
    chunks = list(read_chunks(str(paths["chunks"])))
    convs = list(read_shard(kept_path))
    if cfg.select == "longest":
        by_key: dict[tuple[str, int], list[Conversation]] = {}
        for conv in convs:
            by_key.setdefault((conv.doc_id, conv.chunk_index), []).append(conv)
        convs = [
            select_longest(group, spec, registry) for group in by_key.values()
        ]
    labeled, summary = compose_dataset(chunks, convs, cfg.mode, spec, registry)
    paths["composed_dir"].mkdir(parents=True, exist_ok=True)
    for label, docs in labeled.items():
        name = "dataset.jsonl" if label == "dataset" else f"{label}.jsonl"
        write_corpus(docs, str(paths["composed_dir"] / name))
    paths["compose_summary"].write_text(
        json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return summary


def _resolve_blend_sources(cfg: PipelineConfig, paths: dict[str, Path]) -> list[DatasetSpec]:
    placeholders = {
        "$composed": paths["composed_dir"] / "dataset.jsonl",
        "$raw": paths["composed_dir"] / "raw.jsonl",
        "$synthetic": paths["composed_dir"] / "synthetic.jsonl",
    }
    spec = cfg.tokenizer_spec()
    out = []
    for entry in cfg.blend_sources:
        unknown = set(entry) - {"name", "path", "weight", "total_tokens"}
        if unknown:
            raise ConfigurationError(f"unknown blend source keys: {sorted(unknown)}")
        try:
            name = entry["name"]
            path = entry["path"]
            weight = float(entry["weight"])
        except KeyError as exc:
            raise ConfigurationError(f"blend source missing {exc} field") from exc
        resolved = placeholders.get(path, Path(path))
        if not resolved.exists():
            raise FileNotFoundError(f"blend source {name!r}: no such file {resolved}")
        total = entry.get("total_tokens")
        if total is None:
            total = dataset_token_total(resolved, spec)
        out.append(
            DatasetSpec(name=name, path=str(resolved), total_tokens=int(total), weight=weight)
        )
    return out


def blend_stage(cfg: PipelineConfig) -> dict:
    """Compute the blend manifest and, unless manifest_only, sample the blend."""
    if cfg.budget is None:
        raise ConfigurationError("blend needs a token budget")
    if not cfg.blend_sources:
        raise ConfigurationError("blend needs at least one source")
    paths = _paths(cfg)
    specs = _resolve_blend_sources(cfg, paths)
    manifest = compute_blend(specs, cfg.budget, cfg.seed)
    paths["blend_dir"].mkdir(parents=True, exist_ok=True)
    paths["blend_manifest"].write_text(
        json.dumps(manifest.to_record(), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    summary = {
        "budget": cfg.budget,
        "documents": 0,
        "emitted_tokens": 0,
        "manifest": str(paths["blend_manifest"]),
    }
    if cfg.manifest_only:
        return summary
    spec = cfg.tokenizer_spec()
    sources = {s.name: s.path for s in specs}
    with open(paths["blend_out"], "w", encoding="utf-8") as fh:
        for doc in sample_blend(manifest, sources, spec):
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
            summary["documents"] += 1
            summary["emitted_tokens"] += count_tokens(doc.text, spec)
    return summary


def run_pipeline(cfg: PipelineConfig, client=None) -> dict:
    """Run every configured stage in order and write report.json.

    Counts come from the files, not from this invocation's activity, so a
    rerun over a finished job reports identical numbers.
    """
    paths = _paths(cfg)
    chunk_summary = chunk_stage(cfg)
    generate_stage(cfg, client=client)
    generated = sum(
        1
        for style in cfg.styles
        for _ in read_shard(paths["conversations"] / f"{style}.jsonl")
    )
    filter_summary = filter_stage(cfg)
    if cfg.with_judge:
        score_summary = score_stage(cfg, judge=client)
        kept_quality = score_summary["kept"]
    else:
        kept_quality = filter_summary["kept"]
    compose_summary = compose_stage(cfg)
    if cfg.budget is not None and cfg.blend_sources:
        blend_summary = blend_stage(cfg)
        blend_tokens = blend_summary["emitted_tokens"]
    else:
        blend_tokens = 0
    report = {
        "documents": chunk_summary["documents"],
        "chunks": chunk_summary["chunks"],
        "generated": generated,
        "kept_heuristic": filter_summary["kept"],
        "kept_quality": kept_quality,
        "composed_docs": sum(compose_summary["documents"].values()),
        "blend_tokens": blend_tokens,
    }
    paths["report"].write_text(
        json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return report
