"""Chat-completion clients and the sharded generation job runner.

Requests are plain chat-completion JSON bodies; replies come back as
CompletionReply. Failures inside generate() become failed records, never
exceptions, so a long job survives a flaky endpoint. Jobs write one shard
per style plus a manifest of finished keys and can resume after a crash
without duplicating work.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import requests

from .corpus import Chunk, Document, chunk_corpus
from .errors import (
    BudgetExhaustedError,
    ConfigurationError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .prompts import StyleRegistry, default_registry
from .tokenizers import TokenizerSpec, count_tokens

API_KEY_ENV = "MIND_API_KEY"

CONVERSATION_FIELDS = (
    "doc_id",
    "chunk_index",
    "style",
    "text",
    "prompt_tokens",
    "output_tokens",
    "status",
    "meta",
)


@dataclass(frozen=True)
class GenerationConfig:
    model_name: str = "mock"
    temperature: float = 1.0
    top_p: float = 0.9
    total_token_limit: int = 4096
    max_retries: int = 3
    max_in_flight: int = 4
    retry_base_delay: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.total_token_limit <= 0:
            raise ConfigurationError("total_token_limit must be positive")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")
        if self.retry_base_delay < 0:
            raise ConfigurationError("retry_base_delay must be >= 0")

    def digest(self) -> str:
        """Stable short hash of the sampling-relevant settings."""
        payload = json.dumps(
            {
                "model": self.model_name,
                "temperature": self.temperature,
                "top_p": self.top_p,
                "total_token_limit": self.total_token_limit,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass
class Conversation:
    doc_id: str
    chunk_index: int
    style: str
    text: str
    prompt_tokens: int
    output_tokens: int
    gen_config_digest: str
    status: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValidationError(f"status must be ok or failed, got {self.status!r}")

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.doc_id, self.chunk_index, self.style)

    def to_record(self) -> dict:
        meta = dict(self.meta)
        meta["gen_config_digest"] = self.gen_config_digest
        return {
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "style": self.style,
            "text": self.text,
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "status": self.status,
            "meta": meta,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "Conversation":
        meta = dict(obj.get("meta", {}))
        digest = meta.pop("gen_config_digest", "")
        return cls(
            doc_id=obj["doc_id"],
            chunk_index=obj["chunk_index"],
            style=obj["style"],
            text=obj["text"],
            prompt_tokens=obj["prompt_tokens"],
            output_tokens=obj["output_tokens"],
            gen_config_digest=digest,
            status=obj["status"],
            meta=meta,
        )


@dataclass
class CompletionReply:
    text: str
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    finish_reason: str = "stop"


def max_output_budget(prompt_tokens: int, cfg: GenerationConfig) -> int:
    """Tokens left for the reply; the prompt must leave room for at least one."""
    if prompt_tokens >= cfg.total_token_limit:
        raise BudgetExhaustedError(
            f"prompt is {prompt_tokens} tokens, limit is {cfg.total_token_limit}"
        )
    return cfg.total_token_limit - prompt_tokens


def build_request(prompt: str, cfg: GenerationConfig, max_tokens: int) -> dict:
    return {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": max_tokens,
    }


class MockChatClient:
    """Offline stand-in: a pure function of the request, with call accounting.

    Dialogue prompts get a small two-speaker conversation stitched from the
    context's own words; rubric prompts get a four-line score block. Pass
    (substring, reply) overrides to script specific cases.
    """

    JUDGE_MARKER = "Rate the conversation on each dimension"

    def __init__(
        self,
        overrides: list[tuple[str, str]] | None = None,
        latency: float = 0.0,
    ):
        self.overrides = list(overrides or [])
        self.latency = latency
        self.calls = 0
        self.max_in_flight_seen = 0
        self._in_flight = 0
        self._lock = threading.Lock()

    def complete(self, request: dict) -> CompletionReply:
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            if self._in_flight > self.max_in_flight_seen:
                self.max_in_flight_seen = self._in_flight
        try:
            if self.latency:
                time.sleep(self.latency)
            return self._reply(request)
        finally:
            with self._lock:
                self._in_flight -= 1

    def _reply(self, request: dict) -> CompletionReply:
        content = request["messages"][0]["content"]
        text = None
        for needle, scripted in self.overrides:
            if needle in content:
                text = scripted
                break
        if text is None:
            if self.JUDGE_MARKER in content:
                text = self._score_block(content)
            else:
                text = self._dialogue(content)
        prompt_tokens = len(content.split())
        words = text.split()
        finish = "stop"
        limit = request.get("max_tokens")
        if limit is not None and len(words) > limit:
            words = words[:limit]
            text = " ".join(words)
            finish = "length"
        return CompletionReply(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=len(words),
            finish_reason=finish,
        )

    @staticmethod
    def _hash(content: str) -> int:
        return int.from_bytes(hashlib.md5(content.encode()).digest()[:8], "big")

    def _dialogue(self, content: str) -> str:
        context = content.rsplit("\n\n", 1)[0]
        words = context.split() or ["..."]
        h = self._hash(content)
        target = 52 + h % 48
        speakers = ("Alice", "Bob")
        lines: list[str] = []
        used = 0
        turn = 0
        while used < target:
            take = 5 + (h >> (turn % 16)) % 7
            seg = " ".join(words[(turn * 7 + i) % len(words)] for i in range(take))
            lines.append(f"{speakers[turn % 2]}: {seg}")
            used += take + 1
            turn += 1
        return "\n".join(lines)

    def _score_block(self, content: str) -> str:
        h = self._hash(content)
        names = ("Correctness", "Faithfulness", "Information Preservation", "New Knowledge")
        return "\n".join(
            f"{name}: {3 + (h >> (2 * i)) % 3}" for i, name in enumerate(names)
        )


class HttpChatClient:
    """Minimal JSON-over-HTTP chat client; credentials come from MIND_API_KEY."""

    def __init__(self, endpoint: str, api_key: str | None = None, timeout: float = 120.0):
        if not endpoint:
            raise ConfigurationError("endpoint URL must be nonempty")
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self._session = requests.Session()

    def complete(self, request: dict) -> CompletionReply:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.endpoint, json=request, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.endpoint} failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"endpoint returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProtocolError(f"endpoint rejected request: HTTP {resp.status_code}")
        try:
            body = resp.json()
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"unusable completion payload: {exc}") from exc
        usage = body.get("usage") or {}
        return CompletionReply(
            text=text,
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
            finish_reason=choice.get("finish_reason", "stop"),
        )


def complete_with_retries(client, request: dict, cfg: GenerationConfig) -> tuple[CompletionReply, int]:
    """Call the client, retrying transport failures; returns (reply, retries)."""
    last: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        try:
            return client.complete(request), attempt
        except TransportError as exc:
            last = exc
            if attempt < cfg.max_retries and cfg.retry_base_delay:
                time.sleep(cfg.retry_base_delay * (2**attempt))
    assert last is not None
    raise last


def generate(
    chunk: Chunk,
    style: str,
    cfg: GenerationConfig,
    client,
    spec: TokenizerSpec | None = None,
    registry: StyleRegistry | None = None,
) -> Conversation:
    """One conversation for one chunk. Endpoint trouble yields a failed record."""
    registry = registry or default_registry()
    prompt = registry.render_prompt(style, chunk.text)
    prompt_tokens = count_tokens(prompt, spec)
    digest = cfg.digest()

    def failed(reason: str, retries: int = 0) -> Conversation:
        return Conversation(
            doc_id=chunk.doc_id,
            chunk_index=chunk.index,
            style=style,
            text="",
            prompt_tokens=prompt_tokens,
            output_tokens=0,
            gen_config_digest=digest,
            status="failed",
            meta={"error": reason, "retry_count": str(retries)},
        )

    try:
        budget = max_output_budget(prompt_tokens, cfg)
    except BudgetExhaustedError as exc:
        return failed(f"budget-exhausted: {exc}")

    request = build_request(prompt, cfg, budget)
    try:
        reply, retries = complete_with_retries(client, request, cfg)
    except TransportError as exc:
        return failed(f"transport: {exc}", retries=cfg.max_retries)
    except ProtocolError as exc:
        return failed(f"protocol: {exc}")

    if reply.completion_tokens is not None:
        output_tokens = reply.completion_tokens
    else:
        output_tokens = count_tokens(reply.text, spec)
    meta = {"retry_count": str(retries)}
    if reply.finish_reason == "length":
        meta["truncated"] = "true"
    return Conversation(
        doc_id=chunk.doc_id,
        chunk_index=chunk.index,
        style=style,
        text=reply.text,
        prompt_tokens=prompt_tokens,
        output_tokens=output_tokens,
        gen_config_digest=digest,
        status="ok",
        meta=meta,
    )


@dataclass
class JobSummary:
    requested: int = 0
    ok: int = 0
    failed: int = 0
    skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "requested": self.requested,
            "ok": self.ok,
            "failed": self.failed,
            "skipped": self.skipped,
        }


def _manifest_path(job_dir: Path) -> Path:
    return job_dir / "manifest.tsv"


def _shard_path(job_dir: Path, style: str) -> Path:
    return job_dir / "conversations" / f"{style}.jsonl"


def read_shard(path: str | Path) -> Iterator[Conversation]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield Conversation.from_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"bad record at {path}:{lineno}: {exc}") from exc


def _scan_shard(
    path: Path,
) -> tuple[list[tuple[str, tuple[str, int, str], bool]], bool]:
    """(line, key, is_failed) triples, tolerating one torn trailing line.

    A crash can leave a half-written last line; it is dropped and reported so
    the caller can truncate it before appending more records. A bad line in
    the middle means real corruption and raises.
    """
    rows: list[tuple[str, tuple[str, int, str], bool]] = []
    raw = path.read_text(encoding="utf-8").splitlines()
    torn = False
    for i, line in enumerate(raw):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            key = (obj["doc_id"], obj["chunk_index"], obj["style"])
            is_failed = obj["status"] == "failed"
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            if i == len(raw) - 1:
                torn = True
                break
            raise ValidationError(f"corrupt record at {path}:{i + 1}: {exc}") from exc
        rows.append((line, key, is_failed))
    return rows, torn


def _recover_job_state(
    job_dir: Path, styles: list[str], retry_failed: bool
) -> set[tuple[str, int, str]]:
    """Rebuild the completed-key set from manifest and shards.

    The union of both survives a crash between a shard append and its
    manifest append. With retry_failed, failed records are compacted out of
    the shards and their keys freed for another attempt.
    """
    completed: set[tuple[str, int, str]] = set()
    manifest = _manifest_path(job_dir)
    if manifest.exists():
        for line in manifest.read_text(encoding="utf-8").splitlines():
            parts = line.split("\t")
            if len(parts) == 3:
                completed.add((parts[0], int(parts[1]), parts[2]))
    for style in styles:
        shard = _shard_path(job_dir, style)
        if not shard.exists():
            continue
        rows, torn = _scan_shard(shard)
        failed_keys = {key for _, key, is_failed in rows if is_failed}
        if retry_failed and failed_keys:
            kept = [line for line, key, _ in rows if key not in failed_keys]
            shard.write_text("".join(l + "\n" for l in kept), encoding="utf-8")
            completed -= failed_keys
            completed |= {key for _, key, is_failed in rows if not is_failed}
        else:
            if torn:
                shard.write_text(
                    "".join(l + "\n" for l, _, _ in rows), encoding="utf-8"
                )
            completed |= {key for _, key, _ in rows}
    if retry_failed and manifest.exists():
        manifest.write_text(
            "".join(f"{d}\t{i}\t{s}\n" for d, i, s in sorted(completed)),
            encoding="utf-8",
        )
    return completed


def run_generation_over_chunks(
    chunks: Iterable[Chunk],
    styles: list[str],
    cfg: GenerationConfig,
    client,
    job_dir: str | Path,
    spec: TokenizerSpec | None = None,
    *,
    retry_failed: bool = False,
    registry: StyleRegistry | None = None,
) -> JobSummary:
    """Generate every (chunk, style) pair not already finished in job_dir."""
    registry = registry or default_registry()
    for style in styles:
        registry.instruction(style)
    job_dir = Path(job_dir)
    (job_dir / "conversations").mkdir(parents=True, exist_ok=True)
    completed = _recover_job_state(job_dir, styles, retry_failed)

    summary = JobSummary()
    seen_this_run: set[tuple[str, int, str]] = set()
    handles: dict[str, object] = {}
    try:
        manifest_fh = open(_manifest_path(job_dir), "a", encoding="utf-8")

        def shard_fh(style: str):
            if style not in handles:
                handles[style] = open(_shard_path(job_dir, style), "a", encoding="utf-8")
            return handles[style]

        def tasks() -> Iterator[tuple[tuple[str, int, str], Chunk, str]]:
            for chunk in chunks:
                if "\t" in chunk.doc_id or "\n" in chunk.doc_id:
                    raise ValidationError(
                        f"doc id {chunk.doc_id!r} contains tab or newline"
                    )
                for style in styles:
                    key = (chunk.doc_id, chunk.index, style)
                    if key in seen_this_run:
                        raise ValidationError(f"duplicate generation key {key}")
                    seen_this_run.add(key)
                    if key in completed:
                        summary.skipped += 1
                        continue
                    yield key, chunk, style

        def write(key: tuple[str, int, str], conv: Conversation) -> None:
            fh = shard_fh(conv.style)
            fh.write(json.dumps(conv.to_record(), ensure_ascii=False) + "\n")
            fh.flush()
            manifest_fh.write(f"{key[0]}\t{key[1]}\t{key[2]}\n")
            manifest_fh.flush()
            if conv.status == "ok":
                summary.ok += 1
            else:
                summary.failed += 1

        window = max(cfg.max_in_flight, 1) * 2
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            pending: deque = deque()
            try:
                for key, chunk, style in tasks():
                    summary.requested += 1
                    pending.append(
                        (key, pool.submit(generate, chunk, style, cfg, client, spec, registry))
                    )
                    if len(pending) >= window:
                        done_key, future = pending.popleft()
                        write(done_key, future.result())
                while pending:
                    done_key, future = pending.popleft()
                    write(done_key, future.result())
            except BaseException:
                pool.shutdown(wait=False, cancel_futures=True)
                raise
    finally:
        for fh in handles.values():
            fh.close()
        try:
            manifest_fh.close()
        except NameError:
            pass
    return summary


def run_generation_job(
    corpus: Iterable[Document],
    styles: list[str],
    cfg: GenerationConfig,
    client,
    job_dir: str | Path,
    spec: TokenizerSpec | None = None,
    *,
    retry_failed: bool = False,
    registry: StyleRegistry | None = None,
) -> JobSummary:
    """Chunk the documents, then generate one conversation per chunk and style."""
    return run_generation_over_chunks(
        chunk_corpus(corpus, spec),
        styles,
        cfg,
        client,
        job_dir,
        spec,
        retry_failed=retry_failed,
        registry=registry,
    )
