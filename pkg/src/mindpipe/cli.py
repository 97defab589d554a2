"""Command-line entry point.

Every pipeline stage is a subcommand operating on the job directory's files,
so a full `run` and a manually chained sequence of stages produce identical
bytes. Settings come from an optional JSON config file whose keys mirror
PipelineConfig; any field can be overridden by the same-named flag.

Exit codes: 0 success, 1 usage or configuration problem, 2 bad data,
3 endpoint unusable after retries.
"""

from __future__ import annotations

import argparse
import json
import sys

from .analysis import length_stats, spearman, style_similarity_report
from .corpus import read_chunks
from .errors import (
    ConfigurationError,
    EndpointError,
    ProtocolError,
    TransportError,
    ValidationError,
)
from .genclient import read_shard
from .pipeline import (
    PipelineConfig,
    blend_stage,
    chunk_stage,
    compose_stage,
    filter_stage,
    generate_stage,
    load_config_file,
    run_pipeline,
    score_stage,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file mirroring PipelineConfig fields")
    p.add_argument("--corpus", action="append", help="corpus JSONL path (repeatable)")
    p.add_argument("--job-dir", dest="job_dir", help="job output directory")
    p.add_argument("--tokenizer", help="registered tokenizer name")
    p.add_argument("--window", type=int, help="chunk window in tokens")
    p.add_argument("--min-trailing", dest="min_trailing", type=int,
                   help="smallest trailing chunk kept separate")
    p.add_argument("--styles", help="comma-separated style keys")
    p.add_argument("--model", help="model name sent in requests")
    p.add_argument("--endpoint", help="chat-completion URL; omit or 'mock' for the offline mock")
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", dest="top_p", type=float)
    p.add_argument("--total-token-limit", dest="total_token_limit", type=int)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.add_argument("--retry-base-delay", dest="retry_base_delay", type=float)
    p.add_argument("--retry-failed", dest="retry_failed", action="store_const", const=True,
                   help="re-attempt previously failed generation keys")
    p.add_argument("--min-tokens", dest="min_tokens", type=int,
                   help="reject conversations shorter than this")
    p.add_argument("--strict", action="store_const", const=True,
                   help="reject flagged (zero-turn or truncated) conversations")
    p.add_argument("--with-judge", dest="with_judge", action="store_const", const=True,
                   help="run judge scoring between filter and compose")
    p.add_argument("--quality-threshold", dest="quality_threshold", type=float)
    p.add_argument("--rescore", action="store_const", const=True,
                   help="re-ask the judge once on unparseable replies")
    p.add_argument("--mode", choices=["longest", "all", "concat", "mix1to1"])
    p.add_argument("--select", choices=["none", "longest"],
                   help="pre-select the longest conversation per chunk before composing")
    p.add_argument("--budget", type=int, help="blend token budget")
    p.add_argument("--seed", type=int, help="blend sampling seed")
    p.add_argument("--blend-source", dest="blend_source", action="append",
                   help="name=path[:weight=W][:tokens=N] (repeatable)")
    p.add_argument("--manifest-only", dest="manifest_only", action="store_const", const=True,
                   help="write the blend manifest without sampling documents")
    p.add_argument("--templates-dir", dest="templates_dir",
                   help="directory of style instruction templates")


def _parse_blend_source(text: str) -> dict:
    name, sep, rest = text.partition("=")
    if not sep or not name or not rest:
        raise ConfigurationError(
            f"bad --blend-source {text!r}; expected name=path[:weight=W][:tokens=N]"
        )
    entry: dict = {"name": name, "weight": 1.0}
    parts = rest.split(":")
    path_parts = []
    for part in parts:
        if part.startswith("weight="):
            entry["weight"] = float(part[len("weight="):])
        elif part.startswith("tokens="):
            entry["total_tokens"] = int(part[len("tokens="):])
        else:
            path_parts.append(part)
    entry["path"] = ":".join(path_parts)
    if not entry["path"]:
        raise ConfigurationError(f"bad --blend-source {text!r}: empty path")
    return entry


def build_config(args: argparse.Namespace) -> PipelineConfig:
    base = load_config_file(args.config) if getattr(args, "config", None) else {}
    cfg = PipelineConfig.from_dict(base)
    overrides = {}
    for name in PipelineConfig.field_names():
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if getattr(args, "styles", None) is not None:
        overrides["styles"] = [s for s in args.styles.split(",") if s]
    if getattr(args, "blend_source", None):
        overrides["blend_sources"] = [_parse_blend_source(s) for s in args.blend_source]
    return cfg.merged(overrides)


def _emit(payload, args) -> None:
    fmt = getattr(args, "format", "json")
    out_path = getattr(args, "out", None)
    if fmt == "tsv":
        rows = payload if isinstance(payload, list) else [payload]
        if rows:
            header = list(rows[0].keys())
            lines = ["\t".join(header)]
            lines += ["\t".join(str(r[k]) for k in header) for r in rows]
            text = "\n".join(lines) + "\n"
        else:
            text = ""
    else:
        text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_analyze(args) -> int:
    cfg = build_config(args)
    spec = cfg.tokenizer_spec()
    if args.what == "similarity":
        chunks = {(c.doc_id, c.index): c for c in read_chunks(args.chunks)}
        def pairs():
            for conv in read_shard(args.conversations):
                key = (conv.doc_id, conv.chunk_index)
                if key not in chunks:
                    raise ValidationError(f"no chunk for conversation key {key}")
                yield chunks[key], conv
        report = [row.to_record() for row in style_similarity_report(pairs())]
        _emit(report, args)
    elif args.what == "lengths":
        rows = length_stats(read_shard(args.conversations), spec, bucket_by="style")
        _emit([r.to_record() for r in rows], args)
    elif args.what == "curve":
        edges = [int(x) for x in args.buckets.split(",")] if args.buckets else [0, 100, 200, 300, 400, 500]
        chunk_tokens = {
            (c.doc_id, c.index): c.token_count for c in read_chunks(args.chunks)
        }
        rows = length_stats(
            read_shard(args.conversations),
            spec,
            bucket_by="input_length",
            chunk_tokens=chunk_tokens,
            bucket_edges=edges,
        )
        _emit([r.to_record() for r in rows], args)
    else:
        xs = [float(line) for line in open(args.xs, encoding="utf-8") if line.strip()]
        ys = [float(line) for line in open(args.ys, encoding="utf-8") if line.strip()]
        _emit({"n": len(xs), "spearman": spearman(xs, ys)}, args)
    return 0


def _cmd_stats(args) -> int:
    cfg = build_config(args)
    spec = cfg.tokenizer_spec()
    from .tokenizers import count_tokens

    counts: dict = {"records": 0, "total_tokens": 0}
    by_style: dict[str, int] = {}
    statuses: dict[str, int] = {}
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            counts["records"] += 1
            text = obj.get("text", "")
            counts["total_tokens"] += count_tokens(text, spec)
            if "style" in obj:
                by_style[obj["style"]] = by_style.get(obj["style"], 0) + 1
            if "status" in obj:
                statuses[obj["status"]] = statuses.get(obj["status"], 0) + 1
    if by_style:
        counts["by_style"] = by_style
    if statuses:
        counts["by_status"] = statuses
    _emit(counts, args)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="mindpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in [
        ("chunk", "split corpus documents into token windows"),
        ("generate", "generate conversations for every chunk and style"),
        ("filter", "apply the length filter to generated conversations"),
        ("score", "judge-score filtered conversations and gate on the mean"),
        ("compose", "assemble kept conversations into a dataset"),
        ("blend", "allocate a token budget across datasets and sample it"),
        ("run", "run all configured stages in order"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)

    p = sub.add_parser("analyze", help="similarity, length, and correlation reports")
    p.add_argument("what", choices=["similarity", "lengths", "curve", "spearman"])
    p.add_argument("--chunks", help="chunks.jsonl for pairing")
    p.add_argument("--conversations", help="conversation shard or kept.jsonl")
    p.add_argument("--xs", help="file of numbers, one per line")
    p.add_argument("--ys", help="file of numbers, one per line")
    p.add_argument("--buckets", help="comma-separated bucket edges for curve")
    p.add_argument("--format", choices=["json", "tsv"], default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    _add_config_flags(p)

    p = sub.add_parser("stats", help="record and token counts for a JSONL artifact")
    p.add_argument("--input", required=True, help="any pipeline JSONL file")
    p.add_argument("--format", choices=["json", "tsv"], default="json")
    p.add_argument("--out", help="write the summary here instead of stdout")
    _add_config_flags(p)

    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "analyze":
        needed = {
            "similarity": ("chunks", "conversations"),
            "lengths": ("conversations",),
            "curve": ("chunks", "conversations"),
            "spearman": ("xs", "ys"),
        }[args.what]
        missing = [f"--{n}" for n in needed if getattr(args, n) is None]
        if missing:
            raise ConfigurationError(
                f"analyze {args.what} requires {' and '.join(missing)}"
            )
        return _cmd_analyze(args)
    if args.command == "stats":
        return _cmd_stats(args)

    cfg = build_config(args)
    stage = {
        "chunk": chunk_stage,
        "generate": generate_stage,
        "filter": filter_stage,
        "score": score_stage,
        "compose": compose_stage,
        "blend": blend_stage,
        "run": run_pipeline,
    }[args.command]
    summary = stage(cfg)
    sys.stdout.write(json.dumps(summary, ensure_ascii=False, indent=2) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EndpointError, TransportError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
