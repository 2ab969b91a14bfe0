"""Command-line surface: one subcommand per stage plus the chained pipeline.

Exit codes: 0 success, 1 record-level failures under --strict, 2 for
configuration, input, or transport problems. Every provider-using command
writes a run.log beside its output with the fully resolved configuration
and the provider call counters, so runs are reconstructible from the log.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .core import (
    EvalRecord,
    IdiomForgeError,
    PromptMode,
    TranslationRecord,
    format_utc,
    language_pair,
    parse_language,
    parse_utc,
)
from .distill import DistillConfig, default_exemplars, distill_batch, load_exemplars
from .figures import render_correlation_figure, render_score_histogram
from .ingest import load_idiom_list, load_idiom_rows, normalize_idiom, parse_format
from .jsonl import dumps, read_jsonl, write_jsonl
from .judge import JudgeConfig, bleu_for_records, judge_batch, merge_eval_records
from .kbstore import KnowledgeBase, load_kb, merge_kbs, save_kb
from .match import MatchError, build_lexicon, find_idioms, select_primary
from .provider import (
    CompletionProvider,
    ConfigError,
    ProviderStats,
    RecordingProvider,
    build_provider_stack,
    http_provider_from_env,
    mock_from_fixtures,
)
from .stats import aggregate, correlate, load_annotations, render_report, reports_from_json
from .translate import SourceItem, TranslateConfig, TranslateError, run_translation

log = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = ".idiomforge-cache"
DEFAULT_PARALLELISM = 4
DEFAULT_SEED = 42
# Mock runs pin entry timestamps so replayed runs stay byte-identical.
MOCK_TIMESTAMP = datetime(2000, 1, 1, tzinfo=timezone.utc)


def _pick(*values: Any, default: Any = None) -> Any:
    """First non-None value wins: flags, then config file, then default."""
    for value in values:
        if value is not None:
            return value
    return default


def _fmt_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# Provider plumbing
# ---------------------------------------------------------------------------

class ProviderOptions:
    def __init__(
        self,
        provider: str,
        fixtures: Path | None,
        parallelism: int,
        rps: float | None,
        cache_dir: Path | None,
        record_fixtures: Path | None,
    ) -> None:
        if provider not in ("mock", "http"):
            raise ConfigError(f"unknown provider {provider!r}; expected mock or http")
        if parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {parallelism}")
        self.provider = provider
        self.fixtures = fixtures
        self.parallelism = parallelism
        self.rps = rps
        self.cache_dir = cache_dir
        self.record_fixtures = record_fixtures

    def resolved(self) -> dict[str, Any]:
        return {
            "provider.kind": self.provider,
            "provider.fixtures": self.fixtures,
            "provider.parallelism": self.parallelism,
            "provider.rps": self.rps,
            "provider.cache": self.cache_dir is not None,
            "provider.cache_dir": self.cache_dir,
            "provider.record_fixtures": self.record_fixtures,
        }


def provider_options(args: argparse.Namespace, file_cfg: dict | None = None) -> ProviderOptions:
    cfg = file_cfg or {}
    no_cache = _pick(args.no_cache, cfg.get("no_cache"), default=False)
    cache_dir = None
    if not no_cache:
        cache_dir = Path(_pick(args.cache_dir, cfg.get("cache_dir"), default=DEFAULT_CACHE_DIR))
    fixtures = _pick(args.fixtures, cfg.get("fixtures"))
    return ProviderOptions(
        provider=_pick(args.provider, cfg.get("provider"), default="mock"),
        fixtures=None if fixtures is None else Path(fixtures),
        parallelism=_pick(args.parallelism, cfg.get("parallelism"), default=DEFAULT_PARALLELISM),
        rps=_pick(args.rps, cfg.get("rps")),
        cache_dir=cache_dir,
        record_fixtures=args.record_fixtures,
    )


def build_cli_provider(
    options: ProviderOptions, stats: ProviderStats
) -> tuple[CompletionProvider, RecordingProvider | None]:
    transport: CompletionProvider
    if options.provider == "mock":
        if options.fixtures is None:
            raise ConfigError("mock provider needs --fixtures (or [run] fixtures)")
        transport = mock_from_fixtures(options.fixtures)
    else:
        transport = http_provider_from_env()
    recorder = None
    if options.record_fixtures is not None:
        transport = recorder = RecordingProvider(transport)
    stack = build_provider_stack(
        transport, stats, cache_dir=options.cache_dir, rps=options.rps
    )
    return stack, recorder


def _finish_provider(
    options: ProviderOptions, recorder: RecordingProvider | None
) -> None:
    if recorder is not None and options.record_fixtures is not None:
        count = recorder.dump(options.record_fixtures)
        log.info("recorded %d fixtures to %s", count, options.record_fixtures)


# ---------------------------------------------------------------------------
# Run log
# ---------------------------------------------------------------------------

def write_run_log(
    directory: Path, subcommand: str, resolved: dict[str, Any], stats: ProviderStats
) -> Path:
    path = Path(directory) / "run.log"
    lines = [f"subcommand = {subcommand}"]
    for key in sorted(resolved):
        lines.append(f"{key} = {_fmt_value(resolved[key])}")
    for counter, value in sorted(stats.snapshot().items()):
        lines.append(f"provider.{counter} = {value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_run_log(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        key, sep, value = line.partition(" = ")
        if sep:
            entries[key] = value
    return entries


# ---------------------------------------------------------------------------
# Record loading helpers
# ---------------------------------------------------------------------------

def _load_source_items(path: str | Path) -> list[SourceItem]:
    items = []
    for lineno, row in read_jsonl(path):
        try:
            items.append(SourceItem.from_dict(row))
        except (KeyError, IdiomForgeError) as exc:
            raise TranslateError(f"{path}:{lineno}: bad source row: {exc}") from exc
    return items


def _load_translation_records(path: str | Path) -> list[TranslationRecord]:
    records = []
    for lineno, row in read_jsonl(path):
        try:
            records.append(TranslationRecord.from_dict(row))
        except (KeyError, IdiomForgeError) as exc:
            raise IdiomForgeError(f"{path}:{lineno}: bad translation record: {exc}") from exc
    return records


def _load_eval_records(path: str | Path) -> list[EvalRecord]:
    records = []
    for lineno, row in read_jsonl(path):
        try:
            records.append(EvalRecord.from_dict(row))
        except (KeyError, IdiomForgeError) as exc:
            raise IdiomForgeError(f"{path}:{lineno}: bad eval record: {exc}") from exc
    return records


def _load_references(path: str | Path) -> dict[str, str]:
    references: dict[str, str] = {}
    for lineno, row in read_jsonl(path):
        rid = row.get("id")
        text = row.get("reference")
        if not isinstance(rid, str) or not rid or not isinstance(text, str) or not text:
            raise IdiomForgeError(f"{path}:{lineno}: reference rows need id and reference")
        if rid in references:
            raise IdiomForgeError(f"{path}:{lineno}: duplicate reference for {rid!r}")
        references[rid] = text
    return references


def _parse_pair(text: str) -> str:
    parts = text.split("-")
    if len(parts) != 2:
        raise ConfigError(f"bad language pair {text!r}; expected a form like zh-en")
    return language_pair(parse_language(parts[0]), parse_language(parts[1]))


def _sample_items(items: list[SourceItem], size: int | None, seed: int) -> list[SourceItem]:
    if size is None:
        return items
    if size > len(items):
        raise ConfigError(f"sample size {size} exceeds dataset size {len(items)}")
    return random.Random(seed).sample(items, size)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    lang = parse_language(args.lang)
    idioms = load_idiom_list(args.input_path, parse_format(args.format), lang, args.dataset)
    count = write_jsonl(args.out, idioms.to_rows())
    print(f"ingested {count} {lang.code} idioms into {args.out}")
    return 0


def cmd_distill(args: argparse.Namespace) -> int:
    idioms = load_idiom_rows(args.idioms)
    meaning_lang = parse_language(args.meaning_lang)
    kb_path = Path(args.kb)
    kb = load_kb(kb_path) if kb_path.exists() else KnowledgeBase()

    if args.zero_shot:
        exemplars: tuple = ()
    elif args.exemplars:
        exemplars = load_exemplars(args.exemplars)
    else:
        exemplars = default_exemplars(idioms.lang, meaning_lang)
    config = DistillConfig(
        meaning_lang=meaning_lang,
        model=args.model,
        exemplars=exemplars,
        temperature=args.temperature,
        zero_shot=bool(args.zero_shot),
        refresh=bool(args.refresh),
        template_dir=args.template_dir,
    )

    options = provider_options(args)
    stats = ProviderStats()
    provider, recorder = build_cli_provider(options, stats)
    if args.created_at:
        created_at = parse_utc(args.created_at)
    else:
        created_at = MOCK_TIMESTAMP if options.provider == "mock" else None
    report = distill_batch(
        idioms, config, provider, kb, parallelism=options.parallelism, created_at=created_at
    )
    save_kb(kb, kb_path)
    _finish_provider(options, recorder)

    resolved = {
        **options.resolved(),
        "distill.idioms": args.idioms,
        "distill.kb": kb_path,
        "distill.meaning_lang": meaning_lang.code,
        "distill.model": args.model,
        "distill.temperature": args.temperature,
        "distill.zero_shot": bool(args.zero_shot),
        "distill.refresh": bool(args.refresh),
        "distill.exemplars": args.exemplars or "builtin",
        "distill.template_dir": args.template_dir,
        "distill.created_at": "" if created_at is None else format_utc(created_at),
    }
    write_run_log(kb_path.parent, "distill", resolved, stats)

    for idiom, reason in report.failures:
        log.warning("distill failed for %s: %s", idiom, reason)
    print(
        f"distilled {report.generated} meanings into {kb_path} "
        f"({report.skipped_existing} already present, {report.failed} failed)"
    )
    return 1 if args.strict and report.failed else 0


def cmd_kb_stats(args: argparse.Namespace) -> int:
    kb = load_kb(args.kb)
    per_lang = kb.stats()
    if args.json:
        payload = {
            lang: {"entries": s.entries, "idioms": s.idioms}
            for lang, s in per_lang.items()
        }
        print(json.dumps(payload, ensure_ascii=False, sort_keys=True))
        return 0
    if not per_lang:
        print("knowledge base is empty")
        return 0
    for lang in sorted(per_lang):
        s = per_lang[lang]
        print(f"{lang}: {s.entries} entries, {s.idioms} idioms")
    return 0


def cmd_kb_merge(args: argparse.Namespace) -> int:
    bases = [load_kb(path) for path in args.inputs]
    merged, replaced = merge_kbs(bases[0], *bases[1:])
    count = save_kb(merged, args.out)
    print(f"merged {len(args.inputs)} files into {args.out}: {count} entries, {replaced} replaced")
    return 0


def cmd_kb_lookup(args: argparse.Namespace) -> int:
    kb = load_kb(args.kb)
    idiom_lang = parse_language(args.idiom_lang)
    idiom = normalize_idiom(args.idiom, idiom_lang)
    entry = kb.lookup(
        idiom, idiom_lang, parse_language(args.meaning_lang), source_model=args.model
    )
    if entry is None:
        log.error("no meaning for %s (%s) in %s", idiom, idiom_lang.code, args.kb)
        return 1
    if args.json:
        print(dumps(entry.to_dict()))
    else:
        print(entry.meaning)
    return 0


def cmd_match(args: argparse.Namespace) -> int:
    idioms = load_idiom_rows(args.idioms)
    lexicon = build_lexicon(idioms)
    rows_out = []
    hit = 0
    for lineno, row in read_jsonl(args.sentences):
        sid = row.get("id")
        text = row.get("source_text")
        if not isinstance(sid, str) or not sid or not isinstance(text, str):
            raise MatchError(f"{args.sentences}:{lineno}: rows need id and source_text")
        matches = find_idioms(text, lexicon)
        if not args.all_idioms:
            primary = select_primary(matches)
            matches = [primary] if primary is not None else []
        if matches:
            hit += 1
        rows_out.append({"id": sid, "matches": [m.to_dict() for m in matches]})
    write_jsonl(args.out, rows_out)
    print(f"matched idioms in {hit} of {len(rows_out)} sentences -> {args.out}")
    return 0


def cmd_translate(args: argparse.Namespace) -> int:
    items = _sample_items(_load_source_items(args.sentences), args.sample, args.seed)
    config = TranslateConfig(
        source_lang=parse_language(args.source_lang),
        target_lang=parse_language(args.target_lang),
        mode=PromptMode.parse(args.mode),
        translator_model=args.model,
        prompt_lang=parse_language(args.prompt_lang),
        meaning_lang=parse_language(args.meaning_lang) if args.meaning_lang else None,
        meaning_source_model=args.kb_model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        template_dir=args.template_dir,
    )
    kb = load_kb(args.kb) if args.kb else None

    options = provider_options(args)
    stats = ProviderStats()
    provider, recorder = build_cli_provider(options, stats)
    run = run_translation(items, config, provider, kb=kb, parallelism=options.parallelism)
    out = Path(args.out)
    write_jsonl(out, (record.to_dict() for record in run.records))
    if args.failures:
        write_jsonl(args.failures, (f.to_dict() for f in run.failures))
    _finish_provider(options, recorder)

    resolved = {
        **options.resolved(),
        "translate.sentences": args.sentences,
        "translate.mode": config.mode.value,
        "translate.source_lang": config.source_lang.code,
        "translate.target_lang": config.target_lang.code,
        "translate.model": config.translator_model,
        "translate.prompt_lang": config.prompt_lang.code,
        "translate.meaning_lang": config.effective_meaning_lang.code,
        "translate.kb": args.kb,
        "translate.kb_model": args.kb_model,
        "translate.temperature": config.temperature,
        "translate.max_tokens": config.max_tokens,
        "translate.sample": args.sample,
        "translate.seed": args.seed,
        "translate.template_dir": args.template_dir,
    }
    write_run_log(out.parent, "translate", resolved, stats)

    for failure in run.failures:
        log.warning("record %s failed: %s", failure.id, failure.reason)
    print(
        f"translated {len(run.records)} of {len(items)} records "
        f"({config.mode.value}) -> {out}"
    )
    return 1 if args.strict and run.failures else 0


def cmd_judge(args: argparse.Namespace) -> int:
    records = _load_translation_records(args.records)
    config = JudgeConfig(
        judge_model=args.model, temperature=args.temperature, template_dir=args.template_dir
    )
    options = provider_options(args)
    stats = ProviderStats()
    provider, recorder = build_cli_provider(options, stats)
    evals = judge_batch(records, config, provider, parallelism=options.parallelism)
    out = Path(args.out)
    write_jsonl(out, (e.to_dict() for e in evals))
    _finish_provider(options, recorder)

    resolved = {
        **options.resolved(),
        "judge.records": args.records,
        "judge.model": args.model,
        "judge.temperature": args.temperature,
        "judge.template_dir": args.template_dir,
    }
    write_run_log(out.parent, "judge", resolved, stats)

    errors = [e for e in evals if e.judge_error is not None]
    scored = [e.judge_score for e in evals if e.judge_score is not None]
    for e in errors:
        log.warning("judge failed for %s: %s", e.record_id, e.judge_error)
    if scored:
        summary = aggregate(scored)
        print(
            f"judged {len(scored)} of {len(evals)} records: "
            f"mean {summary.mean:.2f}, histogram {summary.histogram} -> {out}"
        )
    else:
        print(f"judged 0 of {len(evals)} records -> {out}")
    return 1 if args.strict and errors else 0


def cmd_bleu(args: argparse.Namespace) -> int:
    records = _load_translation_records(args.records)
    if not records:
        raise IdiomForgeError(f"no translation records in {args.records}")
    target_codes = {record.target_lang.code for record in records}
    if len(target_codes) > 1:
        raise ConfigError("bleu needs a single target language across records")
    references = _load_references(args.references)
    corpus, per_record = bleu_for_records(records, references, records[0].target_lang)
    write_jsonl(args.out, (e.to_dict() for e in per_record))
    if args.corpus_out:
        Path(args.corpus_out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.corpus_out).write_text(dumps(corpus.to_dict()) + "\n", encoding="utf-8")
    print(
        f"corpus bleu4-internal {corpus.score:.4f} over {len(per_record)} records -> {args.out}"
    )
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    evals = _load_eval_records(args.evals)
    annotations = load_annotations(args.annotations)
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    report = correlate(evals, annotations, _parse_pair(args.pair), metrics=metrics)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_report([report], "json"), encoding="utf-8")
    print(f"correlated {', '.join(metrics)} against human scores -> {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = reports_from_json(Path(args.input_path).read_text(encoding="utf-8"))
    text = render_report(reports, args.format)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        print(f"wrote {args.format} report to {out}")
        if not args.no_figures and reports:
            figure = render_correlation_figure(reports, out.with_suffix(".png"))
            print(f"wrote figure to {figure}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def _require(cfg: dict, section: str, key: str) -> Any:
    try:
        value = cfg[section][key]
    except KeyError:
        raise ConfigError(f"pipeline config missing [{section}] {key}") from None
    return value


def _cfg_path(base: Path, value: Any) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def cmd_pipeline(args: argparse.Namespace) -> int:
    config_path = Path(args.config)
    try:
        with open(config_path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {config_path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{config_path}: bad TOML: {exc}") from None
    base = config_path.resolve().parent
    run_cfg = dict(cfg.get("run", {}))
    for key in ("fixtures", "cache_dir"):
        if key in run_cfg:
            run_cfg[key] = _cfg_path(base, run_cfg[key])

    options = provider_options(args, run_cfg)
    strict = _pick(args.strict, run_cfg.get("strict"), default=False)
    seed = _pick(args.seed, run_cfg.get("seed"), default=DEFAULT_SEED)
    if args.out_dir is not None:
        out_dir = Path(args.out_dir)
    else:
        out_dir = _cfg_path(base, run_cfg.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = ProviderStats()
    provider, recorder = build_cli_provider(options, stats)
    failures = 0

    # ingest
    ingest_cfg = cfg.get("ingest", {})
    input_path = _cfg_path(base, _require(cfg, "ingest", "input"))
    ingest_lang = parse_language(_require(cfg, "ingest", "lang"))
    ingest_format = parse_format(ingest_cfg.get("format", "plain"))
    dataset = ingest_cfg.get("dataset", input_path.stem)
    idioms = load_idiom_list(input_path, ingest_format, ingest_lang, dataset)
    write_jsonl(out_dir / "idioms.jsonl", idioms.to_rows())

    # distill
    distill_cfg = cfg.get("distill", {})
    meaning_lang = parse_language(_require(cfg, "distill", "meaning_lang"))
    distill_model = _require(cfg, "distill", "model")
    zero_shot = bool(distill_cfg.get("zero_shot", False))
    if zero_shot:
        exemplars: tuple = ()
    elif "exemplars" in distill_cfg:
        exemplars = load_exemplars(_cfg_path(base, distill_cfg["exemplars"]))
    else:
        exemplars = default_exemplars(ingest_lang, meaning_lang)
    template_dir = distill_cfg.get("template_dir")
    if template_dir is not None:
        template_dir = _cfg_path(base, template_dir)
    if "created_at" in distill_cfg:
        created_at = parse_utc(distill_cfg["created_at"])
    else:
        created_at = MOCK_TIMESTAMP if options.provider == "mock" else None
    kb_path = out_dir / "kb.jsonl"
    kb = load_kb(kb_path) if kb_path.exists() else KnowledgeBase()
    distill_config = DistillConfig(
        meaning_lang=meaning_lang,
        model=distill_model,
        exemplars=exemplars,
        temperature=distill_cfg.get("temperature", 0.7),
        zero_shot=zero_shot,
        refresh=bool(distill_cfg.get("refresh", False)),
        template_dir=template_dir,
    )
    distill_report = distill_batch(
        idioms, distill_config, provider, kb,
        parallelism=options.parallelism, created_at=created_at,
    )
    save_kb(kb, kb_path)
    (out_dir / "distill_report.json").write_text(
        dumps(distill_report.to_dict()) + "\n", encoding="utf-8"
    )
    failures += distill_report.failed

    # translate
    translate_cfg = cfg.get("translate", {})
    source_lang = parse_language(_require(cfg, "translate", "source_lang"))
    target_lang = parse_language(_require(cfg, "translate", "target_lang"))
    translate_template_dir = translate_cfg.get("template_dir")
    if translate_template_dir is not None:
        translate_template_dir = _cfg_path(base, translate_template_dir)
    translate_config = TranslateConfig(
        source_lang=source_lang,
        target_lang=target_lang,
        mode=PromptMode.parse(translate_cfg.get("mode", "kb-cot")),
        translator_model=_require(cfg, "translate", "model"),
        prompt_lang=parse_language(translate_cfg.get("prompt_lang", "en")),
        meaning_lang=(
            parse_language(translate_cfg["meaning_lang"])
            if "meaning_lang" in translate_cfg
            else None
        ),
        meaning_source_model=translate_cfg.get("kb_model"),
        temperature=translate_cfg.get("temperature", 0.7),
        max_tokens=translate_cfg.get("max_tokens", 256),
        template_dir=translate_template_dir,
    )
    items = _load_source_items(_cfg_path(base, _require(cfg, "translate", "sentences")))
    items = _sample_items(items, translate_cfg.get("sample"), seed)
    translation_run = run_translation(
        items, translate_config, provider, kb=kb, parallelism=options.parallelism
    )
    write_jsonl(out_dir / "translations.jsonl", (r.to_dict() for r in translation_run.records))
    write_jsonl(
        out_dir / "translate_failures.jsonl", (f.to_dict() for f in translation_run.failures)
    )
    failures += len(translation_run.failures)

    # judge
    judge_cfg = cfg.get("judge", {})
    judge_config = JudgeConfig(
        judge_model=_require(cfg, "judge", "model"),
        temperature=judge_cfg.get("temperature", 0.1),
    )
    judged = judge_batch(
        list(translation_run.records), judge_config, provider,
        parallelism=options.parallelism,
    )
    failures += sum(1 for e in judged if e.judge_error is not None)

    # bleu (optional)
    bleu_cfg = cfg.get("bleu", {})
    evals = judged
    if "references" in bleu_cfg:
        references = _load_references(_cfg_path(base, bleu_cfg["references"]))
        corpus, per_record = bleu_for_records(
            list(translation_run.records), references, target_lang
        )
        (out_dir / "bleu_corpus.json").write_text(
            dumps(corpus.to_dict()) + "\n", encoding="utf-8"
        )
        evals = merge_eval_records(judged, per_record)
    write_jsonl(out_dir / "evals.jsonl", (e.to_dict() for e in evals))

    # correlate
    correlate_cfg = cfg.get("correlate", {})
    annotations = load_annotations(_cfg_path(base, _require(cfg, "correlate", "annotations")))
    metrics = tuple(correlate_cfg.get("metrics", ["judge"]))
    pair = language_pair(source_lang, target_lang)
    correlation = correlate(evals, annotations, pair, metrics=metrics)
    report_json = render_report([correlation], "json")
    (out_dir / "report.json").write_text(report_json, encoding="utf-8")

    # report
    report_cfg = cfg.get("report", {})
    formats = list(report_cfg.get("formats", ["text-table"]))
    suffixes = {"text-table": "report.txt", "csv": "report.csv"}
    for fmt in formats:
        if fmt == "json":
            continue  # report.json is already the correlate artifact
        rendered = render_report([correlation], fmt)
        (out_dir / suffixes.get(fmt, f"report.{fmt}")).write_text(rendered, encoding="utf-8")
    if report_cfg.get("figures", True):
        render_correlation_figure([correlation], out_dir / "report.png")
        scored = [e.judge_score for e in evals if e.judge_score is not None]
        if scored:
            render_score_histogram(
                aggregate(scored), out_dir / "scores.png", title="judge scores"
            )

    _finish_provider(options, recorder)
    resolved = {
        **options.resolved(),
        "run.config": config_path,
        "run.out_dir": out_dir,
        "run.seed": seed,
        "run.strict": strict,
        "ingest.input": input_path,
        "ingest.format": ingest_cfg.get("format", "plain"),
        "ingest.lang": ingest_lang.code,
        "ingest.dataset": dataset,
        "distill.model": distill_model,
        "distill.meaning_lang": meaning_lang.code,
        "distill.temperature": distill_config.temperature,
        "distill.zero_shot": zero_shot,
        "distill.refresh": distill_config.refresh,
        "distill.exemplars": distill_cfg.get("exemplars", "builtin"),
        "distill.created_at": "" if created_at is None else format_utc(created_at),
        "translate.sentences": translate_cfg.get("sentences"),
        "translate.mode": translate_config.mode.value,
        "translate.source_lang": source_lang.code,
        "translate.target_lang": target_lang.code,
        "translate.model": translate_config.translator_model,
        "translate.prompt_lang": translate_config.prompt_lang.code,
        "translate.meaning_lang": translate_config.effective_meaning_lang.code,
        "translate.kb_model": translate_config.meaning_source_model,
        "translate.temperature": translate_config.temperature,
        "translate.max_tokens": translate_config.max_tokens,
        "translate.sample": translate_cfg.get("sample"),
        "judge.model": judge_config.judge_model,
        "judge.temperature": judge_config.temperature,
        "bleu.references": bleu_cfg.get("references"),
        "correlate.annotations": correlate_cfg.get("annotations"),
        "correlate.metrics": metrics,
        "correlate.pair": pair,
        "report.formats": formats,
        "report.figures": report_cfg.get("figures", True),
    }
    write_run_log(out_dir, "pipeline", resolved, stats)

    print(
        f"pipeline finished: {len(translation_run.records)} records, "
        f"{failures} record-level failures, artifacts in {out_dir}"
    )
    return 1 if strict and failures else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _provider_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("provider")
    group.add_argument("--provider", choices=("mock", "http"), default=None,
                       help="completion backend (default mock)")
    group.add_argument("--fixtures", type=Path, default=None,
                       help="fixture JSONL for the mock provider")
    group.add_argument("--parallelism", type=int, default=None,
                       help=f"concurrent requests (default {DEFAULT_PARALLELISM})")
    group.add_argument("--rps", type=float, default=None,
                       help="request rate cap per second (default unthrottled)")
    group.add_argument("--no-cache", action="store_const", const=True, default=None,
                       help="disable the response cache")
    group.add_argument("--cache-dir", type=Path, default=None,
                       help=f"response cache directory (default {DEFAULT_CACHE_DIR})")
    group.add_argument("--record-fixtures", type=Path, default=None,
                       help="capture live responses as replayable fixtures")
    group.add_argument("--strict", action="store_const", const=True, default=None,
                       help="exit 1 if any record-level failure occurs")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idiomforge",
        description="Distill idiom meanings into a knowledge base and use it "
        "for knowledge-prompted translation and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level", default="info", choices=("debug", "info", "warning", "error")
    )
    provider_parent = _provider_parent()
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("ingest", help="normalize an idiom list into JSONL")
    p.add_argument("--in", dest="input_path", type=Path, required=True)
    p.add_argument("--format", default="plain",
                   help="plain, csv[:column], tsv[:column], or jsonl[:field]")
    p.add_argument("--lang", required=True)
    p.add_argument("--dataset", required=True, help="provenance label for these idioms")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("distill", parents=[provider_parent],
                       help="generate figurative meanings into the KB")
    p.add_argument("--idioms", type=Path, required=True, help="ingested idiom JSONL")
    p.add_argument("--kb", type=Path, required=True, help="KB file to update in place")
    p.add_argument("--meaning-lang", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--refresh", action="store_true",
                   help="regenerate entries that already exist")
    p.add_argument("--exemplars", type=Path, default=None,
                   help="exemplar JSONL overriding the built-in few-shot cases")
    p.add_argument("--template-dir", type=Path, default=None)
    p.add_argument("--created-at", default=None,
                   help="pin entry timestamps (ISO-8601, e.g. 2026-01-02T00:00:00Z)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("kb", help="inspect and combine knowledge bases")
    kb_sub = p.add_subparsers(dest="kb_command", required=True, metavar="action")
    q = kb_sub.add_parser("stats", help="entry and idiom counts per meaning language")
    q.add_argument("--kb", type=Path, required=True)
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_kb_stats)
    q = kb_sub.add_parser("merge", help="merge KB files, later files win")
    q.add_argument("--out", type=Path, required=True)
    q.add_argument("inputs", nargs="+", type=Path)
    q.set_defaults(func=cmd_kb_merge)
    q = kb_sub.add_parser("lookup", help="resolve one idiom meaning")
    q.add_argument("--kb", type=Path, required=True)
    q.add_argument("--idiom", required=True)
    q.add_argument("--idiom-lang", required=True)
    q.add_argument("--meaning-lang", required=True)
    q.add_argument("--model", default=None, help="require this source model exactly")
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_kb_lookup)

    p = sub.add_parser("match", help="find idiom occurrences in sentences")
    p.add_argument("--sentences", type=Path, required=True,
                   help="JSONL rows with id and source_text")
    p.add_argument("--idioms", type=Path, required=True, help="ingested idiom JSONL")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--all-idioms", action="store_true",
                   help="emit every match, not just the leftmost-longest")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("translate", parents=[provider_parent],
                       help="translate sentences under one prompting mode")
    p.add_argument("--sentences", type=Path, required=True)
    p.add_argument("--mode", required=True, help="direct, kb-cot, or self-cot")
    p.add_argument("--source-lang", required=True)
    p.add_argument("--target-lang", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--kb", type=Path, default=None)
    p.add_argument("--prompt-lang", default="en")
    p.add_argument("--meaning-lang", default=None)
    p.add_argument("--kb-model", default=None,
                   help="require KB meanings from this source model")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--max-tokens", type=int, default=256)
    p.add_argument("--template-dir", type=Path, default=None)
    p.add_argument("--sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--failures", type=Path, default=None,
                   help="also write per-record failures to this JSONL")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("judge", parents=[provider_parent],
                       help="score translations against the 1-3 rubric")
    p.add_argument("--records", type=Path, required=True, help="translation JSONL")
    p.add_argument("--model", required=True)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--template-dir", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("bleu", help="score translations against references")
    p.add_argument("--records", type=Path, required=True, help="translation JSONL")
    p.add_argument("--references", type=Path, required=True,
                   help="JSONL rows with id and reference")
    p.add_argument("--out", type=Path, required=True, help="per-record eval JSONL")
    p.add_argument("--corpus-out", type=Path, default=None,
                   help="also write the corpus-level score as JSON")
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("correlate", help="correlate metric scores with human annotations")
    p.add_argument("--evals", type=Path, required=True)
    p.add_argument("--annotations", type=Path, required=True)
    p.add_argument("--pair", required=True, help="language pair, e.g. zh-en")
    p.add_argument("--metrics", default="judge",
                   help="comma-separated subset of judge,bleu_sentence")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("report", help="render a correlation report")
    p.add_argument("--in", dest="input_path", type=Path, required=True)
    p.add_argument("--format", default="text-table", choices=("text-table", "csv", "json"))
    p.add_argument("--out", type=Path, default=None,
                   help="write here instead of stdout; also renders figures")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", parents=[provider_parent],
                       help="run ingest through report from one config file")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except IdiomForgeError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
