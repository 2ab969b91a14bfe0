"""Meaning distillation: prompt a provider for figurative meanings, build KB entries.

The prompt is an instruction emphasizing non-compositionality, followed by
numbered exemplar cases and one open case for the target idiom. One sample
per idiom at the generation temperature; no best-of-n voting.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

from .core import (
    IdiomForgeError,
    KBEntry,
    Language,
    PromptMode,
    PromptSpec,
    parse_language,
    utc_now,
)
from .ingest import IdiomSet
from .jsonl import load_records
from .kbstore import KnowledgeBase
from .provider import CompletionProvider, CompletionRequest, ProviderError, parallel_map
from .templates import load_template

log = logging.getLogger(__name__)

DEFAULT_MAX_MEANING_CHARS = 200
_QUOTE_CHARS = "\"'“”‘’「」『』"
_BLANK_LINE = re.compile(r"\n[ \t]*\n")


class DistillError(IdiomForgeError):
    """Configuration problem or unusable provider response."""


@dataclass(frozen=True)
class Exemplar:
    """One in-context example: an idiom with a trusted dictionary meaning."""

    idiom: str
    meaning: str
    idiom_lang: Language
    meaning_lang: Language

    def __post_init__(self) -> None:
        if not self.idiom or not self.meaning:
            raise DistillError("exemplar idiom and meaning must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "idiom": self.idiom,
            "idiom_lang": self.idiom_lang.code,
            "meaning": self.meaning,
            "meaning_lang": self.meaning_lang.code,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Exemplar":
        return cls(
            idiom=data["idiom"],
            meaning=data["meaning"],
            idiom_lang=parse_language(data["idiom_lang"]),
            meaning_lang=parse_language(data["meaning_lang"]),
        )


def load_exemplars(path: str | Path) -> tuple[Exemplar, ...]:
    return tuple(load_records(path, Exemplar.from_dict))


def default_exemplars(idiom_lang: Language, meaning_lang: Language) -> tuple[Exemplar, ...]:
    """Packaged exemplars for a language pair; error names the missing pair."""
    from importlib import resources

    name = f"{idiom_lang.code}-{meaning_lang.code}.jsonl"
    resource = resources.files("idiomforge.exemplars").joinpath(name)
    if not resource.is_file():
        raise DistillError(
            f"no packaged exemplars for pair {idiom_lang.code}-{meaning_lang.code}; "
            "supply an exemplar file"
        )
    with resources.as_file(resource) as path:
        return load_exemplars(path)


@dataclass(frozen=True)
class DistillConfig:
    """Distillation settings; exemplars must match the target language pair."""

    meaning_lang: Language
    model: str
    exemplars: tuple[Exemplar, ...] = ()
    temperature: float = 0.7
    max_meaning_chars: int = DEFAULT_MAX_MEANING_CHARS
    zero_shot: bool = False
    refresh: bool = False
    template_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if not self.model:
            raise DistillError("model must be non-empty")
        if self.max_meaning_chars <= 0:
            raise DistillError("max_meaning_chars must be positive")

    def with_exemplars(self, exemplars: tuple[Exemplar, ...]) -> "DistillConfig":
        return replace(self, exemplars=exemplars)


def _meaning_label(config: DistillConfig) -> str:
    return f"{config.meaning_lang.name_in('en')} meaning:"


def build_meaning_prompt(
    idiom: str, idiom_lang: Language, config: DistillConfig
) -> PromptSpec:
    """Render the meaning-generation prompt for one idiom.

    Pure function of (idiom, idiom_lang, config): byte-identical output for
    identical inputs, keeping provider cache keys stable.
    """
    if not config.exemplars and not config.zero_shot:
        raise DistillError("zero exemplars; pass exemplars or enable zero-shot")
    for ex in config.exemplars:
        if ex.idiom_lang != idiom_lang or ex.meaning_lang != config.meaning_lang:
            raise DistillError(
                f"exemplar {ex.idiom!r} is {ex.idiom_lang}-{ex.meaning_lang}, "
                f"prompt needs {idiom_lang}-{config.meaning_lang}"
            )
    idiom_name = idiom_lang.name_in("en")
    meaning_name = config.meaning_lang.name_in("en")
    cases = "".join(
        f"Case {i}:\n{idiom_name} idiom: {ex.idiom}\n{meaning_name} meaning: {ex.meaning}\n"
        for i, ex in enumerate(config.exemplars, start=1)
    )
    template = load_template("meaning_distill", "en", config.template_dir)
    text = template.render(
        idiom_lang_name=idiom_name,
        meaning_lang_name=meaning_name,
        cases=cases,
        case_number=str(len(config.exemplars) + 1),
        idiom=idiom,
    )
    return PromptSpec(
        text=text,
        mode=PromptMode.MEANING_DISTILL,
        prompt_lang=parse_language("en"),
        meaning_lang=config.meaning_lang,
        temperature=config.temperature,
        max_tokens=128,
    )


def parse_meaning(response_text: str, config: DistillConfig) -> str:
    """Extract one meaning string from a provider response.

    Takes the text after the last meaning label if the model echoed the
    case layout, truncates at the first blank line to drop trailing chatter,
    then strips whitespace and surrounding ASCII/CJK quotes.
    """
    text = response_text
    label = _meaning_label(config)
    if label in text:
        text = text.rsplit(label, 1)[1]
    text = text.lstrip()
    cut = _BLANK_LINE.search(text)
    if cut is not None:
        text = text[: cut.start()]
    meaning = text.strip().strip(_QUOTE_CHARS).strip()
    if not meaning:
        raise DistillError("empty meaning")
    if len(meaning) > config.max_meaning_chars:
        raise DistillError(
            f"meaning too long ({len(meaning)} > {config.max_meaning_chars} chars)"
        )
    return " ".join(meaning.splitlines())


@dataclass(frozen=True)
class DistillReport:
    generated: int
    skipped_existing: int
    failed: int
    failures: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "generated": self.generated,
            "skipped_existing": self.skipped_existing,
            "failed": self.failed,
            "failures": [{"idiom": i, "reason": r} for i, r in self.failures],
        }


def distill_batch(
    idioms: IdiomSet,
    config: DistillConfig,
    provider: CompletionProvider,
    kb: KnowledgeBase,
    parallelism: int = 4,
    created_at: datetime | None = None,
) -> DistillReport:
    """Distill meanings for every idiom not yet in the KB.

    Existing (idiom, lang, meaning_lang, model) entries are skipped unless
    the config says refresh. Single-idiom failures are recorded, never
    batch-aborting. The report is sorted by idiom, independent of the
    concurrent completion order.
    """
    batch_time = created_at if created_at is not None else utc_now()
    pending: list[str] = []
    skipped = 0
    for idiom in idioms:
        existing = kb.lookup(
            idiom, idioms.lang, config.meaning_lang, source_model=config.model
        )
        if existing is not None and not config.refresh:
            skipped += 1
        else:
            pending.append(idiom)

    def distill_one(idiom: str) -> tuple[str, KBEntry | None, str | None]:
        try:
            spec = build_meaning_prompt(idiom, idioms.lang, config)
            response = provider.complete(
                CompletionRequest(
                    prompt=spec.text,
                    model=config.model,
                    temperature=spec.temperature,
                    max_tokens=spec.max_tokens,
                    stop=("\n\n",),
                )
            )
            meaning = parse_meaning(response.text, config)
        except (DistillError, ProviderError) as exc:
            return idiom, None, str(exc)
        entry = KBEntry(
            idiom=idiom,
            idiom_lang=idioms.lang,
            meaning_lang=config.meaning_lang,
            meaning=meaning,
            source_model=config.model,
            created_at=batch_time,
        )
        return idiom, entry, None

    outcomes = parallel_map(distill_one, pending, parallelism=parallelism)
    generated = 0
    failures: list[tuple[str, str]] = []
    for idiom, entry, reason in outcomes:
        if entry is not None:
            kb.upsert(entry)
            generated += 1
        else:
            log.warning("distill failed for %r: %s", idiom, reason)
            failures.append((idiom, reason or "unknown"))
    return DistillReport(
        generated=generated,
        skipped_existing=skipped,
        failed=len(failures),
        failures=tuple(sorted(failures)),
    )
