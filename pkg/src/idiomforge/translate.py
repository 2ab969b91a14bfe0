"""Translation prompting: Direct, KB-CoT, and Self-CoT modes.

KB-CoT prepends the idiom's stored figurative meaning as a knowledge
transition before the translation instruction. Self-CoT asks the translator
model itself for the meaning first (two calls), so the self-generated
meaning is captured and auditable. Direct is the plain instruction baseline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import (
    IdiomForgeError,
    Language,
    PromptMode,
    PromptSpec,
    TranslationRecord,
    known_languages,
    parse_language,
)
from .distill import DistillConfig, DistillError, parse_meaning
from .kbstore import KnowledgeBase
from .provider import CompletionProvider, CompletionRequest, ProviderError, parallel_map
from .templates import load_template

TRANSLATION_MODES = (PromptMode.DIRECT, PromptMode.KB_COT, PromptMode.SELF_COT)
DEFAULT_STOP = ("\n\n",)


class TranslateError(IdiomForgeError):
    """Bad configuration, unresolvable meaning, or unusable response."""


@dataclass(frozen=True)
class TranslateConfig:
    """One translation run's settings.

    prompt_lang defaults to English and meaning_lang to the target language,
    the best-performing axes; both stay independently configurable so
    language sweeps are config-only changes.
    """

    source_lang: Language
    target_lang: Language
    mode: PromptMode
    translator_model: str
    prompt_lang: Language = parse_language("en")
    meaning_lang: Language | None = None
    meaning_source_model: str | None = None
    temperature: float = 0.7
    max_tokens: int = 256
    template_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if self.mode not in TRANSLATION_MODES:
            raise TranslateError(f"{self.mode.value} is not a translation mode")
        if not self.translator_model:
            raise TranslateError("translator_model must be non-empty")
        if self.source_lang == self.target_lang:
            raise TranslateError("source and target language must differ")

    @property
    def effective_meaning_lang(self) -> Language:
        return self.meaning_lang if self.meaning_lang is not None else self.target_lang


def _language_names(config: TranslateConfig) -> dict[str, str]:
    return {
        "source_lang_name": config.source_lang.name_in(config.prompt_lang),
        "target_lang_name": config.target_lang.name_in(config.prompt_lang),
    }


def _knowledge_prompt(
    source_text: str, idiom: str, meaning: str, config: TranslateConfig, mode: PromptMode
) -> PromptSpec:
    template = load_template("kb_cot", config.prompt_lang, config.template_dir)
    text = template.render(
        idiom=idiom,
        meaning=meaning,
        source_text=source_text,
        **_language_names(config),
    )
    return PromptSpec(
        text=text,
        mode=mode,
        prompt_lang=config.prompt_lang,
        meaning_lang=config.effective_meaning_lang,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )


def build_translation_prompt(
    source_text: str, idiom: str, meaning: str | None, config: TranslateConfig
) -> PromptSpec:
    """Render the prompt for one record under the configured mode.

    Pure in its arguments, so cache keys are stable. Direct and Self-CoT
    take no meaning (Self-CoT returns the stage-1 meaning request; its
    stage-2 prompt reuses the knowledge layout once a meaning exists).
    """
    if not source_text or not idiom:
        raise TranslateError("source_text and idiom must be non-empty")
    if config.mode is PromptMode.KB_COT:
        if meaning is None:
            raise TranslateError("kb-cot prompts need a meaning")
        return _knowledge_prompt(source_text, idiom, meaning, config, PromptMode.KB_COT)
    if meaning is not None:
        raise TranslateError(f"{config.mode.value} prompts take no meaning")
    if config.mode is PromptMode.DIRECT:
        template = load_template("direct", config.prompt_lang, config.template_dir)
        text = template.render(source_text=source_text, **_language_names(config))
        return PromptSpec(
            text=text,
            mode=PromptMode.DIRECT,
            prompt_lang=config.prompt_lang,
            temperature=config.temperature,
            max_tokens=config.max_tokens,
        )
    template = load_template("self_cot_meaning", config.prompt_lang, config.template_dir)
    meaning_lang = config.effective_meaning_lang
    text = template.render(
        idiom=idiom,
        idiom_lang_name=config.source_lang.name_in(config.prompt_lang),
        meaning_lang_name=meaning_lang.name_in(config.prompt_lang),
    )
    return PromptSpec(
        text=text,
        mode=PromptMode.SELF_COT,
        prompt_lang=config.prompt_lang,
        meaning_lang=meaning_lang,
        temperature=config.temperature,
        max_tokens=128,
    )


def _label_pattern(target_lang: Language) -> re.Pattern[str]:
    # The model may echo the open label in any of the display names the
    # templates could have used (plus the bare code), with an ASCII or
    # fullwidth colon.
    names = {target_lang.code}
    for lang in known_languages():
        names.add(target_lang.name_in(lang))
    alternatives = "|".join(re.escape(name) for name in sorted(names, key=len, reverse=True))
    return re.compile(rf"^\s*(?:{alternatives})\s*[:：]\s*", re.IGNORECASE)


_BLANK_LINE = re.compile(r"\n[ \t]*\n")


def parse_translation(response_text: str, target_lang: Language | None = None) -> str:
    """Clean one translation out of a provider response.

    Strips an echoed leading target-language label, truncates at the first
    blank line, and trims whitespace; an empty result is an error.
    """
    text = response_text.lstrip()
    if target_lang is not None:
        text = _label_pattern(target_lang).sub("", text, count=1)
    cut = _BLANK_LINE.search(text)
    if cut is not None:
        text = text[: cut.start()]
    translation = text.strip()
    if not translation:
        raise TranslateError("empty translation")
    return translation


# ---------------------------------------------------------------------------
# Batch runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceItem:
    """One input row: a sentence paired with its (gold) idiom."""

    id: str
    source_text: str
    idiom: str

    def __post_init__(self) -> None:
        if not self.id or not self.source_text or not self.idiom:
            raise TranslateError("id, source_text, and idiom must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "source_text": self.source_text, "idiom": self.idiom}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SourceItem":
        return cls(id=data["id"], source_text=data["source_text"], idiom=data["idiom"])


@dataclass(frozen=True)
class RecordFailure:
    id: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"id": self.id, "reason": self.reason}


@dataclass(frozen=True)
class TranslationRun:
    """Batch result: successful records plus per-record failures, input order."""

    records: tuple[TranslationRecord, ...]
    failures: tuple[RecordFailure, ...]


def _stage1_parse_config(config: TranslateConfig) -> DistillConfig:
    # Self-CoT stage 1 responses follow the meaning-prompt layout, so the
    # distill parser applies unchanged.
    return DistillConfig(
        meaning_lang=config.effective_meaning_lang,
        model=config.translator_model,
        zero_shot=True,
    )


def run_translation(
    dataset: Iterable[SourceItem],
    config: TranslateConfig,
    provider: CompletionProvider,
    kb: KnowledgeBase | None = None,
    parallelism: int = 4,
) -> TranslationRun:
    """Translate a dataset; records come back in input order.

    KB misses and provider failures are per-record: the run continues and
    reports them. A missing KB handle in kb-cot mode is a config error.
    """
    items = list(dataset)
    if config.mode is PromptMode.KB_COT and kb is None:
        raise TranslateError("kb-cot mode needs a knowledge base")

    def request(spec: PromptSpec) -> CompletionRequest:
        return CompletionRequest(
            prompt=spec.text,
            model=config.translator_model,
            temperature=spec.temperature,
            max_tokens=spec.max_tokens,
            stop=DEFAULT_STOP,
        )

    def translate_one(item: SourceItem) -> TranslationRecord | RecordFailure:
        try:
            meaning_used: str | None = None
            meaning_source: str | None = None
            if config.mode is PromptMode.KB_COT:
                entry = kb.lookup(
                    item.idiom,
                    config.source_lang,
                    config.effective_meaning_lang,
                    source_model=config.meaning_source_model,
                )
                if entry is None:
                    return RecordFailure(item.id, f"no meaning for idiom {item.idiom!r}")
                meaning_used, meaning_source = entry.meaning, entry.source_model
                spec = build_translation_prompt(item.source_text, item.idiom, entry.meaning, config)
            elif config.mode is PromptMode.SELF_COT:
                stage1 = build_translation_prompt(item.source_text, item.idiom, None, config)
                stage1_text = provider.complete(request(stage1)).text
                meaning_used = parse_meaning(stage1_text, _stage1_parse_config(config))
                meaning_source = "self"
                spec = _knowledge_prompt(
                    item.source_text, item.idiom, meaning_used, config, PromptMode.SELF_COT
                )
            else:
                spec = build_translation_prompt(item.source_text, item.idiom, None, config)
            response = provider.complete(request(spec))
            translation = parse_translation(response.text, config.target_lang)
        except (ProviderError, TranslateError, DistillError) as exc:
            return RecordFailure(item.id, str(exc))
        return TranslationRecord(
            id=item.id,
            source_lang=config.source_lang,
            target_lang=config.target_lang,
            source_text=item.source_text,
            idiom=item.idiom,
            mode=config.mode,
            translation=translation,
            translator_model=config.translator_model,
            meaning_used=meaning_used,
            meaning_source_model=meaning_source,
        )

    outcomes = parallel_map(translate_one, items, parallelism=parallelism)
    records = tuple(o for o in outcomes if isinstance(o, TranslationRecord))
    failures = tuple(o for o in outcomes if isinstance(o, RecordFailure))
    return TranslationRun(records=records, failures=failures)
