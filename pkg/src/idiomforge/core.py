"""Shared domain types: languages, KB entries, matches, prompts, and records.

Everything here is an immutable value object safe to share across threads.
Each persisted type carries a ``to_dict`` / ``from_dict`` pair defining its
JSONL wire form; encoding then decoding any valid instance is lossless.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Mapping


class IdiomForgeError(Exception):
    """Base class for all errors raised by this package."""


class LanguageError(IdiomForgeError):
    """Unknown or malformed language code."""


class ValidationError(IdiomForgeError):
    """A domain value violates its invariants."""


# ---------------------------------------------------------------------------
# Languages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Language:
    """A registered language: canonical code plus display names.

    ``names`` maps a prompt-language code to this language's display name in
    that language (used when rendering prompts); an English name is required.
    ``space_delimited`` drives whitespace collapsing, case policy, and word
    boundaries; CJK languages leave internal text untouched and match by
    exact substring.
    """

    code: str
    names: Mapping[str, str]
    space_delimited: bool

    def name_in(self, prompt_lang: "Language | str" = "en") -> str:
        key = prompt_lang.code if isinstance(prompt_lang, Language) else prompt_lang
        return self.names.get(key, self.names["en"])

    def __str__(self) -> str:
        return self.code


_REGISTRY: dict[str, Language] = {}


def register_language(code: str, names: Mapping[str, str], space_delimited: bool) -> Language:
    """Add a language to the registry (or return the identical existing one).

    ``code`` is canonicalized to lowercase. Re-registering with different
    attributes is rejected so codes keep one meaning per process.
    """
    canonical = code.strip().lower()
    if not canonical.isalpha():
        raise LanguageError(f"invalid language code: {code!r}")
    if "en" not in names:
        raise LanguageError(f"language {canonical!r} needs at least an English display name")
    lang = Language(code=canonical, names=dict(names), space_delimited=space_delimited)
    existing = _REGISTRY.get(canonical)
    if existing is not None:
        if existing != lang:
            raise LanguageError(f"language {canonical!r} already registered with different attributes")
        return existing
    _REGISTRY[canonical] = lang
    return lang


EN = register_language("en", {"en": "English", "zh": "英文", "ja": "英語"}, space_delimited=True)
ZH = register_language("zh", {"en": "Chinese", "zh": "中文", "ja": "中国語"}, space_delimited=False)
JA = register_language("ja", {"en": "Japanese", "zh": "日文", "ja": "日本語"}, space_delimited=False)


def parse_language(code: str) -> Language:
    """Resolve a language code string to its registered Language.

    Case-insensitive ("En", "EN", "en" are one code). Unknown codes raise
    rather than coerce.
    """
    canonical = code.strip().lower()
    lang = _REGISTRY.get(canonical)
    if lang is None:
        known = ", ".join(sorted(_REGISTRY))
        raise LanguageError(f"unknown language code {code!r} (known: {known})")
    return lang


def known_languages() -> tuple[Language, ...]:
    return tuple(_REGISTRY[c] for c in sorted(_REGISTRY))


def language_pair(source: Language, target: Language) -> str:
    """Canonical key for a (source, target) pair, e.g. ``zh-en``."""
    return f"{source.code}-{target.code}"


# ---------------------------------------------------------------------------
# Enumerations
# ---------------------------------------------------------------------------

class PromptMode(str, Enum):
    DIRECT = "direct"
    KB_COT = "kb-cot"
    SELF_COT = "self-cot"
    MEANING_DISTILL = "meaning-distill"
    JUDGE = "judge"

    @classmethod
    def parse(cls, value: str) -> "PromptMode":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"unknown prompt mode {value!r}") from None


class Provenance(str, Enum):
    GOLD = "gold"
    DETECTED = "detected"

    @classmethod
    def parse(cls, value: str) -> "Provenance":
        try:
            return cls(value)
        except ValueError:
            raise ValidationError(f"unknown provenance {value!r}") from None


GENERATION_TEMPERATURE = 0.7
JUDGE_TEMPERATURE = 0.1


# ---------------------------------------------------------------------------
# Timestamp helpers (RFC 3339, UTC)
# ---------------------------------------------------------------------------

def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def format_utc(ts: datetime) -> str:
    """Render a UTC datetime as RFC 3339 with a ``Z`` suffix."""
    if ts.tzinfo is None:
        raise ValidationError("timestamp must be timezone-aware")
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_utc(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ValidationError(f"invalid RFC 3339 timestamp: {text!r}") from None
    if ts.tzinfo is None:
        raise ValidationError(f"timestamp missing timezone: {text!r}")
    return ts.astimezone(timezone.utc)


# ---------------------------------------------------------------------------
# Domain records
# ---------------------------------------------------------------------------

def _require_nonempty(value: str, what: str) -> None:
    if not value:
        raise ValidationError(f"{what} must be non-empty")


@dataclass(frozen=True)
class KBEntry:
    """One idiom with one figurative meaning in one meaning-language.

    Identity is (idiom, idiom_lang, meaning_lang, source_model); the store
    keeps at most one entry per identity key. ``source_model`` is free-form
    so new providers need no type change.
    """

    idiom: str
    idiom_lang: Language
    meaning_lang: Language
    meaning: str
    source_model: str
    created_at: datetime

    def __post_init__(self) -> None:
        _require_nonempty(self.idiom, "idiom")
        _require_nonempty(self.meaning, "meaning")
        _require_nonempty(self.source_model, "source_model")
        if unicodedata.normalize("NFC", self.idiom) != self.idiom:
            raise ValidationError(f"idiom not NFC-normalized: {self.idiom!r}")
        if "\n" in self.meaning or "\r" in self.meaning:
            raise ValidationError("meaning must be a single logical line")
        if self.created_at.tzinfo is None:
            raise ValidationError("created_at must be timezone-aware UTC")

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.idiom, self.idiom_lang.code, self.meaning_lang.code, self.source_model)

    def to_dict(self) -> dict[str, Any]:
        return {
            "idiom": self.idiom,
            "idiom_lang": self.idiom_lang.code,
            "meaning_lang": self.meaning_lang.code,
            "meaning": self.meaning,
            "source_model": self.source_model,
            "created_at": format_utc(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "KBEntry":
        return cls(
            idiom=data["idiom"],
            idiom_lang=parse_language(data["idiom_lang"]),
            meaning_lang=parse_language(data["meaning_lang"]),
            meaning=data["meaning"],
            source_model=data["source_model"],
            created_at=parse_utc(data["created_at"]),
        )


@dataclass(frozen=True)
class IdiomMatch:
    """A located idiom span inside a source sentence.

    Offsets count Unicode scalar values (Python string indices), inclusive
    start / exclusive end, so they are portable across the mixed single- and
    multi-byte scripts this toolkit handles.
    """

    idiom: str
    start: int
    end: int
    provenance: Provenance

    def __post_init__(self) -> None:
        _require_nonempty(self.idiom, "idiom")
        if not (0 <= self.start < self.end):
            raise ValidationError(f"invalid span [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_dict(self) -> dict[str, Any]:
        return {
            "idiom": self.idiom,
            "start": self.start,
            "end": self.end,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "IdiomMatch":
        return cls(
            idiom=data["idiom"],
            start=data["start"],
            end=data["end"],
            provenance=Provenance.parse(data["provenance"]),
        )


@dataclass(frozen=True)
class PromptSpec:
    """A fully rendered provider request, ready to submit.

    Temperature defaults to 0.7 for generation modes and 0.1 for judging;
    direct prompts carry no meaning language.
    """

    text: str
    mode: PromptMode
    prompt_lang: Language
    meaning_lang: Language | None = None
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = 256

    def __post_init__(self) -> None:
        _require_nonempty(self.text, "prompt text")
        if self.mode is PromptMode.DIRECT and self.meaning_lang is not None:
            raise ValidationError("direct prompts carry no meaning language")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValidationError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")


@dataclass(frozen=True)
class TranslationRecord:
    """One translated sentence with the knowledge used to produce it."""

    id: str
    source_lang: Language
    target_lang: Language
    source_text: str
    idiom: str
    mode: PromptMode
    translation: str
    translator_model: str
    meaning_used: str | None = None
    meaning_source_model: str | None = None

    def __post_init__(self) -> None:
        _require_nonempty(self.id, "record id")
        _require_nonempty(self.source_text, "source_text")
        _require_nonempty(self.idiom, "idiom")
        _require_nonempty(self.translation, "translation")
        if self.mode is PromptMode.DIRECT and self.meaning_used is not None:
            raise ValidationError("direct records carry no meaning")
        if self.mode in (PromptMode.KB_COT, PromptMode.SELF_COT) and not self.meaning_used:
            raise ValidationError(f"{self.mode.value} records must carry the meaning used")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "source_lang": self.source_lang.code,
            "target_lang": self.target_lang.code,
            "source_text": self.source_text,
            "idiom": self.idiom,
            "mode": self.mode.value,
            "translation": self.translation,
            "translator_model": self.translator_model,
        }
        if self.meaning_used is not None:
            data["meaning_used"] = self.meaning_used
        if self.meaning_source_model is not None:
            data["meaning_source_model"] = self.meaning_source_model
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TranslationRecord":
        return cls(
            id=data["id"],
            source_lang=parse_language(data["source_lang"]),
            target_lang=parse_language(data["target_lang"]),
            source_text=data["source_text"],
            idiom=data["idiom"],
            mode=PromptMode.parse(data["mode"]),
            translation=data["translation"],
            translator_model=data["translator_model"],
            meaning_used=data.get("meaning_used"),
            meaning_source_model=data.get("meaning_source_model"),
        )


VALID_SCORES = (1, 2, 3)


@dataclass(frozen=True)
class EvalRecord:
    """Evaluation results for one translation record.

    ``judge_score`` and ``human_score`` share the 1-3 rubric scale;
    ``judge_error`` records a per-record judging failure (unparseable or
    out-of-range response) without aborting the batch.
    """

    record_id: str
    judge_score: int | None = None
    human_score: int | None = None
    bleu_sentence: float | None = None
    judge_error: str | None = None

    def __post_init__(self) -> None:
        _require_nonempty(self.record_id, "record_id")
        for name, score in (("judge_score", self.judge_score), ("human_score", self.human_score)):
            if score is not None and score not in VALID_SCORES:
                raise ValidationError(f"{name} {score} outside {{1, 2, 3}}")
        if self.bleu_sentence is not None and not 0.0 <= self.bleu_sentence <= 100.0:
            raise ValidationError(f"bleu_sentence {self.bleu_sentence} outside [0, 100]")
        if self.judge_score is not None and self.judge_error is not None:
            raise ValidationError("a record has either a judge score or a judge error, not both")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"record_id": self.record_id}
        for name in ("judge_score", "human_score", "bleu_sentence", "judge_error"):
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalRecord":
        return cls(
            record_id=data["record_id"],
            judge_score=data.get("judge_score"),
            human_score=data.get("human_score"),
            bleu_sentence=data.get("bleu_sentence"),
            judge_error=data.get("judge_error"),
        )

    def merged_with(self, **updates: Any) -> "EvalRecord":
        """Return a copy with the given fields replaced."""
        return replace(self, **updates)
