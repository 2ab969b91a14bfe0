"""Knowledge base persistence and lookup.

The KB maps (idiom, idiom_lang, meaning_lang, source_model) identity keys to
entries, with a secondary index per (idiom, idiom_lang) for meaning lookup.
Files are JSONL sorted by identity key, so a load-save cycle is
byte-identical and KB diffs stay readable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

from .core import IdiomForgeError, KBEntry, Language
from .jsonl import read_jsonl, write_jsonl


class KBError(IdiomForgeError):
    """Corrupt KB file or invalid store operation."""


# Fallback chain rationale: target-language meanings guide translation best,
# and English is the best-supported pivot, so a miss on the requested
# meaning language tries En, then the idiom's own language.
def fallback_chain(meaning_lang: Language, idiom_lang: Language) -> tuple[str, ...]:
    return tuple(dict.fromkeys((meaning_lang.code, "en", idiom_lang.code)))


@dataclass(frozen=True)
class LangStats:
    entries: int
    idioms: int


class KnowledgeBase:
    """In-memory KB: single-writer, multi-reader; mutations need exclusive access.

    ``model_preference`` ranks source models for lookups that do not pin one;
    models absent from the list fall back to lexicographic order.
    """

    def __init__(self, model_preference: Sequence[str] = ()) -> None:
        self.model_preference = tuple(model_preference)
        self._entries: dict[tuple[str, str, str, str], KBEntry] = {}
        # (idiom, idiom_lang) -> meaning_lang -> source_model -> entry
        self._by_idiom: dict[tuple[str, str], dict[str, dict[str, KBEntry]]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[KBEntry]:
        """Entries in identity-key order (the file order)."""
        for key in sorted(self._entries):
            yield self._entries[key]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self._entries == other._entries

    def upsert(self, entry: KBEntry) -> bool:
        """Store an entry; returns True iff an existing identity key was overwritten.

        Last-writer-wins, so re-running distillation refreshes meanings;
        callers surface the replaced count to keep overwrites visible.
        """
        key = entry.key
        replaced = key in self._entries
        self._entries[key] = entry
        group = self._by_idiom.setdefault((entry.idiom, entry.idiom_lang.code), {})
        group.setdefault(entry.meaning_lang.code, {})[entry.source_model] = entry
        return replaced

    def _pick_model(self, models: dict[str, KBEntry]) -> KBEntry:
        def rank(model: str) -> tuple[int, int, str]:
            if model in self.model_preference:
                return (0, self.model_preference.index(model), "")
            return (1, 0, model)

        return models[min(models, key=rank)]

    def lookup(
        self,
        idiom: str,
        idiom_lang: Language,
        meaning_lang: Language,
        source_model: str | None = None,
    ) -> KBEntry | None:
        """Retrieve a meaning; absence returns None, never raises.

        With ``source_model`` the lookup is exact-key. Without it, the
        meaning language falls back requested -> En -> idiom_lang, and within
        the first hit language the preferred source model wins.
        """
        if source_model is not None:
            return self._entries.get(
                (idiom, idiom_lang.code, meaning_lang.code, source_model)
            )
        group = self._by_idiom.get((idiom, idiom_lang.code))
        if not group:
            return None
        for lang_code in fallback_chain(meaning_lang, idiom_lang):
            models = group.get(lang_code)
            if models:
                return self._pick_model(models)
        return None

    def stats(self) -> dict[str, LangStats]:
        """Per idiom-language entry and distinct-idiom counts."""
        entries: dict[str, int] = {}
        idioms: dict[str, set[str]] = {}
        for key in self._entries:
            idiom, idiom_lang = key[0], key[1]
            entries[idiom_lang] = entries.get(idiom_lang, 0) + 1
            idioms.setdefault(idiom_lang, set()).add(idiom)
        return {
            lang: LangStats(entries=entries[lang], idioms=len(idioms[lang]))
            for lang in sorted(entries)
        }


def merge_kbs(base: KnowledgeBase, *others: KnowledgeBase) -> tuple[KnowledgeBase, int]:
    """Union of KBs, later arguments winning collisions; returns (kb, replaced count)."""
    merged = KnowledgeBase(model_preference=base.model_preference)
    replaced = 0
    for kb in (base, *others):
        for entry in kb:
            if merged.upsert(entry):
                replaced += 1
    return merged, replaced


def save_kb(kb: KnowledgeBase, path: str | Path) -> int:
    """Write the KB as JSONL in identity-key order; returns lines written."""
    return write_jsonl(path, (entry.to_dict() for entry in kb))


def load_kb(path: str | Path, model_preference: Sequence[str] = ()) -> KnowledgeBase:
    """Load a KB file; duplicate identity keys mean the file is corrupt."""
    kb = KnowledgeBase(model_preference=model_preference)
    for lineno, obj in read_jsonl(path):
        try:
            entry = KBEntry.from_dict(obj)
        except (KeyError, TypeError, IdiomForgeError) as exc:
            detail = str(exc) or type(exc).__name__
            raise KBError(f"{path}:{lineno}: {detail}") from None
        if kb.upsert(entry):
            raise KBError(f"{path}:{lineno}: duplicate identity key {entry.key}")
    return kb
