"""Idiom list ingestion: heterogeneous corpus files into one per-language lexicon.

Source corpora arrive as plain line lists, CSV/TSV columns, or JSONL fields.
Each loader normalizes and dedups; first-appearance order is preserved so
lexicon diffs stay stable when new datasets are appended.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .core import IdiomForgeError, Language, LanguageError, parse_language
from .jsonl import read_jsonl

log = logging.getLogger(__name__)

_WHITESPACE_RUN = re.compile(r"\s+")


class IngestError(IdiomForgeError):
    """Unreadable input or malformed row; message carries file and line."""


def normalize_idiom(raw: str, lang: Language) -> str:
    """Canonicalize one idiom string.

    NFC-normalize (NFKC would alias distinct CJK surface forms), strip
    surrounding whitespace, and collapse internal whitespace runs to one
    space for space-delimited languages only. Case is preserved; matching
    decides case policy, not ingestion.
    """
    text = unicodedata.normalize("NFC", raw).strip()
    if lang.space_delimited:
        text = _WHITESPACE_RUN.sub(" ", text)
    if not text:
        raise IngestError("blank idiom")
    return text


# ---------------------------------------------------------------------------
# Input formats
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlainLines:
    """One idiom per line; blank lines skipped."""


@dataclass(frozen=True)
class Csv:
    column: int = 0


@dataclass(frozen=True)
class Tsv:
    column: int = 0


@dataclass(frozen=True)
class JsonLines:
    field: str = "idiom"


IdiomFormat = PlainLines | Csv | Tsv | JsonLines


def parse_format(text: str) -> IdiomFormat:
    """Parse a CLI format string: ``plain``, ``csv[:col]``, ``tsv[:col]``, ``jsonl[:field]``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "plain":
        if arg:
            raise IngestError(f"format 'plain' takes no argument: {text!r}")
        return PlainLines()
    if name in ("csv", "tsv"):
        column = 0
        if arg:
            try:
                column = int(arg)
            except ValueError:
                raise IngestError(f"column index must be an integer: {text!r}") from None
            if column < 0:
                raise IngestError(f"column index must be >= 0: {text!r}")
        return Csv(column) if name == "csv" else Tsv(column)
    if name == "jsonl":
        return JsonLines(arg or "idiom")
    raise IngestError(f"unknown idiom list format: {text!r}")


def _iter_raw(path: Path, fmt: IdiomFormat) -> Iterator[tuple[int, str]]:
    """Yield (line_number, raw idiom) per the format; malformed rows raise."""
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc.strerror or exc}") from None
    with handle:
        if isinstance(fmt, PlainLines):
            for lineno, line in enumerate(handle, start=1):
                if line.strip():
                    yield lineno, line
        elif isinstance(fmt, (Csv, Tsv)):
            delimiter = "," if isinstance(fmt, Csv) else "\t"
            reader = csv.reader(handle, delimiter=delimiter)
            for row in reader:
                if not row or all(not cell.strip() for cell in row):
                    continue
                if fmt.column >= len(row):
                    raise IngestError(
                        f"{path}:{reader.line_num}: row has {len(row)} columns, "
                        f"need column {fmt.column}"
                    )
                yield reader.line_num, row[fmt.column]
        else:
            for lineno, line in enumerate(handle, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    obj = json.loads(stripped)
                except json.JSONDecodeError as exc:
                    raise IngestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
                if not isinstance(obj, dict) or fmt.field not in obj:
                    raise IngestError(f"{path}:{lineno}: missing field {fmt.field!r}")
                value = obj[fmt.field]
                if not isinstance(value, str):
                    raise IngestError(
                        f"{path}:{lineno}: field {fmt.field!r} is {type(value).__name__}, not a string"
                    )
                yield lineno, value


# ---------------------------------------------------------------------------
# IdiomSet
# ---------------------------------------------------------------------------

@dataclass
class IdiomSet:
    """An ordered, deduplicated idiom lexicon for one language.

    ``provenance`` maps each idiom to the dataset names it came from; every
    member has at least one. Iteration order is first appearance.
    """

    lang: Language
    _order: list[str] = field(default_factory=list)
    _provenance: dict[str, set[str]] = field(default_factory=dict)

    @property
    def idioms(self) -> tuple[str, ...]:
        return tuple(self._order)

    def provenance(self, idiom: str) -> frozenset[str]:
        return frozenset(self._provenance.get(idiom, ()))

    def add(self, idiom: str, dataset_name: str) -> bool:
        """Add a normalized idiom; returns True iff it was new."""
        if not dataset_name:
            raise IngestError("dataset name must be non-empty")
        new = idiom not in self._provenance
        if new:
            self._order.append(idiom)
            self._provenance[idiom] = set()
        self._provenance[idiom].add(dataset_name)
        return new

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, idiom: str) -> bool:
        return idiom in self._provenance

    def __iter__(self) -> Iterator[str]:
        return iter(self._order)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IdiomSet):
            return NotImplemented
        return (
            self.lang == other.lang
            and self._order == other._order
            and self._provenance == other._provenance
        )

    def to_rows(self) -> Iterator[dict[str, object]]:
        """Wire form rows: ``{"idiom", "lang", "sources"}``, sources sorted."""
        for idiom in self._order:
            yield {
                "idiom": idiom,
                "lang": self.lang.code,
                "sources": sorted(self._provenance[idiom]),
            }


def load_idiom_list(
    path: str | Path, fmt: IdiomFormat, lang: Language, dataset_name: str
) -> IdiomSet:
    """Load, normalize, and dedup one corpus file into an IdiomSet.

    Malformed rows raise with their line number; an empty result is only a
    warning, since sparse per-language corpora are expected.
    """
    path = Path(path)
    idiom_set = IdiomSet(lang=lang)
    for lineno, raw in _iter_raw(path, fmt):
        try:
            idiom = normalize_idiom(raw, lang)
        except IngestError as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from None
        idiom_set.add(idiom, dataset_name)
    if not idiom_set:
        log.warning("no idioms loaded from %s (dataset %s)", path, dataset_name)
    return idiom_set


def load_idiom_rows(path: str | Path) -> IdiomSet:
    """Reload an IdiomSet from its own wire-form JSONL rows."""
    path = Path(path)
    result: IdiomSet | None = None
    for lineno, row in read_jsonl(path):
        try:
            lang = parse_language(row["lang"])
            idiom = row["idiom"]
            sources = row["sources"]
        except (KeyError, LanguageError) as exc:
            raise IngestError(f"{path}:{lineno}: bad idiom row: {exc}") from exc
        if not isinstance(idiom, str) or not idiom:
            raise IngestError(f"{path}:{lineno}: bad idiom row: empty idiom")
        if not isinstance(sources, list) or not sources:
            raise IngestError(f"{path}:{lineno}: bad idiom row: empty sources")
        if result is None:
            result = IdiomSet(lang=lang)
        elif lang is not result.lang:
            raise IngestError(f"{path}:{lineno}: mixed languages in one idiom file")
        for source in sources:
            result.add(idiom, source)
    if result is None:
        raise IngestError(f"{path}: no idiom rows")
    return result


def merge_idiom_sets(sets: Iterable[IdiomSet], lang: Language | None = None) -> IdiomSet:
    """Union idiom sets of one language; provenance merges by set union.

    Order is first appearance across inputs in argument order. ``lang``
    supplies the language when ``sets`` is empty and must agree with the
    inputs otherwise.
    """
    sets = list(sets)
    langs = {s.lang.code for s in sets}
    if lang is not None:
        langs.add(lang.code)
    if len(langs) > 1:
        raise IngestError(f"cannot merge mixed languages: {', '.join(sorted(langs))}")
    if not langs:
        raise IngestError("merge of zero sets needs an explicit lang")
    merged_lang = lang if lang is not None else sets[0].lang
    merged = IdiomSet(lang=merged_lang)
    for idiom_set in sets:
        for idiom in idiom_set:
            for source in sorted(idiom_set.provenance(idiom)):
                merged.add(idiom, source)
    return merged
