"""Idiom location in source sentences.

Default pipeline mode trusts gold idiom-sentence pairs; automatic mode runs
an Aho-Corasick automaton over the KB lexicon. Matching is conservative and
exact: English is case-insensitive on word boundaries, CJK is exact
substring, and no inflectional variants are recognized.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import IdiomForgeError, IdiomMatch, Language, Provenance
from .ingest import IdiomSet

# All offsets count Unicode scalar values (Python string indices).


class MatchError(IdiomForgeError):
    """Empty lexicon or gold-pair inconsistency."""


def _fold(char: str) -> str:
    # Per-character case fold that never changes string length, so match
    # offsets in the folded text are valid in the original. Multi-char
    # expansions (e.g. ß -> ss) keep their original form.
    lowered = char.lower()
    return lowered if len(lowered) == 1 else char


def fold_text(text: str) -> str:
    return "".join(_fold(c) for c in text)


def _is_letter(char: str) -> bool:
    return char.isalpha()


class _AhoCorasick:
    """Character-level Aho-Corasick automaton over a fixed pattern set."""

    def __init__(self, patterns: list[str]) -> None:
        # Node storage: per-node dict of char -> next node, failure link,
        # and the lengths of patterns ending at the node.
        self._next: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._hits: list[list[int]] = [[]]
        for pattern in patterns:
            self._insert(pattern)
        self._build_failure_links()

    def _insert(self, pattern: str) -> None:
        node = 0
        for char in pattern:
            node = self._next[node].setdefault(char, self._new_node())
        self._hits[node].append(len(pattern))

    def _new_node(self) -> int:
        self._next.append({})
        self._fail.append(0)
        self._hits.append([])
        return len(self._next) - 1

    def _build_failure_links(self) -> None:
        queue: deque[int] = deque()
        for child in self._next[0].values():
            queue.append(child)
        while queue:
            node = queue.popleft()
            for char, child in self._next[node].items():
                queue.append(child)
                fallback = self._fail[node]
                while fallback and char not in self._next[fallback]:
                    fallback = self._fail[fallback]
                fail_to = self._next[fallback].get(char, 0)
                self._fail[child] = 0 if fail_to == child else fail_to
                self._hits[child] = self._hits[child] + self._hits[self._fail[child]]

    def scan(self, text: str):
        """Yield (start, end) for every pattern occurrence in text."""
        node = 0
        for position, char in enumerate(text):
            while node and char not in self._next[node]:
                node = self._fail[node]
            node = self._next[node].get(char, 0)
            for length in self._hits[node]:
                yield position + 1 - length, position + 1


@dataclass
class Lexicon:
    """Immutable multi-pattern matcher over one language's idiom set.

    Safe to share across threads after construction. For space-delimited
    languages the automaton is built over case-folded patterns and scans
    case-folded sentences, with matches kept only on word boundaries.
    """

    lang: Language
    patterns: frozenset[str]
    _automaton: _AhoCorasick = field(repr=False)

    def __contains__(self, pattern: str) -> bool:
        return pattern in self.patterns


def build_lexicon(idioms: IdiomSet) -> Lexicon:
    """Build the matching automaton; O(total pattern length)."""
    if len(idioms) == 0:
        raise MatchError("cannot build a lexicon from an empty idiom set")
    patterns = list(idioms)
    keyed = [fold_text(p) for p in patterns] if idioms.lang.space_delimited else patterns
    return Lexicon(
        lang=idioms.lang,
        patterns=frozenset(patterns),
        _automaton=_AhoCorasick(keyed),
    )


def _on_word_boundary(text: str, start: int, end: int) -> bool:
    # A match must be flanked by non-letters or string edges ("act" must
    # not hit inside "tract").
    before_ok = start == 0 or not _is_letter(text[start - 1])
    after_ok = end == len(text) or not _is_letter(text[end])
    return before_ok and after_ok


def find_idioms(sentence: str, lexicon: Lexicon) -> list[IdiomMatch]:
    """All pattern occurrences, sorted by (start ascending, longer first)."""
    if not sentence:
        return []
    if lexicon.lang.space_delimited:
        haystack = fold_text(sentence)
        spans = [
            (start, end)
            for start, end in lexicon._automaton.scan(haystack)
            if _on_word_boundary(haystack, start, end)
        ]
    else:
        spans = list(lexicon._automaton.scan(sentence))
    matches = [
        IdiomMatch(
            idiom=sentence[start:end],
            start=start,
            end=end,
            provenance=Provenance.DETECTED,
        )
        for start, end in spans
    ]
    matches.sort(key=lambda m: (m.start, -m.length))
    return matches


def select_primary(matches: list[IdiomMatch]) -> IdiomMatch | None:
    """Leftmost-longest disambiguation to a single target idiom.

    Deterministic under permutation of the input: the winner is the match
    with the earliest start, longest span on ties. Matches nested inside the
    winner never outrank it by construction.
    """
    if not matches:
        return None
    return min(matches, key=lambda m: (m.start, -m.length))


def pair_gold(sentence: str, gold_idiom: str, lang: Language) -> IdiomMatch:
    """Locate a dataset-provided gold idiom; absence is a data error.

    Exact scan first; space-delimited languages retry case-insensitively on
    word boundaries, mirroring find_idioms' case policy.
    """
    if not gold_idiom:
        raise MatchError("gold idiom must be non-empty")
    start = sentence.find(gold_idiom)
    if start < 0 and lang.space_delimited:
        folded_sentence = fold_text(sentence)
        folded_idiom = fold_text(gold_idiom)
        position = folded_sentence.find(folded_idiom)
        while position >= 0:
            if _on_word_boundary(folded_sentence, position, position + len(folded_idiom)):
                start = position
                break
            position = folded_sentence.find(folded_idiom, position + 1)
    if start < 0:
        raise MatchError(f"gold idiom not found: {gold_idiom!r}")
    return IdiomMatch(
        idiom=gold_idiom,
        start=start,
        end=start + len(gold_idiom),
        provenance=Provenance.GOLD,
    )
