"""Rubric judging and the internal BLEU baseline.

The judge scores idiom translations 1-3 against a figurative-meaning rubric
at low temperature; scores outside the rubric are recorded errors, never
coerced. BLEU-4 is reimplemented here bit-exactly and labeled
"bleu4-internal" in reports, so no external-toolkit compatibility is implied.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    EvalRecord,
    IdiomForgeError,
    Language,
    PromptMode,
    PromptSpec,
    TranslationRecord,
    VALID_SCORES,
    parse_language,
)
from .provider import CompletionProvider, CompletionRequest, ProviderError, parallel_map
from .templates import load_template

JUDGE_TEMPERATURE = 0.1
BLEU_METRIC_LABEL = "bleu4-internal"
_MAX_ORDER = 4


class JudgeError(IdiomForgeError):
    """Unparseable or out-of-range judge response, or bad configuration."""


class BleuError(IdiomForgeError):
    """Degenerate BLEU input (empty corpus, length mismatch)."""


def indefinite_article(noun_phrase: str) -> str:
    """'a' or 'an' for a language name ("an English sentence", "a Chinese …")."""
    return "an" if noun_phrase[:1].lower() in "aeiou" else "a"


# ---------------------------------------------------------------------------
# Judge prompting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeShot:
    """One worked example for few-shot judging ablations."""

    source_text: str
    idiom: str
    translation: str
    score: int

    def __post_init__(self) -> None:
        if self.score not in VALID_SCORES:
            raise JudgeError(f"shot score {self.score} outside {{1, 2, 3}}")


@dataclass(frozen=True)
class JudgeConfig:
    """Judge settings. Zero-shot by default: added examples were observed to
    make judge models lose focus, so shots exist only for that ablation."""

    judge_model: str
    temperature: float = JUDGE_TEMPERATURE
    shots: int = 0
    shot_pool: tuple[JudgeShot, ...] = ()
    template_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if not self.judge_model:
            raise JudgeError("judge_model must be non-empty")
        if self.shots < 0:
            raise JudgeError("shots must be >= 0")
        if self.shots > len(self.shot_pool):
            raise JudgeError(
                f"shots={self.shots} but only {len(self.shot_pool)} shot examples supplied"
            )


def _render_shot_block(shot: JudgeShot, source_name: str, target_name: str) -> str:
    return (
        "Evaluate the following translation:\n"
        f"{source_name} sentence: {shot.source_text}\n"
        f"Idiom in the {source_name} sentence: {shot.idiom}\n"
        f"{target_name} translation: {shot.translation}\n"
        f"Evaluation (score only): {shot.score}\n"
    )


def build_judge_prompt(
    source_text: str,
    idiom: str,
    translation: str,
    source_lang: Language,
    target_lang: Language,
    config: JudgeConfig,
) -> PromptSpec:
    """Render the rubric prompt; byte-identical for identical inputs."""
    if not source_text or not idiom or not translation:
        raise JudgeError("source_text, idiom, and translation must be non-empty")
    source_name = source_lang.name_in("en")
    target_name = target_lang.name_in("en")
    shots = "".join(
        _render_shot_block(shot, source_name, target_name)
        for shot in config.shot_pool[: config.shots]
    )
    template = load_template("judge", "en", config.template_dir)
    text = template.render(
        source_lang_name=source_name,
        target_lang_name=target_name,
        source_article=indefinite_article(source_name),
        shots=shots,
        source_text=source_text,
        idiom=idiom,
        translation=translation,
    )
    return PromptSpec(
        text=text,
        mode=PromptMode.JUDGE,
        prompt_lang=parse_language("en"),
        temperature=config.temperature,
        max_tokens=8,
    )


# First standalone integer: not glued to letters, underscores, other digits,
# or a decimal tail, so "3", "Score: 2", "2/3" parse but "v2", "2.5" do not.
_SCORE_TOKEN = re.compile(r"(?<![0-9A-Za-z_.])([0-9]+)(?![0-9A-Za-z_]|\.[0-9])")


def parse_score(response_text: str) -> int:
    """Extract the rubric score; anything outside {1, 2, 3} is a typed error."""
    found = _SCORE_TOKEN.search(response_text)
    if found is None:
        raise JudgeError(f"unparseable score: {response_text[:80]!r}")
    value = int(found.group(1))
    if value not in VALID_SCORES:
        raise JudgeError(f"score out of range: {value}")
    return value


def judge_batch(
    records: Sequence[TranslationRecord],
    config: JudgeConfig,
    provider: CompletionProvider,
    parallelism: int = 4,
) -> list[EvalRecord]:
    """Score a batch; one EvalRecord per input, in input order.

    Per-record failures (transport, unparseable, out of range) land in
    judge_error; the batch always completes.
    """

    def judge_one(record: TranslationRecord) -> EvalRecord:
        try:
            spec = build_judge_prompt(
                record.source_text,
                record.idiom,
                record.translation,
                record.source_lang,
                record.target_lang,
                config,
            )
            response = provider.complete(
                CompletionRequest(
                    prompt=spec.text,
                    model=config.judge_model,
                    temperature=spec.temperature,
                    max_tokens=spec.max_tokens,
                )
            )
            score = parse_score(response.text)
        except (JudgeError, ProviderError) as exc:
            return EvalRecord(record_id=record.id, judge_error=str(exc))
        return EvalRecord(record_id=record.id, judge_score=score)

    return parallel_map(judge_one, records, parallelism=parallelism)


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------

def _is_punctuation(char: str) -> bool:
    return unicodedata.category(char).startswith("P")


def tokenize(text: str, lang: Language) -> list[str]:
    """Deterministic tokenizer backing the internal BLEU.

    Space-delimited languages: lowercase, split on Unicode whitespace, and
    emit punctuation as standalone tokens. CJK: one token per Unicode scalar
    value after dropping whitespace; character-level scoring keeps the
    baseline meaningful without a word segmenter.
    """
    if not lang.space_delimited:
        return [char for char in text if not char.isspace()]
    tokens: list[str] = []
    word: list[str] = []
    for char in text.lower():
        if char.isspace():
            if word:
                tokens.append("".join(word))
                word.clear()
        elif _is_punctuation(char):
            if word:
                tokens.append("".join(word))
                word.clear()
            tokens.append(char)
        else:
            word.append(char)
    if word:
        tokens.append("".join(word))
    return tokens


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    candidate_len: int
    reference_len: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "score": self.score,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "candidate_len": self.candidate_len,
            "reference_len": self.reference_len,
            "metric": BLEU_METRIC_LABEL,
        }


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def corpus_bleu(
    candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]
) -> BleuScore:
    """Corpus BLEU-4 with clipped precisions and add-half smoothing.

    Zero precision for n >= 2 is replaced by 1/(2 * total candidate n-gram
    count); a zero unigram precision (or an n-gram order with no candidate
    n-grams at all) stays zero and zeroes the score. Identity corpora score
    exactly 100.0.
    """
    if len(candidates) != len(references):
        raise BleuError(
            f"candidate/reference count mismatch: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise BleuError("empty candidate corpus")
    matches = [0] * _MAX_ORDER
    totals = [0] * _MAX_ORDER
    candidate_len = 0
    reference_len = 0
    for candidate, reference in zip(candidates, references):
        candidate_len += len(candidate)
        reference_len += len(reference)
        for n in range(1, _MAX_ORDER + 1):
            cand_counts = _ngram_counts(candidate, n)
            if not cand_counts:
                continue
            ref_counts = _ngram_counts(reference, n)
            totals[n - 1] += sum(cand_counts.values())
            matches[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in cand_counts.items()
            )
    precisions: list[float] = []
    for n in range(1, _MAX_ORDER + 1):
        total, match = totals[n - 1], matches[n - 1]
        if total == 0:
            precisions.append(0.0)
        elif match == 0 and n >= 2:
            precisions.append(1.0 / (2.0 * total))
        else:
            precisions.append(match / total)
    if candidate_len == 0:
        brevity_penalty = 0.0 if reference_len else 1.0
    elif candidate_len < reference_len:
        brevity_penalty = math.exp(1.0 - reference_len / candidate_len)
    else:
        brevity_penalty = 1.0
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        geo_mean = math.exp(sum(math.log(p) for p in precisions) / _MAX_ORDER)
        score = 100.0 * brevity_penalty * geo_mean
    return BleuScore(
        score=score,
        precisions=tuple(precisions),
        brevity_penalty=brevity_penalty,
        candidate_len=candidate_len,
        reference_len=reference_len,
    )


def sentence_bleu(candidate: Sequence[str], reference: Sequence[str]) -> BleuScore:
    """Single-pair BLEU with the same smoothing as corpus_bleu."""
    return corpus_bleu([candidate], [reference])


def bleu_for_records(
    records: Sequence[TranslationRecord],
    references: Mapping[str, str],
    target_lang: Language,
) -> tuple[BleuScore, list[EvalRecord]]:
    """Corpus score plus per-record sentence scores for correlation use.

    Records lacking a reference are skipped from both; the caller sees the
    coverage via the returned records.
    """
    paired = [(r, references[r.id]) for r in records if r.id in references]
    if not paired:
        raise BleuError("no records have references")
    cand_tokens = [tokenize(r.translation, target_lang) for r, _ in paired]
    ref_tokens = [tokenize(ref, target_lang) for _, ref in paired]
    corpus = corpus_bleu(cand_tokens, ref_tokens)
    per_record = [
        EvalRecord(
            record_id=record.id,
            bleu_sentence=sentence_bleu(cand, ref).score,
        )
        for (record, _), cand, ref in zip(paired, cand_tokens, ref_tokens)
    ]
    return corpus, per_record


def merge_eval_records(
    judged: Iterable[EvalRecord], bleu_scored: Iterable[EvalRecord]
) -> list[EvalRecord]:
    """Join judge and BLEU results by record id into single EvalRecords."""
    by_id: dict[str, EvalRecord] = {}
    for rec in judged:
        by_id[rec.record_id] = rec
    merged: list[EvalRecord] = []
    seen: set[str] = set()
    for rec in bleu_scored:
        seen.add(rec.record_id)
        if rec.record_id in by_id:
            merged.append(by_id[rec.record_id].merged_with(bleu_sentence=rec.bleu_sentence))
        else:
            merged.append(rec)
    for rec_id, rec in by_id.items():
        if rec_id not in seen:
            merged.append(rec)
    return merged
