"""Judging and BLEU: rubric prompt, score domain, tokenizer, metric math."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idiomforge.core import EvalRecord, PromptMode, TranslationRecord, parse_language
from idiomforge.judge import (
    BleuError,
    JudgeConfig,
    JudgeError,
    JudgeShot,
    bleu_for_records,
    build_judge_prompt,
    corpus_bleu,
    indefinite_article,
    judge_batch,
    merge_eval_records,
    parse_score,
    sentence_bleu,
    tokenize,
)
from idiomforge.provider import MockProvider, prompt_digest

EN = parse_language("en")
ZH = parse_language("zh")
JA = parse_language("ja")


def judge_config(**overrides):
    base = dict(judge_model="judge-model")
    base.update(overrides)
    return JudgeConfig(**base)


def en_zh_record(rid="r1", translation="为了让讨论一气呵成，我们在381至396段回应。"):
    return TranslationRecord(
        id=rid,
        source_lang=EN,
        target_lang=ZH,
        source_text="To keep the discussion flowing in one go, we respond in paragraphs 381-396.",
        idiom="in one go",
        mode=PromptMode.DIRECT,
        translation=translation,
        translator_model="translator",
    )


# -- judge prompt ------------------------------------------------------------

def test_judge_prompt_full_layout_en_to_zh():
    spec = build_judge_prompt(
        "He decided to bite the bullet.",
        "bite the bullet",
        "他决定硬着头皮上。",
        EN,
        ZH,
        judge_config(),
    )
    assert spec.text == (
        "Evaluate the idiom translation in the given Chinese translation of an English "
        "sentence. Focus on the idiom's figurative meaning.\n"
        "1 point: Ignores, mistranslates, or only translates the literal meaning of the idiom.\n"
        "2 points: Conveys basic figurative meaning but may lack refinement or have minor "
        "imperfections.\n"
        "3 points: Exceptional translation, accurately conveying figurative meaning, context, "
        "and cultural nuances.\n"
        "Evaluate the following translation:\n"
        "English sentence: He decided to bite the bullet.\n"
        "Idiom in the English sentence: bite the bullet\n"
        "Chinese translation: 他决定硬着头皮上。\n"
        "Evaluation (score only):"
    )
    assert spec.mode is PromptMode.JUDGE
    assert spec.temperature == 0.1
    assert spec.max_tokens == 8


def test_language_swap_changes_only_names():
    en_zh = build_judge_prompt("s", "i", "t", EN, ZH, judge_config()).text
    ja_en = build_judge_prompt("s", "i", "t", JA, EN, judge_config()).text
    assert "a Japanese sentence" in ja_en
    assert "English translation" in ja_en
    assert en_zh.replace("Chinese", "English").replace("an English", "a Japanese").replace(
        "the English", "the Japanese"
    ).replace("English sentence", "Japanese sentence") != ""  # structural smoke check
    assert en_zh.count("\n") == ja_en.count("\n")


def test_indefinite_article():
    assert indefinite_article("English") == "an"
    assert indefinite_article("Chinese") == "a"
    assert indefinite_article("Italian") == "an"


def test_few_shot_blocks_render_before_test_data():
    shot = JudgeShot(
        source_text="Spill the beans already.",
        idiom="spill the beans",
        translation="快把秘密说出来吧。",
        score=3,
    )
    spec = build_judge_prompt("s", "i", "t", EN, ZH, judge_config(shots=1, shot_pool=(shot,)))
    assert "Evaluation (score only): 3\n" in spec.text
    assert spec.text.index("Spill the beans") < spec.text.index("English sentence: s")


def test_shots_beyond_pool_rejected():
    with pytest.raises(JudgeError, match="shots=2"):
        judge_config(shots=2, shot_pool=())


def test_empty_fields_rejected():
    with pytest.raises(JudgeError, match="non-empty"):
        build_judge_prompt("", "i", "t", EN, ZH, judge_config())


# -- parse_score ---------------------------------------------------------------

def test_parse_score_bare_and_labeled():
    assert parse_score("3") == 3
    assert parse_score("Evaluation (score only): 2") == 2
    assert parse_score("Score: 1 because the idiom is ignored") == 1


def test_parse_score_out_of_range():
    with pytest.raises(JudgeError, match="score out of range"):
        parse_score("score: 5")
    with pytest.raises(JudgeError, match="score out of range"):
        parse_score("0")


def test_parse_score_unparseable():
    for text in ("fine work", "", "two points", "v2 engine", "2.5"):
        with pytest.raises(JudgeError, match="unparseable score"):
            parse_score(text)


def test_parse_score_ignores_glued_digits():
    assert parse_score("item12 scored 2") == 2


@settings(max_examples=300)
@given(st.text(max_size=60))
def test_parse_score_domain_is_closed(text):
    try:
        score = parse_score(text)
    except JudgeError:
        return
    assert score in (1, 2, 3)


# -- judge_batch ------------------------------------------------------------------

def batch_provider(config, records_to_texts):
    fixtures = {}
    for record, text in records_to_texts:
        spec = build_judge_prompt(
            record.source_text, record.idiom, record.translation,
            record.source_lang, record.target_lang, config,
        )
        fixtures[prompt_digest(spec.text)] = text
    return MockProvider(fixtures)


def test_judge_batch_scores_in_order():
    cfg = judge_config()
    records = [en_zh_record(rid=f"r{i}", translation=f"译文{i}。") for i in range(3)]
    provider = batch_provider(cfg, zip(records, ["1", "2", "3"]))
    evals = judge_batch(records, cfg, provider)
    assert [e.record_id for e in evals] == ["r0", "r1", "r2"]
    assert [e.judge_score for e in evals] == [1, 2, 3]


def test_judge_batch_records_errors_and_completes():
    cfg = judge_config()
    records = [en_zh_record(rid="ok"), en_zh_record(rid="bad", translation="另一个译文。")]
    provider = batch_provider(cfg, [(records[0], "2"), (records[1], "fine work")])
    evals = judge_batch(records, cfg, provider)
    assert evals[0].judge_score == 2
    assert evals[1].judge_score is None
    assert "unparseable" in evals[1].judge_error


def test_judge_batch_mean_matches_hand_sum():
    cfg = judge_config()
    records = [en_zh_record(rid=f"r{i}", translation=f"译文{i}。") for i in range(6)]
    texts = ["1", "2", "3", "3", "2", "1"]
    provider = batch_provider(cfg, zip(records, texts))
    evals = judge_batch(records, cfg, provider)
    scores = [e.judge_score for e in evals]
    assert sum(scores) / len(scores) == (1 + 2 + 3 + 3 + 2 + 1) / 6


# -- tokenize ----------------------------------------------------------------------

def test_tokenize_english_lowercases_and_splits_punct():
    assert tokenize("Hello, world", EN) == ["hello", ",", "world"]


def test_tokenize_cjk_per_scalar():
    assert tokenize("一气呵成", ZH) == ["一", "气", "呵", "成"]
    assert tokenize("一气 呵成\n", ZH) == ["一", "气", "呵", "成"]


def test_tokenize_empty():
    assert tokenize("", EN) == []
    assert tokenize("   ", ZH) == []


def test_tokenize_english_multiple_punct():
    assert tokenize("Don't stop; go!", EN) == ["don", "'", "t", "stop", ";", "go", "!"]


@settings(max_examples=200)
@given(st.text(alphabet=st.characters(codec="utf-8"), max_size=40))
def test_cjk_tokens_reconstruct_input_minus_whitespace(text):
    tokens = tokenize(text, ZH)
    expected = "".join(c for c in text if not c.isspace())
    assert "".join(tokens) == expected


# -- BLEU ---------------------------------------------------------------------------

def test_identity_corpus_scores_exactly_100():
    tokens = tokenize("to complete a task or work in one go", EN)
    result = corpus_bleu([tokens], [tokens])
    assert result.score == 100.0
    assert result.precisions == (1.0, 1.0, 1.0, 1.0)
    assert result.brevity_penalty == 1.0


def test_disjoint_vocabulary_scores_zero():
    result = corpus_bleu([["a", "b", "c", "d"]], [["w", "x", "y", "z"]])
    assert result.score == 0.0


def test_cat_mat_hand_example():
    candidate = ["the", "cat", "sat", "on", "the", "mat"]
    reference = ["the", "cat", "is", "on", "the", "mat"]
    result = corpus_bleu([candidate], [reference])
    assert result.precisions[0] == pytest.approx(5 / 6, abs=1e-12)
    assert result.precisions[1] == pytest.approx(3 / 5, abs=1e-12)
    assert result.precisions[2] == pytest.approx(1 / 4, abs=1e-12)
    # raw 0/3 four-grams, smoothed to 1/(2*3)
    assert result.precisions[3] == pytest.approx(1 / 6, abs=1e-12)
    assert result.brevity_penalty == 1.0
    # Independent formula evaluation.
    expected = 100.0 * ((5 / 6) * (3 / 5) * (1 / 4) * (1 / 6)) ** 0.25
    assert result.score == pytest.approx(expected, abs=1e-6)


def test_brevity_penalty_applies_when_short():
    candidate = ["the", "cat", "sat", "on"]
    reference = ["the", "cat", "sat", "on", "the", "mat"]
    result = corpus_bleu([candidate], [reference])
    assert result.brevity_penalty == pytest.approx(math.exp(1 - 6 / 4), abs=1e-12)
    assert result.brevity_penalty < 1.0


def test_empty_candidate_contributes_zero_not_error():
    result = corpus_bleu([[], ["the", "cat", "sat", "on"]], [["x"], ["the", "cat", "sat", "on"]])
    assert 0.0 <= result.score <= 100.0


def test_empty_corpus_is_error():
    with pytest.raises(BleuError, match="empty candidate corpus"):
        corpus_bleu([], [])


def test_length_mismatch_is_error():
    with pytest.raises(BleuError, match="mismatch"):
        corpus_bleu([["a"]], [])


def test_bleu_bounds_over_randomized_corpora():
    rng = random.Random(41)
    vocab = [f"w{i}" for i in range(30)]
    for _ in range(500):
        pairs = rng.randint(1, 5)
        cands = [[rng.choice(vocab) for _ in range(rng.randint(0, 12))] for _ in range(pairs)]
        refs = [[rng.choice(vocab) for _ in range(rng.randint(1, 12))] for _ in range(pairs)]
        result = corpus_bleu(cands, refs)
        assert 0.0 <= result.score <= 100.0
        assert 0.0 <= result.brevity_penalty <= 1.0


def test_sentence_bleu_is_single_pair_corpus():
    cand = ["the", "cat", "sat", "on", "the", "mat"]
    ref = ["the", "cat", "is", "on", "the", "mat"]
    assert sentence_bleu(cand, ref) == corpus_bleu([cand], [ref])


def test_bleu_for_records_pairs_by_id():
    records = [
        en_zh_record(rid="r1", translation="译文一气呵成。"),
        en_zh_record(rid="r2", translation="另一个译文。"),
        en_zh_record(rid="orphan", translation="没有参考。"),
    ]
    refs = {"r1": "译文一气呵成。", "r2": "完全不同的句子和词。"}
    corpus, per_record = bleu_for_records(records, refs, ZH)
    assert [e.record_id for e in per_record] == ["r1", "r2"]
    assert per_record[0].bleu_sentence == 100.0
    assert 0.0 <= corpus.score <= 100.0
    assert corpus.to_dict()["metric"] == "bleu4-internal"


def test_bleu_for_records_without_any_refs_is_error():
    with pytest.raises(BleuError, match="no records have references"):
        bleu_for_records([en_zh_record()], {}, ZH)


def test_merge_eval_records_joins_by_id():
    judged = [
        EvalRecord(record_id="r1", judge_score=3),
        EvalRecord(record_id="r2", judge_error="unparseable score"),
        EvalRecord(record_id="r3", judge_score=1),
    ]
    blue = [
        EvalRecord(record_id="r1", bleu_sentence=50.0),
        EvalRecord(record_id="r2", bleu_sentence=10.0),
    ]
    merged = {e.record_id: e for e in merge_eval_records(judged, blue)}
    assert merged["r1"].judge_score == 3 and merged["r1"].bleu_sentence == 50.0
    assert merged["r2"].judge_error and merged["r2"].bleu_sentence == 10.0
    assert merged["r3"].judge_score == 1 and merged["r3"].bleu_sentence is None
