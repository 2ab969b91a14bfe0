"""Domain type invariants and wire-format round trips."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from idiomforge.core import (
    EvalRecord,
    IdiomMatch,
    KBEntry,
    LanguageError,
    PromptMode,
    PromptSpec,
    Provenance,
    TranslationRecord,
    ValidationError,
    format_utc,
    known_languages,
    language_pair,
    parse_language,
    parse_utc,
    register_language,
)

UTC = timezone.utc


def make_entry(**overrides):
    base = dict(
        idiom="一气呵成",
        idiom_lang=parse_language("zh"),
        meaning_lang=parse_language("en"),
        meaning="to complete a task or work in one go, without stopping or taking a break",
        source_model="gpt-3.5-turbo",
        created_at=datetime(2024, 1, 1, tzinfo=UTC),
    )
    base.update(overrides)
    return KBEntry(**base)


# -- languages --------------------------------------------------------------

def test_parse_language_is_case_insensitive():
    assert parse_language("EN") is parse_language("en")
    assert parse_language(" Zh ").code == "zh"


def test_parse_language_rejects_unknown_code():
    with pytest.raises(LanguageError, match="unknown language code"):
        parse_language("tlh")


def test_builtin_display_names():
    zh = parse_language("zh")
    assert zh.name_in("en") == "Chinese"
    assert zh.name_in("zh") == "中文"
    assert zh.name_in("ja") == "中国語"
    assert parse_language("en").name_in(parse_language("en")) == "English"


def test_display_name_falls_back_to_english():
    ko = register_language("ko", {"en": "Korean"}, space_delimited=False)
    assert ko.name_in("zh") == "Korean"


def test_reregistering_same_language_is_idempotent():
    before = len(known_languages())
    register_language("en", {"en": "English", "zh": "英文", "ja": "英語"}, space_delimited=True)
    assert len(known_languages()) == before


def test_reregistering_with_different_attributes_fails():
    with pytest.raises(LanguageError, match="already registered"):
        register_language("en", {"en": "English"}, space_delimited=False)


def test_register_rejects_non_alpha_codes():
    with pytest.raises(LanguageError, match="invalid language code"):
        register_language("e n", {"en": "Broken"}, space_delimited=True)


def test_language_pair_key():
    assert language_pair(parse_language("zh"), parse_language("en")) == "zh-en"


# -- timestamps --------------------------------------------------------------

def test_format_utc_uses_z_suffix():
    assert format_utc(datetime(2024, 1, 1, 12, 30, tzinfo=UTC)) == "2024-01-01T12:30:00Z"


def test_parse_utc_roundtrip():
    ts = datetime(2023, 7, 15, 8, 9, 10, tzinfo=UTC)
    assert parse_utc(format_utc(ts)) == ts


def test_parse_utc_rejects_naive():
    with pytest.raises(ValidationError, match="timezone"):
        parse_utc("2024-01-01T00:00:00")


def test_format_utc_rejects_naive():
    with pytest.raises(ValidationError):
        format_utc(datetime(2024, 1, 1))


# -- KBEntry -----------------------------------------------------------------

def test_kb_entry_roundtrip():
    entry = make_entry()
    assert KBEntry.from_dict(entry.to_dict()) == entry


def test_kb_entry_wire_form_uses_codes_and_rfc3339():
    data = make_entry().to_dict()
    assert data["idiom_lang"] == "zh"
    assert data["created_at"] == "2024-01-01T00:00:00Z"


def test_kb_entry_rejects_empty_fields():
    for field in ("idiom", "meaning", "source_model"):
        with pytest.raises(ValidationError, match="non-empty"):
            make_entry(**{field: ""})


def test_kb_entry_rejects_multiline_meaning():
    with pytest.raises(ValidationError, match="single logical line"):
        make_entry(meaning="first\nsecond")


def test_kb_entry_rejects_non_nfc_idiom():
    decomposed = "éclat"  # e + combining acute, not NFC
    with pytest.raises(ValidationError, match="NFC"):
        make_entry(idiom=decomposed, idiom_lang=parse_language("en"))


def test_kb_entry_rejects_naive_timestamp():
    with pytest.raises(ValidationError, match="timezone-aware"):
        make_entry(created_at=datetime(2024, 1, 1))


def test_kb_entry_key_identity():
    assert make_entry().key == ("一气呵成", "zh", "en", "gpt-3.5-turbo")


# -- IdiomMatch ----------------------------------------------------------------

def test_idiom_match_span_semantics():
    m = IdiomMatch(idiom="一气呵成", start=4, end=8, provenance=Provenance.DETECTED)
    assert m.length == 4
    assert IdiomMatch.from_dict(m.to_dict()) == m


def test_idiom_match_rejects_bad_spans():
    with pytest.raises(ValidationError):
        IdiomMatch(idiom="x", start=3, end=3, provenance=Provenance.GOLD)
    with pytest.raises(ValidationError):
        IdiomMatch(idiom="x", start=-1, end=2, provenance=Provenance.GOLD)


# -- PromptSpec ----------------------------------------------------------------

def test_prompt_spec_defaults():
    spec = PromptSpec(text="Translate.", mode=PromptMode.DIRECT, prompt_lang=parse_language("en"))
    assert spec.temperature == 0.7
    assert spec.max_tokens == 256


def test_direct_prompt_carries_no_meaning_lang():
    with pytest.raises(ValidationError, match="no meaning language"):
        PromptSpec(
            text="Translate.",
            mode=PromptMode.DIRECT,
            prompt_lang=parse_language("en"),
            meaning_lang=parse_language("en"),
        )


def test_prompt_spec_temperature_bounds():
    with pytest.raises(ValidationError, match="temperature"):
        PromptSpec(
            text="x", mode=PromptMode.JUDGE, prompt_lang=parse_language("en"), temperature=2.5
        )


def test_prompt_mode_parse():
    assert PromptMode.parse("kb-cot") is PromptMode.KB_COT
    with pytest.raises(ValidationError, match="unknown prompt mode"):
        PromptMode.parse("cot")


# -- TranslationRecord ----------------------------------------------------------

def make_record(**overrides):
    base = dict(
        id="r1",
        source_lang=parse_language("zh"),
        target_lang=parse_language("en"),
        source_text="为使讨论一气呵成，我们会在本报告第381至396段回应这些关注。",
        idiom="一气呵成",
        mode=PromptMode.KB_COT,
        translation="To keep the discussion in one continuous flow, we respond in paragraphs 381 to 396.",
        translator_model="gpt-4",
        meaning_used="to complete a task or work in one go, without stopping or taking a break",
        meaning_source_model="gpt-3.5-turbo",
    )
    base.update(overrides)
    return TranslationRecord(**base)


def test_translation_record_roundtrip():
    rec = make_record()
    assert TranslationRecord.from_dict(rec.to_dict()) == rec


def test_direct_record_omits_meaning_keys():
    rec = make_record(mode=PromptMode.DIRECT, meaning_used=None, meaning_source_model=None)
    data = rec.to_dict()
    assert "meaning_used" not in data
    assert "meaning_source_model" not in data
    assert TranslationRecord.from_dict(data) == rec


def test_direct_record_rejects_meaning():
    with pytest.raises(ValidationError, match="no meaning"):
        make_record(mode=PromptMode.DIRECT)


def test_kb_cot_record_requires_meaning():
    with pytest.raises(ValidationError, match="must carry the meaning"):
        make_record(meaning_used=None)


# -- EvalRecord -----------------------------------------------------------------

def test_eval_record_roundtrip_sparse():
    rec = EvalRecord(record_id="r1", judge_score=3, bleu_sentence=41.5)
    data = rec.to_dict()
    assert "human_score" not in data and "judge_error" not in data
    assert EvalRecord.from_dict(data) == rec


def test_eval_record_score_scale():
    for bad in (0, 4, -1):
        with pytest.raises(ValidationError, match="outside"):
            EvalRecord(record_id="r1", judge_score=bad)
        with pytest.raises(ValidationError, match="outside"):
            EvalRecord(record_id="r1", human_score=bad)


def test_eval_record_bleu_bounds():
    with pytest.raises(ValidationError, match="bleu_sentence"):
        EvalRecord(record_id="r1", bleu_sentence=100.5)


def test_eval_record_error_excludes_score():
    rec = EvalRecord(record_id="r1", judge_error="unparseable score")
    assert rec.judge_score is None
    with pytest.raises(ValidationError, match="not both"):
        EvalRecord(record_id="r1", judge_score=2, judge_error="unparseable score")


def test_eval_record_merged_with():
    rec = EvalRecord(record_id="r1", judge_score=2)
    merged = rec.merged_with(bleu_sentence=12.5)
    assert merged.judge_score == 2 and merged.bleu_sentence == 12.5
    assert rec.bleu_sentence is None
