"""Meaning distillation: prompt layout, response parsing, batch idempotence."""

from __future__ import annotations

from datetime import datetime, timezone

import pytest

from idiomforge.core import parse_language
from idiomforge.distill import (
    DistillConfig,
    DistillError,
    Exemplar,
    build_meaning_prompt,
    default_exemplars,
    distill_batch,
    load_exemplars,
    parse_meaning,
)
from idiomforge.ingest import IdiomSet
from idiomforge.kbstore import KnowledgeBase
from idiomforge.provider import MockProvider, prompt_digest

EN = parse_language("en")
ZH = parse_language("zh")
TS = datetime(2024, 1, 1, tzinfo=timezone.utc)

TABLE2_MEANING = "to complete a task or work in one go, without stopping or taking a break"


def zh_en_config(**overrides):
    base = dict(
        meaning_lang=EN,
        model="distiller",
        exemplars=default_exemplars(ZH, EN),
    )
    base.update(overrides)
    return DistillConfig(**base)


# -- prompt layout ------------------------------------------------------------

def test_single_exemplar_prompt_matches_published_layout():
    one = Exemplar(
        idiom="明目张胆",
        meaning="straightforwardly, without any concealment",
        idiom_lang=ZH,
        meaning_lang=EN,
    )
    spec = build_meaning_prompt("一气呵成", ZH, zh_en_config(exemplars=(one,)))
    assert spec.text == (
        "Given a Chinese idiom, please write the idiom's figurative English meaning. "
        "Please note: Idiom always expresses figurative meaning which is different "
        "from literal meaning of its constituent words.\n"
        "Case 1:\n"
        "Chinese idiom: 明目张胆\n"
        "English meaning: straightforwardly, without any concealment\n"
        "Case 2:\n"
        "Chinese idiom: 一气呵成\n"
        "English meaning:"
    )


def test_four_exemplars_number_cases_one_to_five():
    spec = build_meaning_prompt("一气呵成", ZH, zh_en_config())
    for n in range(1, 6):
        assert f"Case {n}:" in spec.text
    assert "Case 6:" not in spec.text
    assert spec.text.splitlines()[-1] == "English meaning:"
    assert spec.temperature == 0.7


def test_zero_shot_prompt_is_instruction_plus_test_case():
    spec = build_meaning_prompt("一气呵成", ZH, zh_en_config(exemplars=(), zero_shot=True))
    assert "Case 1:\nChinese idiom: 一气呵成" in spec.text
    assert spec.text.count("Case") == 1


def test_zero_exemplars_without_zero_shot_is_an_error():
    with pytest.raises(DistillError, match="zero exemplars"):
        build_meaning_prompt("一气呵成", ZH, zh_en_config(exemplars=()))


def test_exemplar_language_pair_must_match():
    mismatched = Exemplar(idiom="朝飯前", meaning="very easy", idiom_lang=parse_language("ja"), meaning_lang=EN)
    with pytest.raises(DistillError, match="ja-en"):
        build_meaning_prompt("一气呵成", ZH, zh_en_config(exemplars=(mismatched,)))


def test_prompt_is_pure():
    cfg = zh_en_config()
    assert build_meaning_prompt("一气呵成", ZH, cfg).text == build_meaning_prompt("一气呵成", ZH, cfg).text


def test_meaning_lang_parameterizes_labels():
    cfg = zh_en_config(meaning_lang=ZH, exemplars=default_exemplars(ZH, ZH))
    spec = build_meaning_prompt("一气呵成", ZH, cfg)
    assert "figurative Chinese meaning" in spec.text
    assert spec.text.splitlines()[-1] == "Chinese meaning:"


# -- parse_meaning ---------------------------------------------------------------

def test_parse_plain_meaning_is_identity():
    assert parse_meaning(TABLE2_MEANING, zh_en_config()) == TABLE2_MEANING


def test_parse_strips_label_quotes_and_chatter():
    raw = 'English meaning: "X"\n\nextra chatter'
    assert parse_meaning(raw, zh_en_config()) == "X"


def test_parse_uses_last_label_occurrence():
    raw = "English meaning: wrong\nEnglish meaning: right answer"
    assert parse_meaning(raw, zh_en_config()) == "right answer"


def test_parse_empty_is_an_error():
    with pytest.raises(DistillError, match="empty meaning"):
        parse_meaning("", zh_en_config())
    with pytest.raises(DistillError, match="empty meaning"):
        parse_meaning('English meaning: ""', zh_en_config())


def test_parse_overlong_is_an_error():
    with pytest.raises(DistillError, match="meaning too long"):
        parse_meaning("x" * 300, zh_en_config())


def test_parse_handles_cjk_quotes():
    assert parse_meaning("「朝飯前」", zh_en_config()) == "朝飯前"
    assert parse_meaning("“毫无顾忌”", zh_en_config()) == "毫无顾忌"


def test_parse_meaning_after_label_on_next_line():
    raw = "English meaning:\nto act openly\n\nmore text"
    assert parse_meaning(raw, zh_en_config()) == "to act openly"


# -- exemplar files ---------------------------------------------------------------

def test_packaged_zh_en_exemplars_include_published_case():
    exemplars = default_exemplars(ZH, EN)
    assert len(exemplars) == 4
    assert exemplars[0].idiom == "明目张胆"
    assert exemplars[0].meaning == "straightforwardly, without any concealment"


def test_missing_pair_names_the_pair():
    with pytest.raises(DistillError, match="ja-ja"):
        default_exemplars(parse_language("ja"), parse_language("ja"))


def test_load_exemplars_from_file(tmp_path):
    path = tmp_path / "ex.jsonl"
    path.write_text(
        '{"idiom": "x", "idiom_lang": "en", "meaning": "m", "meaning_lang": "en"}\n',
        encoding="utf-8",
    )
    got = load_exemplars(path)
    assert got == (Exemplar(idiom="x", meaning="m", idiom_lang=EN, meaning_lang=EN),)


# -- distill_batch -----------------------------------------------------------------

def idiom_set(*idioms):
    s = IdiomSet(lang=ZH)
    for idiom in idioms:
        s.add(idiom, "test")
    return s


def fixture_provider(config, idioms_to_meanings):
    fixtures = {
        prompt_digest(build_meaning_prompt(idiom, ZH, config).text): meaning
        for idiom, meaning in idioms_to_meanings.items()
    }
    return MockProvider(fixtures)


def test_batch_happy_path_then_noop_rerun():
    cfg = zh_en_config()
    idioms = idiom_set("一气呵成", "寅吃卯粮", "缘木求鱼")
    provider = fixture_provider(
        cfg,
        {
            "一气呵成": TABLE2_MEANING,
            "寅吃卯粮": "to live on future resources, borrowing against tomorrow",
            "缘木求鱼": "to pursue a goal by hopeless means",
        },
    )
    kb = KnowledgeBase()
    report = distill_batch(idioms, cfg, provider, kb, created_at=TS)
    assert (report.generated, report.skipped_existing, report.failed) == (3, 0, 0)
    assert len(kb) == 3
    assert kb.lookup("一气呵成", ZH, EN).meaning == TABLE2_MEANING

    before = list(kb)
    rerun = distill_batch(idioms, cfg, provider, kb, created_at=TS)
    assert (rerun.generated, rerun.skipped_existing, rerun.failed) == (0, 3, 0)
    assert list(kb) == before


def test_batch_records_failures_and_continues():
    cfg = zh_en_config()
    idioms = idiom_set("一气呵成", "无中生有")
    provider = fixture_provider(cfg, {"一气呵成": TABLE2_MEANING})  # second idiom missing
    kb = KnowledgeBase()
    report = distill_batch(idioms, cfg, provider, kb, created_at=TS)
    assert (report.generated, report.failed) == (1, 1)
    assert len(kb) == 1
    (failure,) = report.failures
    assert failure[0] == "无中生有"
    assert "no fixture" in failure[1]


def test_batch_refresh_regenerates():
    cfg = zh_en_config()
    idioms = idiom_set("一气呵成")
    provider = fixture_provider(cfg, {"一气呵成": "a fresher meaning"})
    kb = KnowledgeBase()
    distill_batch(idioms, cfg, provider, kb, created_at=TS)
    report = distill_batch(idioms, cfg.with_exemplars(cfg.exemplars), provider, kb, created_at=TS)
    assert report.skipped_existing == 1

    refreshed = distill_batch(
        idioms, DistillConfig(
            meaning_lang=EN, model="distiller", exemplars=cfg.exemplars, refresh=True
        ), provider, kb, created_at=TS,
    )
    assert refreshed.generated == 1
    assert len(kb) == 1


def test_batch_report_is_sorted_by_idiom():
    cfg = zh_en_config()
    idioms = idiom_set("缘木求鱼", "一气呵成")
    provider = MockProvider({})  # strict, everything misses
    report = distill_batch(idioms, cfg, provider, KnowledgeBase(), created_at=TS)
    assert [idiom for idiom, _ in report.failures] == sorted(["缘木求鱼", "一气呵成"])
