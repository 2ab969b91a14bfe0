"""Regenerate every demo data file from one table of cases.

The fixture prompts are built with the same library calls the pipeline
makes, so the mock provider replays them exactly. Run from anywhere:

    python3 demo/make_fixtures.py
"""

from __future__ import annotations

from pathlib import Path

from idiomforge.core import parse_language
from idiomforge.distill import DistillConfig, build_meaning_prompt, default_exemplars, parse_meaning
from idiomforge.judge import JudgeConfig, build_judge_prompt
from idiomforge.jsonl import write_jsonl
from idiomforge.translate import TranslateConfig, build_translation_prompt
from idiomforge.core import PromptMode

HERE = Path(__file__).resolve().parent
ZH = parse_language("zh")
EN = parse_language("en")

DISTILL_MODEL = "distiller-1"
TRANSLATOR_MODEL = "translator-1"
JUDGE_MODEL = "judge-1"

# One row per demo record: the raw distill response exercises the parser
# (quotes, labels, chatter); the meaning column is what it must parse to.
CASES = [
    {
        "idiom": "一气呵成",
        "raw_meaning": '"to complete a task or work in one go, without stopping or taking a break"',
        "meaning": "to complete a task or work in one go, without stopping or taking a break",
        "sentence": "为使讨论一气呵成，我们会在本报告第381至396段回应这些关注。",
        "translation": "To keep the discussion flowing in one go, we will respond to these concerns in paragraphs 381 to 396 of this report.",
        "reference": "To keep the discussion flowing in one go, we will respond to these concerns in paragraphs 381 to 396 of this report.",
        "judge_response": "3",
        "human": (3, 3),
    },
    {
        "idiom": "半途而废",
        "raw_meaning": "to give up halfway before something is finished",
        "meaning": "to give up halfway before something is finished",
        "sentence": "学习外语最忌半途而废，坚持才能见效。",
        "translation": "Learning a foreign language, the worst thing is to give up halfway; only persistence pays off.",
        "reference": "When learning a foreign language, the worst mistake is giving up halfway; only persistence pays off.",
        "judge_response": "3",
        "human": (3, 3),
    },
    {
        "idiom": "雪中送炭",
        "raw_meaning": " to offer timely help to someone in difficulty\n\nNote: literally, sending charcoal in snow.",
        "meaning": "to offer timely help to someone in difficulty",
        "sentence": "这笔捐款对灾区来说无疑是雪中送炭。",
        "translation": "This donation is truly timely help for the disaster area.",
        "reference": "For the disaster area, this donation is exactly the timely help they needed.",
        "judge_response": "3",
        "human": (3, 2),
    },
    {
        "idiom": "井底之蛙",
        "raw_meaning": "a person with a narrow outlook who has seen little of the world",
        "meaning": "a person with a narrow outlook who has seen little of the world",
        "sentence": "不出去看看世界，你就永远是井底之蛙。",
        "translation": "If you never go out to see the world, you will always be a frog at the bottom of a well.",
        "reference": "If you never go out and see the world, you will forever remain a person with a narrow outlook.",
        "judge_response": "2",
        "human": (2, 2),
    },
    {
        "idiom": "对牛弹琴",
        "raw_meaning": "English meaning: to explain something to someone who cannot understand or appreciate it",
        "meaning": "to explain something to someone who cannot understand or appreciate it",
        "sentence": "跟他解释这些理论简直是对牛弹琴。",
        "translation": "Explaining these theories to him is like playing the lute to a cow.",
        "reference": "Explaining these theories to him is a complete waste of breath.",
        "judge_response": "2.",
        "human": (2, 2),
    },
    {
        "idiom": "杯弓蛇影",
        "raw_meaning": "to be frightened by mere shadows out of unfounded suspicion",
        "meaning": "to be frightened by mere shadows out of unfounded suspicion",
        "sentence": "他自从那次事故后就杯弓蛇影，不敢再开车了。",
        "translation": "Since the accident he sees a bow as a snake in his cup and dares not drive again.",
        "reference": "Since the accident he has been jumpy with unfounded fears and dares not drive again.",
        "judge_response": "1 point: only the literal image is translated.",
        "human": (1, 1),
    },
    {
        "idiom": "破釜沉舟",
        "raw_meaning": "to commit fully to a course of action with no thought of retreat",
        "meaning": "to commit fully to a course of action with no thought of retreat",
        "sentence": "公司决定破釜沉舟，把全部资金投入新产品。",
        "translation": "The company decided to burn its boats and put all its funds into the new product.",
        "reference": "The company decided to burn its boats and put all its funds into the new product.",
        "judge_response": "3",
        "human": (3, 3),
    },
    {
        "idiom": "愚公移山",
        "raw_meaning": "'to persevere at an enormous task until it is finally done'",
        "meaning": "to persevere at an enormous task until it is finally done",
        "sentence": "治理沙漠需要愚公移山的精神。",
        "translation": "Taming the desert takes the spirit of the foolish old man moving mountains.",
        "reference": "Taming the desert calls for dogged perseverance at an enormous task.",
        "judge_response": "2",
        "human": (2, 2),
    },
    {
        "idiom": "纸上谈兵",
        "raw_meaning": "to talk about theories on paper without any practical experience",
        "meaning": "to talk about theories on paper without any practical experience",
        "sentence": "没有实践经验，再多计划也只是纸上谈兵。",
        "translation": "Without hands-on experience, any number of plans is just talk on paper.",
        "reference": "Without practical experience, even the best plans are just empty talk on paper.",
        "judge_response": "2",
        "human": (2, 1),
    },
    {
        "idiom": "塞翁失马",
        "raw_meaning": "a setback may turn out to be a blessing in disguise",
        "meaning": "a setback may turn out to be a blessing in disguise",
        "sentence": "塞翁失马，焉知非福，失业后他反而找到了更好的方向。",
        "translation": "The old man lost his horse; how could he know it was not a blessing? After losing his job he found a better direction.",
        "reference": "A setback may prove a blessing in disguise: after losing his job he found a better path.",
        "judge_response": "1",
        "human": (1, 2),
    },
]


def distill_config() -> DistillConfig:
    return DistillConfig(
        meaning_lang=EN,
        model=DISTILL_MODEL,
        exemplars=default_exemplars(ZH, EN),
    )


def translate_config(mode: PromptMode) -> TranslateConfig:
    return TranslateConfig(
        source_lang=ZH,
        target_lang=EN,
        mode=mode,
        translator_model=TRANSLATOR_MODEL,
        meaning_source_model=DISTILL_MODEL if mode is PromptMode.KB_COT else None,
    )


def main() -> None:
    dconfig = distill_config()
    kb_cot = translate_config(PromptMode.KB_COT)
    direct = translate_config(PromptMode.DIRECT)
    jconfig = JudgeConfig(judge_model=JUDGE_MODEL)

    fixtures = []
    sentences = []
    references = []
    annotations = []
    for i, case in enumerate(CASES, start=1):
        rid = f"s{i}"
        # the raw response must parse to the meaning the KB will serve
        assert parse_meaning(case["raw_meaning"], dconfig) == case["meaning"], case["idiom"]

        meaning_prompt = build_meaning_prompt(case["idiom"], ZH, dconfig)
        fixtures.append({"prompt": meaning_prompt.text, "text": case["raw_meaning"]})

        kb_prompt = build_translation_prompt(
            case["sentence"], case["idiom"], case["meaning"], kb_cot
        )
        fixtures.append({"prompt": kb_prompt.text, "text": case["translation"]})
        direct_prompt = build_translation_prompt(case["sentence"], case["idiom"], None, direct)
        fixtures.append({"prompt": direct_prompt.text, "text": case["translation"]})

        judge_prompt = build_judge_prompt(
            case["sentence"], case["idiom"], case["translation"], ZH, EN, jconfig
        )
        fixtures.append({"prompt": judge_prompt.text, "text": case["judge_response"]})

        sentences.append(
            {"id": rid, "source_text": case["sentence"], "idiom": case["idiom"]}
        )
        references.append({"id": rid, "reference": case["reference"]})
        for annotator, score in zip("ab", case["human"]):
            annotations.append(
                {"record_id": rid, "human_score": score, "annotator": annotator}
            )

    (HERE / "idioms_zh.txt").write_text(
        "".join(case["idiom"] + "\n" for case in CASES), encoding="utf-8"
    )
    write_jsonl(HERE / "sentences.jsonl", sentences)
    write_jsonl(HERE / "references.jsonl", references)
    write_jsonl(HERE / "annotations.jsonl", annotations)
    count = write_jsonl(HERE / "fixtures.jsonl", fixtures)
    print(f"wrote {count} fixtures and {len(CASES)} demo records under {HERE}")


if __name__ == "__main__":
    main()
