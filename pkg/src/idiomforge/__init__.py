"""idiomforge: idiom knowledge bases, knowledge-guided translation, evaluation.

The package distills figurative meanings of idioms into a small JSONL
knowledge base, injects those meanings into translation prompts, and scores
the resulting translations with a rubric judge, an internal BLEU, and
correlation statistics against human annotations.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .core import (
    EvalRecord,
    IdiomForgeError,
    IdiomMatch,
    KBEntry,
    Language,
    LanguageError,
    PromptMode,
    PromptSpec,
    Provenance,
    TranslationRecord,
    ValidationError,
    known_languages,
    language_pair,
    parse_language,
    register_language,
)

__all__ = [
    "EvalRecord",
    "IdiomForgeError",
    "IdiomMatch",
    "KBEntry",
    "Language",
    "LanguageError",
    "PromptMode",
    "PromptSpec",
    "Provenance",
    "TranslationRecord",
    "ValidationError",
    "known_languages",
    "language_pair",
    "parse_language",
    "register_language",
    "__version__",
]
