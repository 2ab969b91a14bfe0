"""Prompt template loading and strict rendering.

Templates are plain text files with ``{name}`` placeholders, keyed by
(kind, prompt language) as ``<kind>.<lang>.txt``. Packaged defaults can be
overridden per file by pointing a directory at the loader; files absent from
the override directory fall back to the packaged ones.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..core import IdiomForgeError, Language

_PACKAGE = "idiomforge.templates"
_FORMATTER = string.Formatter()


class TemplateError(IdiomForgeError):
    """Missing template file, bad placeholder syntax, or unfilled placeholder."""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    def placeholders(self) -> frozenset[str]:
        try:
            fields = [f for _, f, _, _ in _FORMATTER.parse(self.text)]
        except ValueError as exc:
            raise TemplateError(f"{self.name}: malformed placeholder syntax ({exc})") from None
        if any(f == "" for f in fields):
            raise TemplateError(f"{self.name}: positional placeholders are not allowed")
        return frozenset(f for f in fields if f)

    def render(self, **values: str) -> str:
        missing = self.placeholders() - values.keys()
        if missing:
            raise TemplateError(
                f"{self.name}: missing placeholder {', '.join(sorted(missing))!s}"
            )
        return self.text.format(**values)


def template_filename(kind: str, prompt_lang: Language | str) -> str:
    code = prompt_lang.code if isinstance(prompt_lang, Language) else prompt_lang
    return f"{kind}.{code}.txt"


def load_template(
    kind: str, prompt_lang: Language | str, override_dir: str | Path | None = None
) -> PromptTemplate:
    """Load a template by kind and prompt language.

    The trailing newline is stripped so rendered prompts end exactly at the
    open label line the model is meant to continue.
    """
    filename = template_filename(kind, prompt_lang)
    if override_dir is not None:
        candidate = Path(override_dir) / filename
        if candidate.is_file():
            return PromptTemplate(name=filename, text=candidate.read_text(encoding="utf-8").rstrip("\n"))
    resource = resources.files(_PACKAGE).joinpath(filename)
    try:
        text = resource.read_text(encoding="utf-8")
    except FileNotFoundError:
        available = sorted(
            entry.name for entry in resources.files(_PACKAGE).iterdir()
            if entry.name.endswith(".txt")
        )
        raise TemplateError(
            f"no template {filename!r} (packaged: {', '.join(available)})"
        ) from None
    return PromptTemplate(name=filename, text=text.rstrip("\n"))
