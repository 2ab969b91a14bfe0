"""Line-oriented JSON helpers.

All persisted artifacts are JSONL: one UTF-8 JSON object per line, keys
sorted, no ASCII escaping, LF line endings. Writing the same objects twice
yields byte-identical files, which the caching and rerun guarantees rely on.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, TypeVar

from .core import IdiomForgeError

T = TypeVar("T")


class JsonlError(IdiomForgeError):
    """Malformed JSONL input; message names the file and 1-based line."""


def dumps(obj: Any) -> str:
    """Canonical single-line JSON: sorted keys, compact separators, raw UTF-8."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))


def write_jsonl(path: str | Path, objects: Iterable[Any]) -> int:
    """Write one object per line; returns the number of lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for obj in objects:
            handle.write(dumps(obj))
            handle.write("\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, object) pairs; blank lines are skipped.

    Raises JsonlError on unparseable lines or non-object values, naming the
    offending line so batch inputs can be fixed in place.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise JsonlError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise JsonlError(f"{path}:{lineno}: expected a JSON object, got {type(obj).__name__}")
            yield lineno, obj


def load_records(path: str | Path, decode: Callable[[dict[str, Any]], T]) -> list[T]:
    """Decode every line of a JSONL file, wrapping decode failures with context."""
    records: list[T] = []
    for lineno, obj in read_jsonl(path):
        try:
            records.append(decode(obj))
        except JsonlError:
            raise
        except (KeyError, TypeError, ValueError, IdiomForgeError) as exc:
            detail = str(exc) or type(exc).__name__
            raise JsonlError(f"{path}:{lineno}: {detail}") from None
    return records
