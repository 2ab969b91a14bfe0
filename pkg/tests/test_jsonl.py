"""JSONL read/write behavior: determinism, error context, round trips."""

from __future__ import annotations

import pytest

from idiomforge.jsonl import JsonlError, dumps, load_records, read_jsonl, write_jsonl


def test_write_then_read_roundtrip(tmp_path):
    objs = [{"b": 2, "a": 1}, {"text": "一气呵成"}]
    path = tmp_path / "out.jsonl"
    assert write_jsonl(path, objs) == 2
    assert [obj for _, obj in read_jsonl(path)] == objs


def test_writes_are_byte_identical(tmp_path):
    objs = [{"z": [1, 2], "a": "x"}] * 3
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_jsonl(p1, objs)
    write_jsonl(p2, objs)
    assert p1.read_bytes() == p2.read_bytes()


def test_dumps_sorts_keys_and_keeps_utf8():
    line = dumps({"b": "明目张胆", "a": 1})
    assert line.index('"a"') < line.index('"b"')
    assert "明目张胆" in line
    assert "\\u" not in line


def test_read_skips_blank_lines(tmp_path):
    path = tmp_path / "in.jsonl"
    path.write_text('{"a": 1}\n\n   \n{"a": 2}\n', encoding="utf-8")
    assert [lineno for lineno, _ in read_jsonl(path)] == [1, 4]


def test_read_reports_line_number_on_bad_json(tmp_path):
    path = tmp_path / "in.jsonl"
    path.write_text('{"a": 1}\nnot json\n', encoding="utf-8")
    with pytest.raises(JsonlError, match=r"in\.jsonl:2"):
        list(read_jsonl(path))


def test_read_rejects_non_objects(tmp_path):
    path = tmp_path / "in.jsonl"
    path.write_text("[1, 2]\n", encoding="utf-8")
    with pytest.raises(JsonlError, match="expected a JSON object"):
        list(read_jsonl(path))


def test_load_records_wraps_decode_errors(tmp_path):
    path = tmp_path / "in.jsonl"
    path.write_text('{"a": 1}\n', encoding="utf-8")
    with pytest.raises(JsonlError, match=r"in\.jsonl:1.*missing"):
        load_records(path, lambda obj: obj["missing"])


def test_load_records_decodes_in_order(tmp_path):
    path = tmp_path / "in.jsonl"
    write_jsonl(path, [{"v": i} for i in range(5)])
    assert load_records(path, lambda obj: obj["v"]) == [0, 1, 2, 3, 4]


def test_write_creates_parent_dirs(tmp_path):
    path = tmp_path / "deep" / "nested" / "out.jsonl"
    write_jsonl(path, [{"a": 1}])
    assert path.exists()
