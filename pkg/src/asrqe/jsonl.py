"""UTF-8 / LF JSONL readers and writers for the pipeline's file formats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable, Iterator, TypeVar

from .evalsuite import ScoredHypothesis
from .pairset import Hypothesis, RankedPair

T = TypeVar("T")


class FormatError(ValueError):
    pass


def iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _read(path, build: Callable[[dict], T]) -> list[T]:
    out = []
    for lineno, obj in iter_records(path):
        try:
            out.append(build(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad record ({exc!r})") from None
    return out


def _hypothesis(obj: dict) -> Hypothesis:
    level = obj.get("level")
    ref_wer = obj.get("ref_wer")
    return Hypothesis(str(obj["utt"]), str(obj["source"]), str(obj["text"]),
                      None if level is None else int(level),
                      None if ref_wer is None else float(ref_wer))


def read_hypotheses(path) -> list[Hypothesis]:
    return _read(path, _hypothesis)


def read_references(path) -> dict[str, str]:
    refs: dict[str, str] = {}
    for utt, text in _read(path, lambda o: (str(o["utt"]), str(o["text"]))):
        refs[utt] = text
    return refs


def read_pairs(path) -> list[RankedPair]:
    return _read(path, RankedPair.from_json)


def read_scored(path) -> list[ScoredHypothesis]:
    return _read(path, ScoredHypothesis.from_json)


def hypothesis_record(h: Hypothesis) -> dict:
    rec = {"utt": h.utt_id, "source": h.source_id, "level": h.level, "text": h.text}
    if h.ref_wer is not None:
        rec["ref_wer"] = h.ref_wer
    return rec


def write_jsonl(path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n
