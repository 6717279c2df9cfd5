"""ASAP essay corpus: prompt metadata, TSV loader and score scaling."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class CorpusFormatError(ValueError):
    pass


class CorpusValidationError(ValueError):
    pass


class ScoreDomainError(ValueError):
    pass


class EssayType(str, enum.Enum):
    PERSUASIVE = "Persuasive"
    SOURCE_DEPENDENT = "SourceDependent"
    NARRATIVE = "Narrative"


@dataclass(frozen=True)
class PromptSpec:
    prompt_id: int
    min_score: int
    max_score: int
    essay_type: EssayType
    n_essays: int = 0
    mean_words: int = 0

    def __post_init__(self):
        if self.min_score >= self.max_score:
            raise ValueError(f"prompt {self.prompt_id}: min_score must be below max_score")

    @property
    def n_categories(self) -> int:
        return self.max_score - self.min_score + 1

    def contains(self, score: int) -> bool:
        return self.min_score <= score <= self.max_score


ASAP_PROMPTS: dict[int, PromptSpec] = {
    1: PromptSpec(1, 2, 12, EssayType.PERSUASIVE, 1783, 350),
    2: PromptSpec(2, 1, 6, EssayType.PERSUASIVE, 1800, 350),
    3: PromptSpec(3, 0, 3, EssayType.SOURCE_DEPENDENT, 1726, 150),
    4: PromptSpec(4, 0, 3, EssayType.SOURCE_DEPENDENT, 1770, 150),
    5: PromptSpec(5, 0, 4, EssayType.SOURCE_DEPENDENT, 1805, 150),
    6: PromptSpec(6, 0, 4, EssayType.SOURCE_DEPENDENT, 1800, 150),
    7: PromptSpec(7, 0, 30, EssayType.NARRATIVE, 1569, 250),
    8: PromptSpec(8, 0, 60, EssayType.NARRATIVE, 723, 650),
}


@dataclass(frozen=True)
class Essay:
    essay_id: int
    prompt_id: int
    text: str
    gold_score: int

    def validate(self, specs: Mapping[int, PromptSpec] = ASAP_PROMPTS) -> None:
        if self.essay_id <= 0:
            raise CorpusValidationError(f"essay {self.essay_id}: essay_id must be positive")
        if self.prompt_id not in specs:
            raise CorpusValidationError(f"essay {self.essay_id}: unknown prompt id {self.prompt_id}")
        if not self.text:
            raise CorpusValidationError(f"essay {self.essay_id}: empty text")
        spec = specs[self.prompt_id]
        if not spec.contains(self.gold_score):
            raise CorpusValidationError(
                f"essay {self.essay_id}: score {self.gold_score} outside "
                f"{spec.min_score}-{spec.max_score} for prompt {self.prompt_id}"
            )


REQUIRED_COLUMNS = ("essay_id", "essay_set", "essay", "domain1_score")


def _decode(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("utf-8", errors="replace")


def _parse_int(field: str, column: str, line_no: int) -> int:
    try:
        return int(field.strip())
    except ValueError:
        # the official file stores some integer columns as "8.0"
        try:
            value = float(field)
        except ValueError:
            raise CorpusFormatError(f"line {line_no}: column {column!r} is not an integer: {field!r}") from None
        if not value.is_integer():
            raise CorpusFormatError(f"line {line_no}: column {column!r} is not an integer: {field!r}")
        return int(value)


def parse_asap_tsv(data: bytes | str, specs: Mapping[int, PromptSpec] = ASAP_PROMPTS) -> list[Essay]:
    """Parse the Kaggle ASAP training TSV into essays, preserving row order.

    Only ``domain1_score`` is used as the gold score.
    """
    text = _decode(data) if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE)
    try:
        header = [h.strip().lstrip("﻿") for h in next(reader)]
    except StopIteration:
        raise CorpusFormatError("empty input: header row required") from None
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise CorpusFormatError(f"missing column {col!r}")
    pos = {col: header.index(col) for col in REQUIRED_COLUMNS}
    width = max(pos.values()) + 1

    essays = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) < width:
            raise CorpusFormatError(f"line {line_no}: expected at least {width} fields, got {len(row)}")
        essay = Essay(
            essay_id=_parse_int(row[pos["essay_id"]], "essay_id", line_no),
            prompt_id=_parse_int(row[pos["essay_set"]], "essay_set", line_no),
            text=row[pos["essay"]].strip(),
            gold_score=_parse_int(row[pos["domain1_score"]], "domain1_score", line_no),
        )
        essay.validate(specs)
        essays.append(essay)
    return essays


def load_asap_tsv(path: str | Path, specs: Mapping[int, PromptSpec] = ASAP_PROMPTS) -> list[Essay]:
    return parse_asap_tsv(Path(path).read_bytes(), specs)


def count_by_prompt(essays: Iterable[Essay]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for e in essays:
        counts[e.prompt_id] = counts.get(e.prompt_id, 0) + 1
    return dict(sorted(counts.items()))


def normalize_score(raw: int, spec: PromptSpec) -> float:
    if not spec.contains(raw):
        raise ScoreDomainError(f"score {raw} outside {spec.min_score}-{spec.max_score}")
    return (raw - spec.min_score) / (spec.max_score - spec.min_score)


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def denormalize_score(unit: float, spec: PromptSpec) -> int:
    if not math.isfinite(unit):
        raise FloatingPointError(f"non-finite model output {unit!r}")
    raw = _round_half_away(spec.min_score + unit * (spec.max_score - spec.min_score))
    return min(max(raw, spec.min_score), spec.max_score)


def save_corpus_json(essays: Sequence[Essay], path: str | Path) -> None:
    rows = [{"essay_id": e.essay_id, "prompt_id": e.prompt_id, "score": e.gold_score, "text": e.text} for e in essays]
    Path(path).write_text(json.dumps(rows, ensure_ascii=False, indent=1), encoding="utf-8")


def load_corpus_json(path: str | Path, specs: Mapping[int, PromptSpec] = ASAP_PROMPTS) -> list[Essay]:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    essays = [Essay(int(r["essay_id"]), int(r["prompt_id"]), r["text"], int(r["score"])) for r in rows]
    for e in essays:
        e.validate(specs)
    return essays
