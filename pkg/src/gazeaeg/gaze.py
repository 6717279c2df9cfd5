"""Gaze-behaviour labels: per-reader binning, token alignment, synthetic readers."""
from __future__ import annotations

import csv
import enum
import io
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from gazeaeg.dataset import Essay
from gazeaeg.textprep import EncodedEssay, essay_tokens


class GazeAttribute(str, enum.Enum):
    DT = "DT"  # dwell time, ms
    FFD = "FFD"  # first fixation duration, ms
    IR = "IR"  # regression out of this word, 0/1
    RC = "RC"  # run count
    SKIP = "Skip"  # never fixated, 0/1


ATTRIBUTES: tuple[GazeAttribute, ...] = tuple(GazeAttribute)
BINNED = (GazeAttribute.DT, GazeAttribute.FFD, GazeAttribute.RC)
BINARY = (GazeAttribute.IR, GazeAttribute.SKIP)


class GazeValidationError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class RawGazeRecord:
    essay_id: int
    reader_id: int
    token_index: int
    values: Mapping[GazeAttribute, float]

    def __post_init__(self):
        where = f"essay {self.essay_id}, reader {self.reader_id}, token {self.token_index}"
        if self.token_index < 0:
            raise GazeValidationError(f"{where}: negative token index")
        missing = [a.value for a in ATTRIBUTES if a not in self.values]
        if missing:
            raise GazeValidationError(f"{where}: missing attributes {missing}")
        v = self.values
        for a in ATTRIBUTES:
            if not np.isfinite(v[a]) or v[a] < 0:
                raise GazeValidationError(f"{where}: {a.value} must be a non-negative number, got {v[a]}")
        for a in BINARY:
            if v[a] not in (0, 1):
                raise GazeValidationError(f"{where}: {a.value} must be 0 or 1, got {v[a]}")
        if float(v[GazeAttribute.RC]) != int(v[GazeAttribute.RC]):
            raise GazeValidationError(f"{where}: RC must be a whole count")
        if v[GazeAttribute.SKIP] == 1 and (v[GazeAttribute.DT] or v[GazeAttribute.FFD] or v[GazeAttribute.RC]):
            raise GazeValidationError(f"{where}: skipped word with non-zero fixation values")


@dataclass
class GazeLabels:
    """Aligned gaze targets for one encoded essay."""

    targets: np.ndarray  # (5, S, T) in [0, 1]
    mask: np.ndarray  # (S, T) bool


def quantile_bin(values: Sequence[float], bin_count: int) -> list[int]:
    """Equal-frequency bins: a value's bin is floor(bin_count * rank / n), rank = #smaller values."""
    if bin_count < 2:
        raise ValueError(f"bin_count must be at least 2, got {bin_count}")
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot bin an empty sequence")
    rank = np.searchsorted(np.sort(arr), arr, side="left")
    return [int(b) for b in (bin_count * rank) // arr.size]


def bin_and_scale(records: Iterable[RawGazeRecord], bin_count: int = 5) -> dict[tuple[int, int], np.ndarray]:
    """Per-reader binning of DT/FFD/RC, scaled to [0, 1] and averaged over readers.

    Returns a map (essay_id, token_index) -> vector of the five attributes in
    ``ATTRIBUTES`` order.
    """
    by_reader: dict[int, list[RawGazeRecord]] = defaultdict(list)
    for r in records:
        for a in ATTRIBUTES:
            if r.values[a] < 0:
                raise GazeValidationError(f"essay {r.essay_id}, reader {r.reader_id}: negative {a.value}")
        by_reader[r.reader_id].append(r)

    sums: dict[tuple[int, int], np.ndarray] = {}
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for reader in sorted(by_reader):
        recs = by_reader[reader]
        scaled = np.zeros((len(recs), len(ATTRIBUTES)))
        for j, a in enumerate(ATTRIBUTES):
            col = [r.values[a] for r in recs]
            if a in BINNED:
                scaled[:, j] = np.asarray(quantile_bin(col, bin_count)) / (bin_count - 1)
            else:
                scaled[:, j] = col
        for r, row in zip(recs, scaled):
            key = (r.essay_id, r.token_index)
            sums[key] = sums[key] + row if key in sums else row.copy()
            counts[key] += 1
    return {key: sums[key] / counts[key] for key in sorted(sums)}


def align_gaze(labels: Mapping[tuple[int, int], np.ndarray], essay: EncodedEssay) -> GazeLabels:
    """Place token-level labels on the essay's padded (sentence, token) grid."""
    S, T = essay.shape
    targets = np.zeros((len(ATTRIBUTES), S, T))
    mask = np.zeros((S, T), dtype=bool)
    starts = np.concatenate([[0], np.cumsum(essay.sentence_lengths)])
    n_tokens = int(starts[-1])
    for (eid, tok), vec in labels.items():
        if eid != essay.essay_id:
            continue
        if not 0 <= tok < n_tokens:
            raise AlignmentError(f"essay {eid}: token index {tok} outside 0..{n_tokens - 1}")
        s = int(np.searchsorted(starts, tok, side="right") - 1)
        t = tok - int(starts[s])
        if s < S and t < T and essay.token_mask[s, t]:
            targets[:, s, t] = vec
            mask[s, t] = True
    return GazeLabels(targets, mask)


def attach_gaze(essay: EncodedEssay, labels: Mapping[tuple[int, int], np.ndarray]) -> EncodedEssay:
    aligned = align_gaze(labels, essay)
    essay.gaze_targets, essay.gaze_mask = aligned.targets, aligned.mask
    return essay


def labels_by_essay(labels: Mapping[tuple[int, int], np.ndarray]) -> dict[int, dict[tuple[int, int], np.ndarray]]:
    out: dict[int, dict[tuple[int, int], np.ndarray]] = defaultdict(dict)
    for key, vec in labels.items():
        out[key[0]][key] = vec
    return dict(out)


# synthetic readers ----------------------------------------------------------

def synth_gaze(essay: Essay, seed: int, n_readers: int = 8) -> list[RawGazeRecord]:
    """Plausible per-word gaze for ``n_readers`` simulated readers.

    Long and (within the essay) rare words are fixated longer, revisited more and
    skipped less. Each reader has their own reading speed, so raw durations differ
    between readers by a multiplicative factor.
    """
    tokens = [t for sent in essay_tokens(essay.text) for t in sent]
    freq: dict[str, int] = defaultdict(int)
    for t in tokens:
        freq[t] += 1
    rng = np.random.default_rng([seed, essay.essay_id])
    records = []
    for reader in range(n_readers):
        speed = float(np.exp(rng.normal(0.0, 0.25)))
        for i, tok in enumerate(tokens):
            length = sum(ch.isalnum() for ch in tok)
            # difficulty in roughly [0, 1]
            difficulty = min(1.0, length / 12.0) * 0.8 + 0.2 / freq[tok]
            if length == 0:
                difficulty = 0.0
            skip = rng.random() < 0.6 * (1.0 - difficulty) ** 2
            if skip:
                dt = ffd = rc = 0.0
                ir = 0
            else:
                ffd = round(speed * (120.0 + 180.0 * difficulty) * float(np.exp(rng.normal(0.0, 0.15))), 1)
                rc = float(1 + rng.poisson(2.0 * difficulty))
                dt = round(ffd + (rc - 1) * speed * (100.0 + 150.0 * difficulty), 1)
                ir = int(rng.random() < 0.1 + 0.3 * difficulty)
            records.append(RawGazeRecord(essay.essay_id, reader, i, {
                GazeAttribute.DT: dt, GazeAttribute.FFD: ffd, GazeAttribute.IR: ir,
                GazeAttribute.RC: rc, GazeAttribute.SKIP: int(skip),
            }))
    return records


def synth_gaze_corpus(essays: Sequence[Essay], seed: int, n_essays: int, n_readers: int = 8) -> list[RawGazeRecord]:
    """Synthetic gaze for ``n_essays`` essays picked deterministically from ``essays``."""
    rng = np.random.default_rng(seed)
    n = min(n_essays, len(essays))
    chosen = sorted(rng.choice(len(essays), size=n, replace=False)) if n else []
    out = []
    for i in chosen:
        out.extend(synth_gaze(essays[i], seed, n_readers))
    return out


# TSV I/O --------------------------------------------------------------------

GAZE_COLUMNS = ("essay_id", "reader_id", "token_index", *(a.value for a in ATTRIBUTES))


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_gaze_tsv(records: Iterable[RawGazeRecord], path: str | Path) -> None:
    lines = ["\t".join(GAZE_COLUMNS)]
    for r in records:
        lines.append("\t".join([str(r.essay_id), str(r.reader_id), str(r.token_index),
                                *(_fmt(r.values[a]) for a in ATTRIBUTES)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_gaze_tsv(text: str) -> list[RawGazeRecord]:
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    header = next(reader, None)
    if header is None:
        raise GazeValidationError("empty gaze file")
    missing = [c for c in GAZE_COLUMNS if c not in header]
    if missing:
        raise GazeValidationError(f"gaze file missing columns {missing}")
    pos = {c: header.index(c) for c in GAZE_COLUMNS}
    out = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            out.append(RawGazeRecord(
                int(row[pos["essay_id"]]), int(row[pos["reader_id"]]), int(row[pos["token_index"]]),
                {a: float(row[pos[a.value]]) for a in ATTRIBUTES},
            ))
        except (ValueError, IndexError) as exc:
            if isinstance(exc, GazeValidationError):
                raise
            raise GazeValidationError(f"line {line_no}: {exc}") from None
    return out


def read_gaze_tsv(path: str | Path) -> list[RawGazeRecord]:
    return parse_gaze_tsv(Path(path).read_text(encoding="utf-8"))

