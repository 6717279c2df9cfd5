"""Sentence splitting, tokenization, vocabulary and word-vector loading."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from gazeaeg.dataset import ASAP_PROMPTS, Essay, PromptSpec, normalize_score

PAD = "<pad>"
UNK = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")
# ASAP anonymization placeholders, e.g. @CAPS1, @LOCATION2
_ANON = re.compile(r"@[A-Z]+\d*")


class EmbeddingFormatError(ValueError):
    pass


class EncodingError(ValueError):
    pass


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_BOUNDARY.split(text) if s.strip()]


def _is_punct(ch: str) -> bool:
    return not ch.isalnum()


def _split_chunk(chunk: str) -> list[str]:
    end = len(chunk)
    while end > 0 and _is_punct(chunk[end - 1]):
        end -= 1
    body, trail = chunk[:end], chunk[end:]
    start = 0
    while start < len(body) and _is_punct(body[start]) and not _ANON.match(body, start):
        start += 1
    core = body[start:]
    out = list(body[:start])
    if core:
        # anonymization tags keep their case, e.g. "@PERSON2's"
        anon = _ANON.match(core)
        head = anon.group() if anon else ""
        out.append(head + core[len(head):].lower())
    out.extend(trail)
    return out


def tokenize(sentence: str) -> list[str]:
    tokens: list[str] = []
    for chunk in sentence.split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def essay_tokens(text: str) -> list[list[str]]:
    """Tokens per sentence; sentences that tokenize to nothing are dropped."""
    return [toks for toks in (tokenize(s) for s in split_sentences(text)) if toks]


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.tokens[:2] != [PAD, UNK]:
            raise ValueError("vocabulary must start with padding and unknown entries")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK_INDEX)


def build_vocab(corpus: Sequence[Essay], min_count: int = 1) -> Vocabulary:
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be positive")
    counts: Counter[str] = Counter()
    for essay in corpus:
        for sent in essay_tokens(essay.text):
            counts.update(sent)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in (PAD, UNK)),
                  key=lambda t: (-counts[t], t))
    return Vocabulary([PAD, UNK, *kept])


def random_embeddings(vocab: Vocabulary, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    emb = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    emb[PAD_INDEX] = 0.0
    return emb


def load_embeddings(path: str | Path, vocab: Vocabulary, dim: int = 50, seed: int = 0) -> np.ndarray:
    """Build a ``len(vocab) x dim`` matrix from a plain-text word-vector file.

    Tokens missing from the file keep a uniform [-0.05, 0.05] initialisation.
    """
    emb = random_embeddings(vocab, dim, seed)
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingFormatError(f"{path}:{line_no}: expected {dim} values, got {len(parts) - 1}")
            idx = vocab.index.get(parts[0])
            if idx is None or idx == PAD_INDEX:
                continue
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(f"{path}:{line_no}: non-numeric value") from None
            if not np.isfinite(vec).all():
                raise EmbeddingFormatError(f"{path}:{line_no}: non-finite value")
            emb[idx] = vec
    return emb


@dataclass
class EncodedEssay:
    essay_id: int
    prompt_id: int
    gold_score: int
    grid: np.ndarray  # (S, T) int64
    sentence_mask: np.ndarray  # (S,) bool
    token_mask: np.ndarray  # (S, T) bool
    target: float
    # untruncated token count of every sentence; maps flat token indices to grid cells
    sentence_lengths: tuple[int, ...] = ()
    gaze_targets: np.ndarray | None = None  # (5, S, T)
    gaze_mask: np.ndarray | None = None  # (S, T) bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @property
    def n_tokens(self) -> int:
        return sum(self.sentence_lengths)


def encode_essay(
    essay: Essay,
    vocab: Vocabulary,
    specs: Mapping[int, PromptSpec] = ASAP_PROMPTS,
    max_sentences: int = 40,
    max_tokens: int = 50,
) -> EncodedEssay:
    if max_sentences < 1 or max_tokens < 1:
        raise ValueError("limits must be positive")
    sentences = essay_tokens(essay.text)
    if not sentences:
        raise EncodingError(f"essay {essay.essay_id}: no tokens")
    grid = np.zeros((max_sentences, max_tokens), dtype=np.int64)
    tmask = np.zeros((max_sentences, max_tokens), dtype=bool)
    for s, toks in enumerate(sentences[:max_sentences]):
        toks = toks[:max_tokens]
        grid[s, : len(toks)] = [vocab.lookup(t) for t in toks]
        tmask[s, : len(toks)] = True
    return EncodedEssay(
        essay_id=essay.essay_id,
        prompt_id=essay.prompt_id,
        gold_score=essay.gold_score,
        grid=grid,
        sentence_mask=tmask.any(axis=1),
        token_mask=tmask,
        target=normalize_score(essay.gold_score, specs[essay.prompt_id]),
        sentence_lengths=tuple(len(t) for t in sentences),
    )


def corpus_tokens(essays: Iterable[Essay]) -> set[str]:
    return {t for e in essays for sent in essay_tokens(e.text) for t in sent}
