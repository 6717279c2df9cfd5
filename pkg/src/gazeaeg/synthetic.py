"""Synthetic multi-prompt essay corpus with a prompt-independent quality signal.

Every essay has a latent quality. Higher-quality essays are longer and use more
long, uncommon "academic" words, which are shared across prompts; each prompt
also has its own topic words. The gold score is a noisy function of the
realised content statistics, mapped onto the prompt's score range, so a scorer
trained on some prompts can transfer to an unseen one.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from gazeaeg.dataset import ASAP_PROMPTS, Essay, PromptSpec

_ONSETS = ["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "pr", "tr", "st", "gr", "cl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["", "n", "r", "s", "l", "nt", "st"]

FUNCTION_WORDS = (
    "the a and to of is it in that we i was for on are with they be at this have "
    "from or one had by but not what all were when can there so if my"
).split()


def _pseudo_words(rng: np.random.Generator, n: int, syllables: tuple[int, int], taken: set[str]) -> list[str]:
    out: list[str] = []
    while len(out) < n:
        k = int(rng.integers(syllables[0], syllables[1] + 1))
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS) for _ in range(k))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_synthetic_corpus(
    n_essays: int = 800,
    prompts: Sequence[int] = (1, 2, 3, 4),
    seed: int = 0,
    specs: Mapping[int, PromptSpec] = ASAP_PROMPTS,
    noise: float = 0.05,
) -> list[Essay]:
    rng = np.random.default_rng(seed)
    taken = set(FUNCTION_WORDS)
    academic = _pseudo_words(rng, 120, (3, 4), taken)
    plain = _pseudo_words(rng, 80, (1, 1), taken)
    topics = {p: _pseudo_words(rng, 40, (1, 2), taken) for p in prompts}

    essays = []
    per_prompt = np.array_split(np.arange(n_essays), len(prompts))
    for p, ids in zip(prompts, per_prompt):
        spec = specs[p]
        for i in ids:
            quality = float(rng.beta(2.0, 2.0))
            n_sent = int(np.clip(round(3 + 5 * quality + rng.normal(0, 0.7)), 2, 9))
            p_academic = 0.05 + 0.45 * quality
            sentences, n_acad, n_tok = [], 0, 0
            for _ in range(n_sent):
                length = int(rng.integers(6, 13))
                words = []
                for _ in range(length):
                    r = rng.random()
                    if r < p_academic:
                        words.append(str(rng.choice(academic)))
                        n_acad += 1
                    elif r < p_academic + 0.25:
                        words.append(str(rng.choice(topics[p])))
                    elif r < p_academic + 0.45:
                        words.append(str(rng.choice(plain)))
                    else:
                        words.append(str(rng.choice(FUNCTION_WORDS)))
                n_tok += length
                sentences.append(" ".join(words).capitalize() + str(rng.choice([".", ".", ".", "!", "?"])))
            frac = n_acad / n_tok
            stat = 0.75 * (frac - 0.05) / 0.45 + 0.25 * (n_sent - 2) / 7
            unit = float(np.clip(stat + rng.normal(0, noise), 0.0, 1.0))
            score = int(round(spec.min_score + unit * (spec.max_score - spec.min_score)))
            essays.append(Essay(int(i) + 1, p, " ".join(sentences), score))
    return essays
