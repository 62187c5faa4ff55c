"""Seeded toy parallel corpora with known morpheme boundaries."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from .core import SentencePair

SUFFIXES = ("s", "ed", "ing")
MARKERS = {"": "BASE", "s": "PL", "ed": "PAST", "ing": "PROG"}

_ONSETS = ["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "st", "tr", "pl", "gr", "w"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "oo"]
_CODAS = ["t", "k", "n", "m", "rt", "nd", "lt", "sk", "mp", "rk"]


def make_stems(n: int, rng: random.Random) -> list[str]:
    stems: set[str] = set()
    while len(stems) < n:
        s = rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
        if rng.random() < 0.3:
            s = rng.choice(_ONSETS) + rng.choice(_VOWELS) + s
        stems.add(s)
    return sorted(stems)


def source_word(stem: str, rng: random.Random) -> str:
    return "".join(rng.choice("ABCDEFGHJKLMNPQRSTVWXZ") for _ in range(len(stem)))


@dataclass
class MorphologyCorpus:
    """Stem + suffix targets whose suffix is announced by a source marker.

    ``train`` covers every stem but holds out one inflected form per stem;
    those forms make up ``heldout``. ``bpe_counts`` are word counts for BPE
    training: the corpus plus, when skewed, frequent junk words that glue a
    stem's final letter onto each suffix (``"ts"``, ``"ted"``, ...).
    """

    train: list[SentencePair]
    heldout: list[SentencePair]
    heldout_forms: list[tuple[str, str]]
    bpe_counts: Counter = field(default_factory=Counter)


def morphology_corpus(n_stems: int = 40, reps: int = 2, seed: int = 0, skew: int = 0,
                      bare: bool = True) -> MorphologyCorpus:
    rng = random.Random(f"morphology:{seed}")
    stems = make_stems(n_stems, rng)
    translations = {s: source_word(s, rng) for s in stems}
    train, heldout, forms = [], [], []
    suffixes = ("",) + SUFFIXES if bare else SUFFIXES
    for stem in stems:
        held = rng.choice(SUFFIXES)
        forms.append((stem, held))
        heldout.append(SentencePair(f"{translations[stem]} {MARKERS[held]}", stem + held))
        for suf in suffixes:
            if suf == held:
                continue
            for _ in range(reps):
                train.append(SentencePair(f"{translations[stem]} {MARKERS[suf]}", stem + suf))
    rng.shuffle(train)
    counts: Counter = Counter()
    for p in train:
        counts.update(p.source.split())
        counts.update(p.target.split())
    if skew:
        finals = sorted({s[-1] for s in stems})
        for ch in finals:
            for suf in SUFFIXES:
                counts[ch + suf] += skew
    return MorphologyCorpus(train, heldout, forms, counts)


def marker_corpus(n: int = 200, n_stems: int = 30, seed: int = 0) -> list[SentencePair]:
    """Pairs whose target suffix is chosen uniformly and only the source marker reveals it."""
    rng = random.Random(f"marker:{seed}")
    stems = make_stems(n_stems, rng)
    translations = {s: source_word(s, rng) for s in stems}
    pairs = []
    for _ in range(n):
        stem = rng.choice(stems)
        suf = rng.choice(SUFFIXES)
        pairs.append(SentencePair(f"{translations[stem]} {MARKERS[suf]}", stem + suf))
    return pairs


def compositional_corpus(n: int = 200, seed: int = 0) -> list[SentencePair]:
    """Short multi-word sentences built from a small inflected lexicon."""
    rng = random.Random(f"compositional:{seed}")
    stems = make_stems(25, rng)
    translations = {s: source_word(s, rng) for s in stems}
    dets = [("the", "DE"), ("a", "EIN"), ("some", "ETWAS")]
    pairs = []
    for _ in range(n):
        words_src, words_tgt = [], []
        for _ in range(rng.randint(1, 3)):
            det_t, det_s = rng.choice(dets)
            stem = rng.choice(stems)
            suf = rng.choice(("",) + SUFFIXES)
            words_src += [det_s, translations[stem], MARKERS[suf]]
            words_tgt += [det_t, stem + suf]
        pairs.append(SentencePair(" ".join(words_src), " ".join(words_tgt)))
    return pairs
