"""Byte pair encoding: merge learning, greedy encoding and BPE-dropout."""

from __future__ import annotations

import os
import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import DPEError, Segmentation, UnknownChar, Vocabulary, boundaries

MERGES_HEADER = "#version: dpe-merges 1"


class VocabTooSmall(DPEError):
    pass


@dataclass(frozen=True, eq=False)
class MergeTable:
    merges: tuple[tuple[str, str], ...]
    rank: dict[tuple[str, str], int] = field(repr=False)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]]) -> MergeTable:
        merges = tuple((a, b) for a, b in pairs)
        rank: dict[tuple[str, str], int] = {}
        for i, pair in enumerate(merges):
            if not pair[0] or not pair[1]:
                raise DPEError(f"merge {i} has an empty side")
            rank.setdefault(pair, i)
        return cls(merges, rank)

    def __len__(self):
        return len(self.merges)

    def __eq__(self, other):
        return isinstance(other, MergeTable) and self.merges == other.merges

    def __hash__(self):
        return hash(self.merges)


@dataclass(frozen=True)
class DropoutConfig:
    p: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"dropout probability must be in [0, 1], got {self.p}")


@dataclass
class DropoutStats:
    """Counts merge opportunities seen and skipped by :func:`encode_bpe_dropout`."""

    opportunities: int = 0
    dropped: int = 0


def _merge_word(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    a, b = pair
    out = []
    i = 0
    n = len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def train_bpe(corpus: Mapping[str, int], target_vocab_size: int) -> tuple[MergeTable, Vocabulary]:
    """Learn merges from a word-frequency map until the vocabulary reaches ``target_vocab_size``.

    The vocabulary is the sorted character set followed by merge outputs in
    rank order. Equal pair counts are broken by the lexicographically smallest
    ``(left, right)``.
    """
    chars = sorted({ch for w in corpus for ch in w})
    if target_vocab_size < len(chars):
        raise VocabTooSmall(f"target size {target_vocab_size} below {len(chars)} distinct characters")
    entries = list(chars)
    known = set(entries)

    words = [list(w) for w in corpus]
    freqs = [corpus[w] for w in corpus]
    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, (syms, f) in enumerate(zip(words, freqs)):
        for pair in zip(syms, syms[1:]):
            pair_counts[pair] += f
            where[pair].add(wi)

    merges: list[tuple[str, str]] = []
    while len(entries) < target_vocab_size:
        best = None
        for pair, c in pair_counts.items():
            if c <= 0:
                continue
            if best is None or c > best[0] or (c == best[0] and pair < best[1]):
                best = (c, pair)
        if best is None:
            break
        pair = best[1]
        merges.append(pair)
        new = pair[0] + pair[1]
        if new not in known:
            known.add(new)
            entries.append(new)
        for wi in sorted(where.pop(pair, ())):
            syms, f = words[wi], freqs[wi]
            for p in zip(syms, syms[1:]):
                pair_counts[p] -= f
            syms = _merge_word(syms, pair)
            words[wi] = syms
            for p in zip(syms, syms[1:]):
                pair_counts[p] += f
                where[p].add(wi)
        pair_counts.pop(pair, None)
    return MergeTable.from_pairs(merges), Vocabulary.from_entries(entries)


def _check_chars(word: str, vocab: Vocabulary | None) -> None:
    if vocab is None:
        return
    for ch in word:
        if ch not in vocab:
            raise UnknownChar(f"character {ch!r} of {word!r} is not in the vocabulary")


def encode_pieces(word: str, merges: MergeTable, vocab: Vocabulary | None = None) -> list[str]:
    _check_chars(word, vocab)
    symbols = list(word)
    rank = merges.rank
    while len(symbols) > 1:
        best = None
        for pair in zip(symbols, symbols[1:]):
            r = rank.get(pair)
            if r is not None and (best is None or r < best[0]):
                best = (r, pair)
        if best is None:
            break
        symbols = _merge_word(symbols, best[1])
    return symbols


def encode_bpe(word: str, merges: MergeTable, vocab: Vocabulary | None = None) -> Segmentation:
    """Greedy BPE: apply the lowest-ranked applicable merge until none applies."""
    return boundaries(encode_pieces(word, merges, vocab))


def encode_pieces_dropout(word: str, merges: MergeTable, cfg: DropoutConfig,
                          vocab: Vocabulary | None = None, rng: random.Random | None = None,
                          stats: DropoutStats | None = None) -> list[str]:
    _check_chars(word, vocab)
    if rng is None:
        rng = random.Random(cfg.rng_seed)
    symbols = list(word)
    rank = merges.rank
    p = cfg.p
    while len(symbols) > 1:
        best = None
        for i in range(len(symbols) - 1):
            r = rank.get((symbols[i], symbols[i + 1]))
            if r is None:
                continue
            # every applicable occurrence is one opportunity, skipped independently
            if stats is not None:
                stats.opportunities += 1
            if p > 0.0 and rng.random() < p:
                if stats is not None:
                    stats.dropped += 1
                continue
            if best is None or r < best[0]:
                best = (r, i)
        if best is None:
            break
        i = best[1]
        symbols[i:i + 2] = [symbols[i] + symbols[i + 1]]
    return symbols


def encode_bpe_dropout(word: str, merges: MergeTable, cfg: DropoutConfig,
                       vocab: Vocabulary | None = None, rng: random.Random | None = None,
                       stats: DropoutStats | None = None) -> Segmentation:
    """BPE with each candidate merge occurrence skipped with probability ``cfg.p``.

    The surviving candidate with the lowest rank (leftmost on ties) is merged,
    and candidates are re-drawn after every merge. Pass ``rng`` to share one
    stream across many words; otherwise ``cfg.rng_seed`` seeds a fresh one.
    """
    return boundaries(encode_pieces_dropout(word, merges, cfg, vocab, rng, stats))


class BPEEncoder:
    """Sentence-level BPE encoder with a per-word cache for the greedy path."""

    def __init__(self, merges: MergeTable, vocab: Vocabulary | None = None):
        self.merges = merges
        self.vocab = vocab
        self._cache: dict[str, list[str]] = {}

    def word(self, word: str) -> list[str]:
        pieces = self._cache.get(word)
        if pieces is None:
            pieces = encode_pieces(word, self.merges, self.vocab)
            self._cache[word] = pieces
        return pieces

    def sentence(self, line: str) -> list[list[str]]:
        return [self.word(w) for w in line.split()]

    def sentence_dropout(self, line: str, p: float, rng: random.Random) -> list[list[str]]:
        if p <= 0.0:
            return self.sentence(line)
        cfg = DropoutConfig(p)
        return [encode_pieces_dropout(w, self.merges, cfg, self.vocab, rng) for w in line.split()]


def sentence_rng(seed: int, pass_index: int, line_index: int, stream: str = "source") -> random.Random:
    """Independent RNG stream for one sentence in one pass over a corpus."""
    return random.Random(f"{stream}:{seed}:{pass_index}:{line_index}")


def save_merges(merges: MergeTable, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(MERGES_HEADER + "\n")
        for a, b in merges.merges:
            f.write(f"{a} {b}\n")


def load_merges(path: str | os.PathLike) -> MergeTable:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header != MERGES_HEADER:
            raise DPEError(f"{path}: unsupported merges header {header!r}")
        pairs = []
        for lineno, line in enumerate(f, 2):
            parts = line.split()
            if len(parts) != 2:
                raise DPEError(f"{path}:{lineno}: expected 'left right'")
            pairs.append((parts[0], parts[1]))
    return MergeTable.from_pairs(pairs)
