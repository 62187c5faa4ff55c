"""Vocabulary, segmentation types and corpus I/O shared by the other modules."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

DEFAULT_JOINER = "@@"


class DPEError(Exception):
    """Base class for data errors raised by this package."""


class DuplicateEntry(DPEError):
    pass


class EmptyEntry(DPEError):
    pass


class MissingCharClosure(DPEError):
    pass


class UnknownChar(DPEError):
    pass


class Unsegmentable(DPEError):
    """A string has no path through its lattice (some position is unreachable)."""

    def __init__(self, text: str, position: int | None = None, line: int | None = None):
        self.text = text
        self.position = position
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"cannot segment {text!r} at position {position}{where}")


class AlignmentMismatch(DPEError):
    pass


class _ReverseTrieNode:
    __slots__ = ("children", "entry_id")

    def __init__(self):
        self.children: dict[str, _ReverseTrieNode] = {}
        self.entry_id: int = -1


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Bidirectional subword <-> id map.

    Ids are dense and follow the order of ``entries``. ``max_len`` is the
    longest entry in characters (code points, never bytes).
    """

    entries: tuple[str, ...]
    index: dict[str, int] = field(repr=False)
    max_len: int
    _rtrie: _ReverseTrieNode = field(repr=False)

    @classmethod
    def from_entries(cls, entries: Iterable[str]) -> Vocabulary:
        entries = tuple(entries)
        index: dict[str, int] = {}
        root = _ReverseTrieNode()
        for i, s in enumerate(entries):
            if not s:
                raise EmptyEntry(f"empty vocabulary entry at id {i}")
            if any(ch.isspace() for ch in s):
                raise EmptyEntry(f"vocabulary entry {s!r} contains whitespace")
            if s in index:
                raise DuplicateEntry(f"duplicate vocabulary entry {s!r}")
            index[s] = i
            node = root
            for ch in reversed(s):
                node = node.children.setdefault(ch, _ReverseTrieNode())
            node.entry_id = i
        max_len = max((len(s) for s in entries), default=0)
        return cls(entries, index, max_len, root)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, s: object) -> bool:
        return s in self.index

    def __iter__(self) -> Iterator[str]:
        return iter(self.entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    def id(self, s: str) -> int:
        return self.index[s]

    def lookup(self, i: int) -> str:
        return self.entries[i]

    def chars(self) -> set[str]:
        return {s for s in self.entries if len(s) == 1}

    def matches_ending_at(self, y: str, k: int) -> list[tuple[int, int]]:
        """All ``(j, id)`` with ``y[j:k]`` in the vocabulary, ``j`` descending.

        Walks a trie of reversed entries backwards from ``k``, so the cost is
        at most ``max_len`` character steps.
        """
        out = []
        node = self._rtrie
        j = k
        while j > 0:
            node = node.children.get(y[j - 1])
            if node is None:
                break
            j -= 1
            if node.entry_id >= 0:
                out.append((j, node.entry_id))
        return out

    def missing_chars(self, texts: Iterable[str]) -> set[str]:
        have = self.chars()
        missing = set()
        for t in texts:
            for ch in t:
                if not ch.isspace() and ch not in have:
                    missing.add(ch)
        return missing

    def check_closure(self, texts: Iterable[str], strict: bool = False) -> set[str]:
        missing = self.missing_chars(texts)
        if missing:
            msg = f"characters missing from vocabulary: {''.join(sorted(missing))!r}"
            if strict:
                raise MissingCharClosure(msg)
            logger.warning(msg)
        return missing


def load_vocab(path: str | os.PathLike, corpus: Iterable[str] | None = None,
               strict_closure: bool = False) -> Vocabulary:
    """Read a vocabulary file: one subword per line, optionally ``subword<TAB>id``.

    When ``corpus`` is given, characters of the corpus missing from the
    vocabulary are logged (or raised with ``strict_closure``).
    """
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if "\t" in line:
                s, _, sid = line.partition("\t")
                if sid.strip() and int(sid) != len(entries):
                    raise DPEError(f"{path}:{lineno}: id {sid} out of order")
            else:
                s = line
            if not s:
                raise EmptyEntry(f"{path}:{lineno}: empty entry")
            entries.append(s)
    vocab = Vocabulary.from_entries(entries)
    if corpus is not None:
        vocab.check_closure(corpus, strict=strict_closure)
    return vocab


def save_vocab(vocab: Vocabulary, path: str | os.PathLike, with_ids: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, s in enumerate(vocab.entries):
            f.write(f"{s}\t{i}\n" if with_ids else f"{s}\n")


# Segmentations are tuples of boundaries z = (0, ..., T).
Segmentation = tuple[int, ...]


def validate_segmentation(y: str, z: Sequence[int], vocab: Vocabulary) -> bool:
    if len(z) == 0 or z[0] != 0 or z[-1] != len(y):
        return False
    m = vocab.max_len
    for a, b in zip(z, z[1:]):
        if b <= a or b - a > m or y[a:b] not in vocab:
            return False
    return True


def spans(y: str, z: Sequence[int]) -> list[str]:
    return [y[a:b] for a, b in zip(z, z[1:])]


def boundaries(pieces: Sequence[str]) -> Segmentation:
    z = [0]
    for p in pieces:
        z.append(z[-1] + len(p))
    return tuple(z)


def normalize(line: str) -> str:
    """Collapse runs of whitespace to single spaces and strip the ends."""
    return " ".join(line.split())


def join_word(pieces: Sequence[str], joiner: str = DEFAULT_JOINER) -> str:
    return " ".join([p + joiner for p in pieces[:-1]] + [pieces[-1]])


def format_sentence(words: Sequence[Sequence[str]], joiner: str = DEFAULT_JOINER) -> str:
    """Serialize per-word subword lists, marking non-final pieces with ``joiner``."""
    return " ".join(join_word(w, joiner) for w in words if w)


def parse_sentence(line: str, joiner: str = DEFAULT_JOINER) -> list[list[str]]:
    """Inverse of :func:`format_sentence`."""
    words: list[list[str]] = []
    cur: list[str] = []
    for tok in line.split():
        if joiner and tok.endswith(joiner) and len(tok) > len(joiner):
            cur.append(tok[: -len(joiner)])
        else:
            cur.append(tok)
            words.append(cur)
            cur = []
    if cur:
        words.append(cur)
    return words


def strip_joiners(line: str, joiner: str = DEFAULT_JOINER) -> str:
    return " ".join("".join(w) for w in parse_sentence(line, joiner))


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str

    def __post_init__(self):
        object.__setattr__(self, "source", normalize(self.source))
        object.__setattr__(self, "target", normalize(self.target))
        if not self.source or not self.target:
            raise DPEError("sentence pair has an empty side")


def read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [normalize(line) for line in f]


def write_lines(path: str | os.PathLike, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")


def read_parallel(src_path: str | os.PathLike, tgt_path: str | os.PathLike) -> list[SentencePair]:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise AlignmentMismatch(f"{src_path} has {len(src)} lines, {tgt_path} has {len(tgt)}")
    pairs = []
    for i, (s, t) in enumerate(zip(src, tgt), 1):
        try:
            pairs.append(SentencePair(s, t))
        except DPEError as exc:
            raise DPEError(f"line {i}: {exc}") from None
    return pairs


def word_counts(lines: Iterable[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for line in lines:
        for w in line.split():
            counts[w] = counts.get(w, 0) + 1
    return counts
