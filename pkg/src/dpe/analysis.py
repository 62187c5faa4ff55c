"""Disagreement reports between two segmentations of the same raw corpus."""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .core import DEFAULT_JOINER, AlignmentMismatch, parse_sentence

# (label, lower exclusive, upper inclusive)
BANDS = (("1-5", 0, 5), ("6-10", 5, 10), ("11-100", 10, 100), ("101-1000", 100, 1000),
         (">1000", 1000, None))


def band_of(freq: int) -> str:
    for label, lo, hi in BANDS:
        if freq > lo and (hi is None or freq <= hi):
            return label
    raise ValueError(f"frequency must be positive, got {freq}")


def modal(counter: Counter) -> tuple[str, ...]:
    """Most frequent segmentation; ties go to the lexicographically smallest."""
    best = max(counter.values())
    return min(seg for seg, c in counter.items() if c == best)


@dataclass(frozen=True)
class WordRecord:
    word: str
    freq: int
    seg_a: tuple[str, ...]
    seg_b: tuple[str, ...]

    @property
    def agree(self) -> bool:
        return self.seg_a == self.seg_b


@dataclass(frozen=True)
class BandStat:
    label: str
    types: int
    disagreements: int

    @property
    def rate(self) -> float:
        return self.disagreements / self.types if self.types else 0.0


@dataclass
class DisagreementReport:
    records: list[WordRecord]
    bands: list[BandStat]

    @property
    def types(self) -> int:
        return len(self.records)

    @property
    def disagreements(self) -> int:
        return sum(not r.agree for r in self.records)

    @property
    def rate(self) -> float:
        return self.disagreements / self.types if self.types else 0.0

    def to_tsv(self, joiner: str = "+") -> str:
        out = io.StringIO()
        out.write(f"# types={self.types}\tdisagreements={self.disagreements}\trate={self.rate!r}\n")
        for b in self.bands:
            out.write(f"# band={b.label}\ttypes={b.types}\tdisagreements={b.disagreements}\trate={b.rate!r}\n")
        out.write("word\tfreq\tband\tseg_a\tseg_b\tagree\n")
        for r in self.records:
            out.write(f"{r.word}\t{r.freq}\t{band_of(r.freq)}\t{joiner.join(r.seg_a)}\t"
                      f"{joiner.join(r.seg_b)}\t{int(r.agree)}\n")
        return out.getvalue()

    def bands_csv(self) -> str:
        lines = ["band,types,rate"]
        lines += [f"{b.label},{b.types},{b.rate!r}" for b in self.bands]
        return "\n".join(lines) + "\n"


@dataclass
class SegmentationTally:
    """Streaming per-word-type counts; shards combine exactly with :meth:`merge`."""

    joiner: str = DEFAULT_JOINER
    freq: Counter = field(default_factory=Counter)
    segs_a: dict[str, Counter] = field(default_factory=dict)
    segs_b: dict[str, Counter] = field(default_factory=dict)
    lines: int = 0

    def update(self, line_a: str, line_b: str, raw: str) -> None:
        self.lines += 1
        words = raw.split()
        wa = parse_sentence(line_a, self.joiner)
        wb = parse_sentence(line_b, self.joiner)
        if len(wa) != len(words) or len(wb) != len(words):
            raise AlignmentMismatch(f"line {self.lines}: word counts differ "
                                    f"(raw {len(words)}, a {len(wa)}, b {len(wb)})")
        for w, pa, pb in zip(words, wa, wb):
            if "".join(pa) != w or "".join(pb) != w:
                raise AlignmentMismatch(f"line {self.lines}: segmentation does not spell {w!r}")
            self.freq[w] += 1
            self.segs_a.setdefault(w, Counter())[tuple(pa)] += 1
            self.segs_b.setdefault(w, Counter())[tuple(pb)] += 1

    def merge(self, other: SegmentationTally) -> SegmentationTally:
        self.freq.update(other.freq)
        for mine, theirs in ((self.segs_a, other.segs_a), (self.segs_b, other.segs_b)):
            for w, c in theirs.items():
                mine.setdefault(w, Counter()).update(c)
        self.lines += other.lines
        return self

    def report(self) -> DisagreementReport:
        records = [WordRecord(w, self.freq[w], modal(self.segs_a[w]), modal(self.segs_b[w]))
                   for w in sorted(self.freq)]
        bands = []
        for label, _, _ in BANDS:
            members = [r for r in records if band_of(r.freq) == label]
            bands.append(BandStat(label, len(members), sum(not r.agree for r in members)))
        return DisagreementReport(records, bands)


def compare_segmenters(corpus_a: Iterable[str], corpus_b: Iterable[str], raw: Iterable[str],
                       joiner: str = DEFAULT_JOINER) -> DisagreementReport:
    """Per-word-type comparison of two joiner-marked segmentations of ``raw``.

    A word seen with several segmentations in one corpus is represented by
    its most frequent one.
    """
    corpus_a, corpus_b, raw = list(corpus_a), list(corpus_b), list(raw)
    if not len(corpus_a) == len(corpus_b) == len(raw):
        raise AlignmentMismatch(f"line counts differ: {len(corpus_a)}, {len(corpus_b)}, {len(raw)}")
    tally = SegmentationTally(joiner)
    for a, b, r in zip(corpus_a, corpus_b, raw):
        tally.update(a, b, r)
    return tally.report()


def cross_condition_disagreement(target_given_src1: Iterable[str], target_given_src2: Iterable[str],
                                 raw: Iterable[str], joiner: str = DEFAULT_JOINER) -> DisagreementReport:
    """Same target corpus segmented under two different source conditions."""
    return compare_segmenters(target_given_src1, target_given_src2, raw, joiner)


def top_disagreements(report: DisagreementReport, n: int) -> list[tuple[str, tuple[str, ...], tuple[str, ...], int]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = sorted((r for r in report.records if not r.agree), key=lambda r: (-r.freq, r.word))
    return [(r.word, r.seg_a, r.seg_b, r.freq) for r in rows[:n]]
