"""Exact marginalization and max-posterior segmentation over a lattice.

All quantities are natural-log probabilities. For a string ``y`` scored after
``prefix`` (the sentence text preceding it), an edge ``(j, k)`` carries
``log p(y[j:k] | prefix + y[:j], source)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Segmentation, Unsegmentable, Vocabulary
from .lattice import Lattice, build_lattice
from .logmath import NEG_INF, logsumexp
from .scorer import Features, Scorer, ScorerGrad


class _Rows:
    """Lazy per-position scorer rows for one string."""

    def __init__(self, y: str, scorer: Scorer, prefix: str, source: Features):
        self.full = prefix + y
        self.offset = len(prefix)
        self.scorer = scorer
        self.source = source
        window = scorer.features.window
        self.window = window if window > 0 else None
        self.contexts: dict[int, object] = {}
        self.rows: dict[int, np.ndarray] = {}

    def context(self, j: int):
        ctx = self.contexts.get(j)
        if ctx is None:
            end = self.offset + j
            start = 0 if self.window is None else max(0, end - self.window)
            ctx = self.contexts[j] = self.scorer.context(self.full[start:end], self.source)
        return ctx

    def __getitem__(self, j: int) -> np.ndarray:
        row = self.rows.get(j)
        if row is None:
            row = self.rows[j] = self.scorer.row(self.context(j))
        return row


def _prepare(y: str, vocab: Vocabulary, lattice: Lattice | None, strict: bool) -> tuple[Lattice, bool]:
    if lattice is None:
        lattice = build_lattice(y, vocab)
    bad = lattice.first_unreachable()
    if bad is not None and strict:
        raise Unsegmentable(y, bad)
    return lattice, bad is None


@dataclass
class AlphaTable:
    alpha: list[float]
    lattice: Lattice

    @property
    def log_marginal(self) -> float:
        return self.alpha[-1]


def forward(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "", source: Features = (),
            lattice: Lattice | None = None, strict: bool = True, _rows: _Rows | None = None) -> AlphaTable:
    lattice, _ = _prepare(y, vocab, lattice, strict)
    rows = _rows or _Rows(y, scorer, prefix, source)
    alpha = [NEG_INF] * (lattice.T + 1)
    alpha[0] = 0.0
    for k in range(1, lattice.T + 1):
        terms = [alpha[j] + float(rows[j][w]) for j, w in lattice.incoming[k] if alpha[j] != NEG_INF]
        alpha[k] = logsumexp(terms)
    return AlphaTable(alpha, lattice)


def log_marginal(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "",
                 source: Features = (), lattice: Lattice | None = None, strict: bool = True) -> float:
    """log sum over all segmentations z of p(y, z), in O(T * m) scorer lookups.

    With ``strict=False`` an unsegmentable string returns ``-inf`` instead of
    raising :class:`Unsegmentable`.
    """
    return forward(y, scorer, vocab, prefix=prefix, source=source, lattice=lattice,
                   strict=strict).log_marginal


@dataclass
class ViterbiTable:
    beta: list[float]
    back: list[int]

    def backtrace(self) -> Segmentation:
        z = [len(self.back) - 1]
        while z[-1] > 0:
            z.append(self.back[z[-1]])
        return tuple(reversed(z))


def viterbi(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "", source: Features = (),
            lattice: Lattice | None = None, strict: bool = True) -> ViterbiTable:
    lattice, _ = _prepare(y, vocab, lattice, strict)
    rows = _Rows(y, scorer, prefix, source)
    beta = [NEG_INF] * (lattice.T + 1)
    back = [-1] * (lattice.T + 1)
    beta[0] = 0.0
    for k in range(1, lattice.T + 1):
        best, arg = NEG_INF, -1
        # incoming is sorted by ascending j; strict '>' keeps the smallest j on ties
        for j, w in lattice.incoming[k]:
            if j > 0 and back[j] < 0:
                continue
            s = beta[j] + float(rows[j][w])
            if arg < 0 or s > best:
                best, arg = s, j
        beta[k], back[k] = best, arg
    return ViterbiTable(beta, back)


def viterbi_segment(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "",
                    source: Features = (), lattice: Lattice | None = None) -> tuple[Segmentation, float]:
    """Maximum-probability segmentation and its joint log-probability.

    Among equally scoring predecessors the smallest start position wins, i.e.
    the longest final subword.
    """
    table = viterbi(y, scorer, vocab, prefix=prefix, source=source, lattice=lattice)
    return table.backtrace(), table.beta[-1]


def backward(lattice: Lattice, rows: _Rows) -> list[float]:
    T = lattice.T
    out = lattice.outgoing()
    gamma = [NEG_INF] * (T + 1)
    gamma[T] = 0.0
    for j in range(T - 1, -1, -1):
        if out[j]:
            row = rows[j]
            gamma[j] = logsumexp([float(row[w]) + gamma[k] for k, w in out[j] if gamma[k] != NEG_INF])
    return gamma


def _posteriors(y, scorer, vocab, prefix, source, lattice):
    lattice, _ = _prepare(y, vocab, lattice, True)
    rows = _Rows(y, scorer, prefix, source)
    alpha = forward(y, scorer, vocab, lattice=lattice, _rows=rows).alpha
    gamma = backward(lattice, rows)
    logz = alpha[-1]
    post: dict[tuple[int, int], float] = {}
    for j, k, w in lattice.edges():
        s = alpha[j] + float(rows[j][w]) + gamma[k] - logz
        post[(j, k)] = float(np.exp(s)) if s != NEG_INF else 0.0
    return post, logz, lattice, rows


def edge_posteriors(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "",
                    source: Features = (), lattice: Lattice | None = None) -> dict[tuple[int, int], float]:
    """P(edge (j, k) lies on the segmentation | y) by forward-backward."""
    return _posteriors(y, scorer, vocab, prefix, source, lattice)[0]


def marginal_and_gradient(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "",
                          source: Features = (), lattice: Lattice | None = None,
                          out: ScorerGrad | None = None) -> tuple[float, ScorerGrad | None]:
    """``log p(y)`` and its gradient, accumulated into ``out`` when given.

    The gradient is the posterior-weighted sum of per-edge log-prob gradients.
    Edges leaving the same position share one softmax, so each position
    contributes a single logit-gradient row: posterior mass on the observed
    subwords minus total outgoing mass times the predicted distribution.
    """
    post, logz, lattice, rows = _posteriors(y, scorer, vocab, prefix, source, lattice)
    if not scorer.trainable:
        return logz, out
    if out is None:
        out = ScorerGrad.zeros_like(scorer.params)
    by_start: dict[int, list[tuple[int, float]]] = {}
    for j, k, w in lattice.edges():
        by_start.setdefault(j, []).append((w, post[(j, k)]))
    contexts, grads = [], []
    for j in sorted(by_start):
        row = rows[j]
        g = np.zeros(len(row))
        mass = 0.0
        for w, pr in by_start[j]:
            g[w] += pr
            mass += pr
        if mass == 0.0:
            continue
        g -= mass * np.exp(row)
        contexts.append(rows.context(j))
        grads.append(g)
    if contexts:
        scorer.backward(contexts, np.stack(grads), out)
    return logz, out


def marginal_gradient(y: str, scorer: Scorer, vocab: Vocabulary, *, prefix: str = "",
                      source: Features = ()) -> ScorerGrad | None:
    return marginal_and_gradient(y, scorer, vocab, prefix=prefix, source=source)[1]


# Sentence level: words are segmented independently, each scored after the
# preceding sentence text; the whitespace itself is observed, not scored.

def _word_spans(sentence: str):
    pos = 0
    for w in sentence.split(" "):
        if w:
            yield sentence[:pos], w
        pos += len(w) + 1


def sentence_log_marginal(sentence: str, scorer: Scorer, vocab: Vocabulary,
                          source_tokens: Sequence[str] = ()) -> float:
    source = scorer.source_features(source_tokens)
    return sum(log_marginal(w, scorer, vocab, prefix=pre, source=source)
               for pre, w in _word_spans(sentence))


def sentence_marginal_and_gradient(sentence: str, scorer: Scorer, vocab: Vocabulary,
                                   source_tokens: Sequence[str] = (),
                                   out: ScorerGrad | None = None) -> tuple[float, ScorerGrad | None]:
    source = scorer.source_features(source_tokens)
    total = 0.0
    for pre, w in _word_spans(sentence):
        lp, out = marginal_and_gradient(w, scorer, vocab, prefix=pre, source=source, out=out)
        total += lp
    return total, out


def sentence_viterbi(sentence: str, scorer: Scorer, vocab: Vocabulary,
                     source_tokens: Sequence[str] = ()) -> list[list[str]]:
    """DPE segmentation of a whitespace-tokenized sentence, one piece list per word."""
    source = scorer.source_features(source_tokens)
    words = []
    for pre, w in _word_spans(sentence):
        z, _ = viterbi_segment(w, scorer, vocab, prefix=pre, source=source)
        words.append([w[a:b] for a, b in zip(z, z[1:])])
    return words
