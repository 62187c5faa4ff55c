"""Stochastic gradient ascent on the exact log marginal likelihood."""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from typing import IO, Sequence

from .bpe import BPEEncoder, MergeTable, sentence_rng
from .core import DPEError, SentencePair, Unsegmentable, Vocabulary
from .dp import sentence_log_marginal, sentence_marginal_and_gradient
from .scorer import FeatureConfig, LogLinearScorer, ScorerGrad, ScorerParams

logger = logging.getLogger(__name__)

MODES = ("conditional", "lm")


class NonFiniteLoss(DPEError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 1
    grad_accumulation: int = 16
    dropout_p: float = 0.05
    seed: int = 0
    mode: str = "conditional"
    dim: int = 16
    init_scale: float = 0.1
    clip_norm: float | None = 5.0
    window: int = 8
    max_order: int = 4
    hash_bits: int = 18
    hash_seed: int = 0x5EED

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0, learning_rate > 0, batch_size >= 1")
        if self.grad_accumulation < 1:
            raise ValueError("grad_accumulation must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")

    @property
    def features(self) -> FeatureConfig:
        return FeatureConfig(hash_bits=self.hash_bits, hash_seed=self.hash_seed, window=self.window,
                             max_order=self.max_order, conditional=self.mode == "conditional")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)      # nats/char per epoch
    heldout_loss: list[float] = field(default_factory=list)    # index 0 is before training
    updates: int = 0
    wall_time: float = 0.0
    checkpoint_path: str | None = None


def char_count(sentence: str) -> int:
    return sum(1 for ch in sentence if not ch.isspace())


def source_tokens(pieces: list[list[str]]) -> list[str]:
    return [p for word in pieces for p in word]


def evaluate(pairs: Sequence[SentencePair], scorer: LogLinearScorer, vocab: Vocabulary,
             encoder: BPEEncoder) -> float:
    """Held-out negative log marginal in nats per (non-space) target character.

    Sources are segmented with deterministic BPE.
    """
    nll = 0.0
    chars = 0
    for pair in pairs:
        nll -= sentence_log_marginal(pair.target, scorer, vocab, source_tokens(encoder.sentence(pair.source)))
        chars += char_count(pair.target)
    return nll / max(chars, 1)


def make_scorer(vocab: Vocabulary, cfg: TrainConfig, params: ScorerParams | None = None) -> LogLinearScorer:
    if params is None:
        params = ScorerParams.init(len(vocab), cfg.dim, seed=cfg.seed, scale=cfg.init_scale)
    return LogLinearScorer(vocab, params, cfg.features)


def train(corpus: Sequence[SentencePair], vocab: Vocabulary, merges: MergeTable, cfg: TrainConfig,
          heldout: Sequence[SentencePair] = (), log: IO[str] | None = None,
          params: ScorerParams | None = None) -> tuple[ScorerParams, TrainReport]:
    """Fit a log-linear scorer by maximizing sum log p(target | source).

    Each epoch visits the corpus in a seeded shuffled order and re-draws every
    source segmentation with BPE-dropout. Gradients of ``batch_size *
    grad_accumulation`` sentences are averaged before one SGD step.
    """
    if not corpus:
        raise DPEError("training corpus is empty")
    start = time.perf_counter()
    scorer = make_scorer(vocab, cfg, params)
    encoder = BPEEncoder(merges, vocab)
    report = TrainReport()
    if heldout:
        report.heldout_loss.append(evaluate(heldout, scorer, vocab, encoder))
    step_size = cfg.batch_size * cfg.grad_accumulation

    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(corpus)))
        random.Random(f"shuffle:{cfg.seed}:{epoch}").shuffle(order)
        grad = ScorerGrad.zeros_like(scorer.params)
        pending = 0
        epoch_nll = 0.0
        epoch_chars = 0
        for n, idx in enumerate(order, 1):
            pair = corpus[idx]
            src = encoder.sentence_dropout(pair.source, cfg.dropout_p, sentence_rng(cfg.seed, epoch, idx))
            try:
                lp, grad = sentence_marginal_and_gradient(pair.target, scorer, vocab,
                                                          source_tokens(src), out=grad)
            except Unsegmentable as exc:
                exc.line = idx + 1
                raise
            if not math.isfinite(lp):
                raise NonFiniteLoss(f"epoch {epoch}, line {idx + 1}: log marginal {lp} for {pair.target!r}")
            epoch_nll -= lp
            epoch_chars += char_count(pair.target)
            pending += 1
            if pending == step_size or n == len(order):
                _step(scorer, grad, pending, cfg, epoch)
                report.updates += 1
                grad = ScorerGrad.zeros_like(scorer.params)
                pending = 0
        report.train_loss.append(epoch_nll / max(epoch_chars, 1))
        if heldout:
            report.heldout_loss.append(evaluate(heldout, scorer, vocab, encoder))
        record = {"epoch": epoch, "loss": report.train_loss[-1], "lr": cfg.learning_rate,
                  "wall_time": round(time.perf_counter() - start, 3)}
        if heldout:
            record["heldout"] = report.heldout_loss[-1]
        logger.info("epoch %d loss %.4f", epoch, record["loss"])
        if log is not None:
            log.write(json.dumps(record, sort_keys=True) + "\n")
    report.wall_time = time.perf_counter() - start
    return scorer.params, report


def _step(scorer: LogLinearScorer, grad: ScorerGrad, count: int, cfg: TrainConfig, epoch: int) -> None:
    grad.scale_(1.0 / count)
    norm = grad.norm()
    if not math.isfinite(norm):
        raise NonFiniteLoss(f"epoch {epoch}: gradient norm {norm}")
    if cfg.clip_norm is not None and norm > cfg.clip_norm:
        grad.scale_(cfg.clip_norm / norm)
    scorer.update(grad, cfg.learning_rate)
