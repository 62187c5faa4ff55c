"""Corpus-scale stages: learn BPE, train the scorer, segment, emit, analyze.

Every stage takes a :class:`PipelineConfig`; configuration errors are raised
as :class:`ConfigError` before any work starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .analysis import compare_segmenters, top_disagreements
from .bpe import BPEEncoder, MergeTable, load_merges, save_merges, sentence_rng, train_bpe
from .core import (DEFAULT_JOINER, DPEError, Unsegmentable, Vocabulary, format_sentence, load_vocab,
                   read_lines, read_parallel, save_vocab, write_lines)
from .dp import viterbi_segment
from .scorer import LogLinearScorer, Scorer, load_checkpoint, save_checkpoint
from .trainer import TrainConfig, TrainReport, source_tokens, train

logger = logging.getLogger(__name__)

SOURCE_MODES = ("bpe", "bpe-dropout")
TARGET_MODES = ("bpe", "bpe-dropout", "dpe-fixed", "dpe-on-the-fly")


class ConfigError(Exception):
    pass


class ManifestMismatch(DPEError):
    pass


@dataclass
class PipelineConfig:
    source: str | None = None
    target: str | None = None
    corpus: list[str] = field(default_factory=list)
    vocab: str | None = None
    merges: str | None = None
    checkpoint: str | None = None
    output: str | None = None
    heldout_source: str | None = None
    heldout_target: str | None = None
    log: str | None = None
    source_mode: str = "bpe-dropout"
    target_mode: str = "dpe-on-the-fly"
    mode: str = "conditional"
    vocab_size: int = 1000
    seed: int = 0
    dropout_p: float = 0.05
    joiner: str = DEFAULT_JOINER
    workers: int = 1
    variants: int = 1
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 1
    grad_accumulation: int = 16
    dim: int = 16
    window: int = 8
    clip_norm: float | None = 5.0
    analysis_a: str | None = None
    analysis_b: str | None = None
    raw: str | None = None
    top: int = 50

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> PipelineConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            name = key.replace("-", "_")
            if name not in names:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        if isinstance(kwargs.get("corpus"), str):
            kwargs["corpus"] = [kwargs["corpus"]]
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(epochs=self.epochs, learning_rate=self.learning_rate,
                               batch_size=self.batch_size, grad_accumulation=self.grad_accumulation,
                               dropout_p=self.dropout_p, seed=self.seed, mode=self.mode, dim=self.dim,
                               clip_norm=self.clip_norm, window=self.window)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self, stage: str) -> None:
        def need(*names):
            for n in names:
                value = getattr(self, n)
                if not value:
                    raise ConfigError(f"{stage}: missing required setting {n.replace('_', '-')!r}")

        def exists(*names):
            for n in names:
                p = getattr(self, n)
                if p and not os.path.exists(p):
                    raise ConfigError(f"{stage}: {n.replace('_', '-')} path {p!r} does not exist")

        if self.source_mode not in SOURCE_MODES:
            raise ConfigError(f"source-mode must be one of {SOURCE_MODES}")
        if self.target_mode not in TARGET_MODES:
            raise ConfigError(f"target-mode must be one of {TARGET_MODES}")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ConfigError("dropout-p must be in [0, 1]")
        if self.workers < 1 or self.variants < 1:
            raise ConfigError("workers and variants must be >= 1")
        if stage == "train-bpe":
            need("output")
            if not self.corpus and not (self.source or self.target):
                raise ConfigError("train-bpe: give --corpus or --source/--target")
            for p in self.corpus:
                if not os.path.exists(p):
                    raise ConfigError(f"train-bpe: corpus path {p!r} does not exist")
            exists("source", "target")
        elif stage == "train-scorer":
            need("source", "target", "vocab", "merges", "checkpoint")
            exists("source", "target", "vocab", "merges", "heldout_source", "heldout_target")
            self.train_config()
        elif stage in ("segment", "emit"):
            need("source", "target", "vocab", "merges", "output")
            exists("source", "target", "vocab", "merges")
            if self.target_mode.startswith("dpe"):
                need("checkpoint")
                exists("checkpoint")
            if self.target_mode == "dpe-on-the-fly" and self.source_mode != "bpe-dropout":
                raise ConfigError("target-mode dpe-on-the-fly requires source-mode bpe-dropout")
        elif stage == "analyze":
            need("analysis_a", "analysis_b", "raw", "output")
            exists("analysis_a", "analysis_b", "raw")
        else:
            raise ConfigError(f"unknown stage {stage!r}")


def _file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_train_bpe(cfg: PipelineConfig) -> tuple[MergeTable, Vocabulary]:
    """Learn a shared source/target BPE vocabulary; writes ``vocab.txt`` and ``merges.txt``."""
    cfg.validate("train-bpe")
    paths = list(cfg.corpus) + [p for p in (cfg.source, cfg.target) if p]
    counts: Counter = Counter()
    for p in paths:
        for line in read_lines(p):
            counts.update(line.split())
    merges, vocab = train_bpe(dict(sorted(counts.items())), cfg.vocab_size)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out / "vocab.txt")
    save_merges(merges, out / "merges.txt")
    logger.info("learned %d merges, |V| = %d", len(merges), len(vocab))
    return merges, vocab


def run_stage_train_scorer(cfg: PipelineConfig) -> tuple[str, TrainReport]:
    cfg.validate("train-scorer")
    tcfg = cfg.train_config()
    pairs = read_parallel(cfg.source, cfg.target)
    vocab = load_vocab(cfg.vocab, corpus=(p.target for p in pairs))
    merges = load_merges(cfg.merges)
    heldout = ()
    if cfg.heldout_source and cfg.heldout_target:
        heldout = read_parallel(cfg.heldout_source, cfg.heldout_target)
    log_path = cfg.log or cfg.checkpoint + ".log"
    with open(log_path, "w", encoding="utf-8", newline="\n") as log:
        params, report = train(pairs, vocab, merges, tcfg, heldout=heldout, log=log)
    extra = {"seed": tcfg.seed, "epochs": tcfg.epochs, "learning_rate": tcfg.learning_rate,
             "dropout_p": tcfg.dropout_p, "train_loss": report.train_loss,
             "heldout_loss": report.heldout_loss, "tool_version": __version__}
    save_checkpoint(cfg.checkpoint, params, tcfg.features, vocab, mode=tcfg.mode, extra=extra)
    report.checkpoint_path = cfg.checkpoint
    return cfg.checkpoint, report


# Segmentation workers read shared state set once per process.
_STATE: dict[str, Any] = {}


def _init_segmenter(cfg: PipelineConfig) -> None:
    vocab = load_vocab(cfg.vocab)
    merges = load_merges(cfg.merges)
    scorer = None
    if cfg.target_mode.startswith("dpe"):
        params, features, _ = load_checkpoint(cfg.checkpoint, vocab)
        scorer = LogLinearScorer(vocab, params, features)
    _STATE.update(cfg=cfg, vocab=vocab, encoder=BPEEncoder(merges, vocab), scorer=scorer)


def _encode_source(encoder: BPEEncoder, line: str, mode: str, p: float, seed: int, pass_index: int,
                   index: int) -> list[list[str]]:
    if mode == "bpe":
        return encoder.sentence(line)
    return encoder.sentence_dropout(line, p, sentence_rng(seed, pass_index, index))


def _dpe_sentence(sentence: str, scorer: Scorer, vocab: Vocabulary, src: list[str]):
    """DPE per word, falling back to characters for unsegmentable words."""
    source = scorer.source_features(src)
    words, bad = [], []
    pos = 0
    for w in sentence.split(" "):
        if w:
            try:
                z, _ = viterbi_segment(w, scorer, vocab, prefix=sentence[:pos], source=source)
                words.append([w[a:b] for a, b in zip(z, z[1:])])
            except Unsegmentable:
                words.append(list(w))
                bad.append(w)
        pos += len(w) + 1
    return words, bad


def segment_line(index: int, source: str, target: str, pass_index: int = 0):
    """Segment one sentence pair under the configured modes.

    Returns ``(source_line, target_line, unsegmentable_words)``.
    """
    cfg: PipelineConfig = _STATE["cfg"]
    encoder: BPEEncoder = _STATE["encoder"]
    src = _encode_source(encoder, source, cfg.source_mode, cfg.dropout_p, cfg.seed, pass_index, index)
    bad: list[str] = []
    mode = cfg.target_mode
    if mode == "bpe":
        tgt = encoder.sentence(target)
    elif mode == "bpe-dropout":
        rng = sentence_rng(cfg.seed, pass_index, index, stream="target")
        tgt = encoder.sentence_dropout(target, cfg.dropout_p, rng)
    else:
        # fixed mode conditions on the deterministic BPE source, whatever is emitted
        cond = encoder.sentence(source) if mode == "dpe-fixed" else src
        tgt, bad = _dpe_sentence(target, _STATE["scorer"], _STATE["vocab"], source_tokens(cond))
    return format_sentence(src, cfg.joiner), format_sentence(tgt, cfg.joiner), bad


def _segment_chunk(args):
    start, pairs, pass_index = args
    return [segment_line(start + i, s, t, pass_index) for i, (s, t) in enumerate(pairs)]


def segment_corpus(cfg: PipelineConfig, sources: list[str], targets: list[str],
                   pass_index: int = 0) -> list[tuple[str, str, list[str]]]:
    """Segment all pairs, preserving input order for any worker count."""
    if cfg.workers == 1:
        _init_segmenter(cfg)
        return [segment_line(i, s, t, pass_index) for i, (s, t) in enumerate(zip(sources, targets))]
    chunk = max(1, len(sources) // (cfg.workers * 4))
    jobs = [(i, list(zip(sources[i:i + chunk], targets[i:i + chunk])), pass_index)
            for i in range(0, len(sources), chunk)]
    out = []
    with ProcessPoolExecutor(cfg.workers, initializer=_init_segmenter, initargs=(cfg,)) as pool:
        for part in pool.map(_segment_chunk, jobs):
            out.extend(part)
    return out


def _read_pair_lines(cfg: PipelineConfig) -> tuple[list[str], list[str]]:
    pairs = read_parallel(cfg.source, cfg.target)
    return [p.source for p in pairs], [p.target for p in pairs]


def _write_segmented(results, src_path: Path, tgt_path: Path, sidecar: Path) -> int:
    write_lines(src_path, (r[0] for r in results))
    write_lines(tgt_path, (r[1] for r in results))
    bad = [(i + 1, w) for i, r in enumerate(results) for w in r[2]]
    write_lines(sidecar, (f"{i}\t{w}" for i, w in bad))
    return len(bad)


def run_stage_segment(cfg: PipelineConfig, pass_index: int = 0) -> tuple[Path, Path]:
    """Write ``source.seg``, ``target.seg`` and ``unsegmentable.tsv`` to ``cfg.output``."""
    cfg.validate("segment")
    sources, targets = _read_pair_lines(cfg)
    results = segment_corpus(cfg, sources, targets, pass_index)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    src_path, tgt_path = out / "source.seg", out / "target.seg"
    n_bad = _write_segmented(results, src_path, tgt_path, out / "unsegmentable.tsv")
    if n_bad:
        logger.warning("%d unsegmentable target words emitted per character", n_bad)
    return src_path, tgt_path


def config_hash(cfg: PipelineConfig) -> str:
    keys = ("source_mode", "target_mode", "seed", "dropout_p", "joiner", "variants")
    doc = {k: getattr(cfg, k) for k in keys}
    for name in ("source", "target", "vocab", "merges", "checkpoint"):
        path = getattr(cfg, name)
        doc[name] = _file_sha256(path) if path else None
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def run_stage_emit_training_set(cfg: PipelineConfig) -> dict:
    """Emit ``cfg.variants`` segmented copies of the corpus plus ``manifest.json``.

    Variant ``i`` redraws BPE-dropout with pass index ``i``; in on-the-fly
    mode the target is re-segmented against that draw. Re-running into the
    same directory reuses files whose recorded hashes still match and refuses
    to mix outputs of a different configuration.
    """
    cfg.validate("emit")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    chash = config_hash(cfg)
    previous = None
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text(encoding="utf-8"))
        if previous.get("config_hash") != chash:
            raise ManifestMismatch(f"{manifest_path} was written for a different configuration")

    vocab = load_vocab(cfg.vocab)
    sources, targets = _read_pair_lines(cfg)
    files = {}
    fixed_target = None
    oov: Counter = Counter()
    unsegmentable = 0
    for i in range(cfg.variants):
        src_path, tgt_path = out / f"train.{i}.src", out / f"train.{i}.tgt"
        names = (src_path.name, tgt_path.name)
        if previous and all(n in previous["files"] and (out / n).exists()
                            and _file_sha256(str(out / n)) == previous["files"][n] for n in names):
            results = None
        else:
            if cfg.target_mode == "dpe-fixed" and fixed_target is not None:
                # target does not depend on the source draw: segment only the source side
                results = segment_corpus(dataclasses.replace(cfg, target_mode="bpe"), sources, targets, i)
                results = [(r[0], t, b) for r, t, b in zip(results, fixed_target[0], fixed_target[1])]
            else:
                results = segment_corpus(cfg, sources, targets, i)
                if cfg.target_mode == "dpe-fixed":
                    fixed_target = ([r[1] for r in results], [r[2] for r in results])
            unsegmentable += _write_segmented(results, src_path, tgt_path, out / f"train.{i}.unsegmentable.tsv")
        for n in names:
            files[n] = _file_sha256(str(out / n))
            for line in read_lines(str(out / n)):
                for tok in line.split():
                    piece = tok[: -len(cfg.joiner)] if cfg.joiner and tok.endswith(cfg.joiner) else tok
                    if piece not in vocab:
                        oov[piece] += 1
    manifest = {
        "tool": "dpe",
        "tool_version": __version__,
        "config_hash": chash,
        "seeds": {"seed": cfg.seed, "passes": list(range(cfg.variants))},
        "config": {k: getattr(cfg, k) for k in ("source_mode", "target_mode", "dropout_p", "joiner",
                                                 "variants", "workers")},
        "files": files,
        "coverage": {"oov_tokens": sum(oov.values()), "oov_types": sorted(oov)},
        "unsegmentable": unsegmentable,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if oov:
        raise DPEError(f"{sum(oov.values())} emitted tokens are outside the vocabulary: "
                       f"{sorted(oov)[:10]}")
    return manifest


def verify_manifest(output: str) -> bool:
    """True when every file listed in ``manifest.json`` still has its recorded hash."""
    out = Path(output)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return all((out / n).exists() and _file_sha256(str(out / n)) == h for n, h in manifest["files"].items())


def run_analyze(cfg: PipelineConfig) -> Path:
    """Compare segmentations ``analysis_a`` and ``analysis_b`` of the raw corpus ``raw``.

    Writes ``report.tsv``, ``bands.csv`` and ``top.tsv`` into ``cfg.output``.
    """
    cfg.validate("analyze")
    report = compare_segmenters(read_lines(cfg.analysis_a), read_lines(cfg.analysis_b), read_lines(cfg.raw),
                                cfg.joiner)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
    (out / "bands.csv").write_text(report.bands_csv(), encoding="utf-8")
    rows = top_disagreements(report, cfg.top) if report.disagreements else []
    lines = ["word\tfreq\tseg_a\tseg_b"] + [f"{w}\t{f}\t{'+'.join(a)}\t{'+'.join(b)}" for w, a, b, f in rows]
    (out / "top.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out / "report.tsv"
