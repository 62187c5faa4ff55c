"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import gc
import math
import random
import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ACCEPTANCE_LINES
from dpe.bpe import BPEEncoder, DropoutConfig, DropoutStats, encode_bpe, encode_bpe_dropout, save_merges, train_bpe
from dpe.cli import main
from dpe.core import Vocabulary, load_vocab, save_vocab, strip_joiners, validate_segmentation, write_lines
from dpe.dp import log_marginal, marginal_gradient, sentence_viterbi, viterbi_segment
from dpe.lattice import enumerate_segmentations
from dpe.pipeline import PipelineConfig, _init_segmenter, run_stage_segment, segment_line
from dpe.scorer import UniformScorer, save_checkpoint
from dpe.synthetic import compositional_corpus, marker_corpus, morphology_corpus
from dpe.trainer import TrainConfig, evaluate, make_scorer, source_tokens, train
from oracles import (all_segmentations, brute_marginal, brute_viterbi, central_difference, random_direction,
                     random_loglinear, random_vocab)

N_TRIPLES = 1000


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def triple(seed):
    rng = random.Random(f"triple:{seed}")
    alphabet = rng.choice(["ab", "abc", "abcd"])
    vocab = random_vocab(rng, alphabet, rng.randint(0, 12))
    y = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
    if rng.random() < 0.15:
        scorer = UniformScorer(vocab)
    else:
        scorer = random_loglinear(vocab, rng, d=rng.randint(1, 4), window=rng.randint(0, 6),
                                  scale=rng.choice([0.3, 1.0, 3.0]), conditional=rng.random() < 0.5)
    prefix = "".join(rng.choice(alphabet + " ") for _ in range(rng.randint(0, 5)))
    source = scorer.source_features(["TOK", "x"])
    return y, vocab, scorer, prefix, source


@pytest.fixture(scope="module")
def triples():
    return [triple(s) for s in range(N_TRIPLES)]


def test_01_marginal_matches_brute_force(triples):
    start = time.perf_counter()
    worst = 0.0
    bad_enum = 0
    for y, vocab, scorer, prefix, source in triples:
        if enumerate_segmentations(y, vocab) != all_segmentations(y, vocab):
            bad_enum += 1
        lp = log_marginal(y, scorer, vocab, prefix=prefix, source=source)
        worst = max(worst, abs(lp - brute_marginal(y, scorer, vocab, prefix, source)))
    elapsed = time.perf_counter() - start
    record(1, "marginal vs brute force", worst <= 1e-9 and bad_enum == 0 and elapsed < 60,
           f"{len(triples)} triples, max |err| {worst:.2e}, enumeration mismatches {bad_enum}, {elapsed:.1f}s")


def test_02_viterbi_matches_brute_force(triples):
    exact = sum(viterbi_segment(y, s, v, prefix=p, source=src) == brute_viterbi(y, s, v, p, src)
                for y, v, s, p, src in triples)
    record(2, "viterbi vs brute force argmax", exact == len(triples), f"{exact}/{len(triples)} exact")


def test_03_cat_worked_example(cat_vocab):
    segs = enumerate_segmentations("cat", cat_vocab)
    lp = log_marginal("cat", UniformScorer(cat_vocab), cat_vocab)
    err = abs(lp - math.log(2 * 5 ** -2 + 5 ** -3))
    ok = (segs == [(0, 1, 2, 3), (0, 1, 3), (0, 2, 3)] and not validate_segmentation("cat", (0, 3), cat_vocab)
          and err <= 1e-12)
    record(3, "cat worked example", ok, f"segmentations {segs}, marginal |err| {err:.1e}")


def test_04_gradient_finite_differences():
    worst = 0.0
    for seed in range(100):
        rng = random.Random(f"grad:{seed}")
        alphabet = rng.choice(["ab", "abc", "abcd"])
        room = sum(len(alphabet) ** n for n in range(2, 5))
        vocab = random_vocab(rng, alphabet, rng.randint(0, min(32 - len(alphabet), room)))
        y = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 10)))
        scorer = random_loglinear(vocab, rng, d=rng.randint(1, 8), window=rng.randint(0, 6), hash_bits=8,
                                  conditional=rng.random() < 0.5)
        prefix = "".join(rng.choice(alphabet + " ") for _ in range(rng.randint(0, 4)))
        source = scorer.source_features(["TOK", "x"])
        grad = marginal_gradient(y, scorer, vocab, prefix=prefix, source=source)

        def f(p):
            return log_marginal(y, scorer.with_params(p), vocab, prefix=prefix, source=source)

        an, fd = [], []
        for _ in range(3):
            direction = random_direction(scorer.params, grad.W, rng)
            an.append(grad.dot(direction))
            fd.append(central_difference(f, scorer.params, direction, 1e-5))
        an, fd = np.array(an), np.array(fd)
        worst = max(worst, float(np.linalg.norm(an - fd) / np.linalg.norm(an)))
    record(4, "gradient vs central differences", worst <= 1e-4, f"100 configs, max rel err {worst:.2e}")


def test_05_bpe_dropout():
    rng = random.Random("fuzz")
    alphabet = "abcdefgh"
    words = ["".join(rng.choice(alphabet[:rng.randint(2, 8)]) for _ in range(rng.randint(1, 14)))
             for _ in range(10_000)]
    merges, vocab = train_bpe(Counter(words), 200)
    p0 = DropoutConfig(0.0)
    p1 = DropoutConfig(1.0)
    same = sum(encode_bpe_dropout(w, merges, p0, vocab, random.Random(i)) == encode_bpe(w, merges, vocab)
               for i, w in enumerate(words))
    chars = sum(encode_bpe_dropout(w, merges, p1, vocab, random.Random(i)) == tuple(range(len(w) + 1))
                for i, w in enumerate(words))
    stats = DropoutStats()
    cfg = DropoutConfig(0.05)
    draw_rng = random.Random("draws")
    for i in range(10_000):
        encode_bpe_dropout(words[i % len(words)], merges, cfg, vocab, draw_rng, stats)
    n = stats.opportunities
    sigma = math.sqrt(n * 0.05 * 0.95)
    z = (stats.dropped - n * 0.05) / sigma
    ok = same == len(words) and chars == len(words) and abs(z) <= 3
    record(5, "BPE-dropout", ok, f"p=0 identical {same}/{len(words)}, p=1 per-char {chars}/{len(words)}, "
           f"drop rate {stats.dropped / n:.4f} over {n} opportunities (z={z:+.2f})")


# round trip

@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance-toy")
    mc = morphology_corpus(n_stems=15, reps=1, seed=11)
    # irregular whitespace exercises normalization
    write_lines(root / "train.src", ("  " + p.source.replace(" ", " \t ") for p in mc.train))
    write_lines(root / "train.tgt", (p.target + "   " for p in mc.train))
    merges, vocab = train_bpe(mc.bpe_counts, 70)
    save_vocab(vocab, root / "vocab.txt")
    save_merges(merges, root / "merges.txt")
    cfg = TrainConfig(epochs=1, dim=4, grad_accumulation=4)
    params, _ = train(mc.train, vocab, merges, cfg)
    save_checkpoint(root / "model.json", params, cfg.features, vocab, mode=cfg.mode)
    return root, dict(source=str(root / "train.src"), target=str(root / "train.tgt"), vocab=str(root / "vocab.txt"),
                      merges=str(root / "merges.txt"), checkpoint=str(root / "model.json"))


MODES = ["bpe", "bpe-dropout", "dpe-fixed", "dpe-on-the-fly"]
_ROUND_TRIP = {"checked": 0, "passed": 0, "sentences": 0}


def _raw_normalized(path):
    with open(path, encoding="utf-8") as f:
        return [" ".join(line.split()) for line in f]


@pytest.mark.parametrize("mode", MODES)
def test_06a_segmented_corpus_round_trip(toy_files, tmp_path, mode):
    _, files = toy_files
    run_stage_segment(PipelineConfig(**files, output=str(tmp_path), target_mode=mode, dropout_p=0.3))
    for side, raw in (("source.seg", files["source"]), ("target.seg", files["target"])):
        _ROUND_TRIP["checked"] += 1
        with open(tmp_path / side, encoding="utf-8") as f:
            got = [strip_joiners(line.rstrip("\n")) for line in f]
        assert got == _raw_normalized(raw)
        _ROUND_TRIP["passed"] += 1


@settings(max_examples=200)
@given(st.data(), st.sampled_from(MODES), st.sampled_from(["@@", "##", "+"]))
def test_06b_round_trip_property(toy_files, data, mode, joiner):
    _, files = toy_files
    chars = sorted(load_vocab(files["vocab"]).chars())
    lower = "".join(c for c in chars if c.islower())
    upper = "".join(c for c in chars if c.isupper())
    words = st.text(alphabet=lower, min_size=1, max_size=10)
    sentences = data.draw(st.lists(st.lists(words, min_size=1, max_size=5), min_size=1, max_size=6))
    _init_segmenter(PipelineConfig(**files, output="unused", target_mode=mode, dropout_p=0.4, joiner=joiner))
    for i, ws in enumerate(sentences):
        target = " ".join(ws)
        source = " ".join(data.draw(st.text(alphabet=upper, min_size=1, max_size=8)) for _ in ws)
        _ROUND_TRIP["checked"] += 1
        src_line, tgt_line, _ = segment_line(i, source, target)
        assert strip_joiners(tgt_line, joiner) == target
        assert strip_joiners(src_line, joiner) == source
        _ROUND_TRIP["passed"] += 1
        _ROUND_TRIP["sentences"] += 1


def test_06_round_trip_summary():
    failed = _ROUND_TRIP["checked"] - _ROUND_TRIP["passed"]
    corpora = _ROUND_TRIP["checked"] - _ROUND_TRIP["sentences"] - failed
    record(6, "joiner round trip", failed == 0 and corpora == 2 * len(MODES) and _ROUND_TRIP["sentences"] > 0,
           f"{corpora} segmented corpus files and {_ROUND_TRIP['sentences']} generated sentences, "
           f"{failed} failures")


def _split(pairs, n_train):
    return pairs[:n_train], pairs[n_train:]


def _bpe_for(pairs, size):
    counts = Counter()
    for p in pairs:
        counts.update(p.source.split())
        counts.update(p.target.split())
    return train_bpe(counts, size)


def test_07_training_signal():
    train_set, held = _split(compositional_corpus(260, seed=0), 200)
    merges, vocab = _bpe_for(train_set, 300)
    enc = BPEEncoder(merges, vocab)
    cfg = TrainConfig(epochs=5, grad_accumulation=4, seed=0)
    baseline = evaluate(held, UniformScorer(vocab), vocab, enc)
    params, report = train(train_set, vocab, merges, cfg, heldout=held)
    trained = report.heldout_loss[-1]

    m_train, m_held = _split(marker_corpus(260, seed=0), 200)
    m_merges, m_vocab = _bpe_for(m_train, 150)
    m_enc = BPEEncoder(m_merges, m_vocab)
    losses = {}
    for mode in ("conditional", "lm"):
        mcfg = TrainConfig(epochs=5, grad_accumulation=4, seed=0, mode=mode)
        p, _ = train(m_train, m_vocab, m_merges, mcfg)
        losses[mode] = evaluate(m_held, make_scorer(m_vocab, mcfg, p), m_vocab, m_enc)
    ok = trained < baseline and report.heldout_loss[0] == pytest.approx(baseline, abs=1e-12) \
        and losses["conditional"] < losses["lm"]
    record(7, "training signal", ok,
           f"held-out nats/char uniform {baseline:.4f} -> trained {trained:.4f}; "
           f"marker corpus conditional {losses['conditional']:.4f} vs lm {losses['lm']:.4f}")


def test_08_dpe_finds_morpheme_boundaries():
    mc = morphology_corpus(n_stems=40, reps=2, seed=0, skew=50)
    merges, vocab = train_bpe(mc.bpe_counts, 150)
    enc = BPEEncoder(merges, vocab)
    cfg = TrainConfig(epochs=5, grad_accumulation=4, seed=0)
    params, _ = train(mc.train, vocab, merges, cfg)
    scorer = make_scorer(vocab, cfg, params)
    at_boundary = disagree = 0
    for pair, (stem, _) in zip(mc.heldout, mc.heldout_forms):
        (dpe,) = sentence_viterbi(pair.target, scorer, vocab, source_tokens(enc.sentence(pair.source)))
        bpe = enc.word(pair.target)
        cuts = {sum(len(x) for x in dpe[:i]) for i in range(len(dpe) + 1)}
        at_boundary += len(stem) in cuts
        disagree += dpe != bpe
    n = len(mc.heldout)
    ok = at_boundary / n >= 0.90 and disagree / n >= 0.30
    record(8, "DPE morpheme boundaries", ok,
           f"DPE at boundary {at_boundary}/{n} ({at_boundary / n:.1%}), BPE disagrees {disagree}/{n} "
           f"({disagree / n:.1%})")


def test_09_linear_runtime():
    entries = ["a", "b"] + sorted({"".join("ab"[i] for i in t) for n in range(2, 5)
                                   for t in np.ndindex(*(2,) * n)})
    vocab = Vocabulary.from_entries(entries)
    rng = random.Random(9)
    scorer = random_loglinear(vocab, rng, d=4, window=4, hash_bits=10)
    lengths = [100, 200, 400, 800, 1200, 1600, 2400, 3200]
    text = "".join(rng.choice("ab") for _ in range(max(lengths)))
    log_marginal(text[:200], scorer, vocab)  # fill the row cache
    # process CPU time, in interleaved rounds so that a burst of machine load hits every
    # length alike; short strings are timed in batches so every sample spans similar time
    times = [math.inf] * len(lengths)
    gc.collect()
    gc.disable()
    try:
        for _ in range(25):
            for i, T in enumerate(lengths):
                reps = max(lengths) // T
                y = text[:T]
                t0 = time.process_time()
                for _ in range(reps):
                    log_marginal(y, scorer, vocab)
                times[i] = min(times[i], (time.process_time() - t0) / reps)
    finally:
        gc.enable()
    x, y = np.array(lengths, float), np.array(times)
    slope, intercept = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (slope * x + intercept)) ** 2) / np.sum((y - y.mean()) ** 2)
    record(9, "linear runtime in T", r2 >= 0.98,
           f"R^2 {r2:.4f}, {slope * 1e6:.2f} us/char at m={vocab.max_len}; "
           + " ".join(f"T={T}:{t * 1e3:.2f}ms" for T, t in zip(lengths, times)))


def _full_run(root, data):
    out = root
    common = ["--source", str(data / "s"), "--target", str(data / "t"), "--seed", "3"]
    files = ["--vocab", str(out / "bpe" / "vocab.txt"), "--merges", str(out / "bpe" / "merges.txt")]
    ckpt = ["--checkpoint", str(out / "model.json")]
    assert main(["train-bpe", *common, "--vocab-size", "80", "-o", str(out / "bpe")]) == 0
    assert main(["train-scorer", *common, *files, *ckpt, "--epochs", "2", "--dim", "4",
                 "--grad-accumulation", "4"]) == 0
    assert main(["segment", *common, *files, *ckpt, "--mode", "dpe-fixed", "-o", str(out / "fixed")]) == 0
    assert main(["segment", *common, *files, *ckpt, "--mode", "bpe", "-o", str(out / "bpe-seg")]) == 0
    assert main(["emit", *common, *files, *ckpt, "--variants", "2", "--workers", "2", "-o", str(out / "emit")]) == 0
    assert main(["analyze", "--a", str(out / "bpe-seg" / "target.seg"), "--b", str(out / "fixed" / "target.seg"),
                 "--raw", str(data / "t"), "-o", str(out / "report")]) == 0


def test_10_determinism(tmp_path):
    mc = morphology_corpus(n_stems=15, reps=1, seed=4)
    data = tmp_path / "data"
    data.mkdir()
    write_lines(data / "s", (p.source for p in mc.train))
    write_lines(data / "t", (p.target for p in mc.train))
    for run in ("r1", "r2"):
        _full_run(tmp_path / run, data)
    rels = sorted(p.relative_to(tmp_path / "r1") for p in (tmp_path / "r1").rglob("*")
                  if p.is_file() and p.suffix != ".log")
    differing = [str(r) for r in rels if (tmp_path / "r1" / r).read_bytes() != (tmp_path / "r2" / r).read_bytes()]
    record(10, "determinism", not differing and len(rels) > 10,
           f"{len(rels)} artifacts compared, {len(differing)} differ {differing[:3]}")
