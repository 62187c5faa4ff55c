"""Time log_marginal against string length and report a linear fit.

    python scripts/complexity.py --max-len 4
"""

import argparse
import gc
import itertools
import random
import time

import numpy as np

from dpe.core import Vocabulary
from dpe.dp import log_marginal
from dpe.scorer import FeatureConfig, LogLinearScorer, ScorerParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-len", type=int, default=4, help="longest vocabulary entry (m)")
    ap.add_argument("--rounds", type=int, default=15)
    args = ap.parse_args()

    entries = ["".join(t) for n in range(1, args.max_len + 1) for t in itertools.product("ab", repeat=n)]
    vocab = Vocabulary.from_entries(entries)
    rng = np.random.default_rng(0)
    params = ScorerParams(rng.normal(size=(len(vocab), 4)), np.zeros(len(vocab)), {})
    cfg = FeatureConfig(hash_bits=10, window=4)
    for k in range(1 << cfg.hash_bits):
        params.W[k] = rng.normal(size=4)
    scorer = LogLinearScorer(vocab, params, cfg)

    lengths = [100, 200, 400, 800, 1200, 1600, 2400, 3200]
    pick = random.Random(0)
    text = "".join(pick.choice("ab") for _ in range(max(lengths)))
    log_marginal(text[:200], scorer, vocab)
    best = [float("inf")] * len(lengths)
    gc.disable()
    for _ in range(args.rounds):
        for i, T in enumerate(lengths):
            t0 = time.perf_counter()
            log_marginal(text[:T], scorer, vocab)
            best[i] = min(best[i], time.perf_counter() - t0)
    gc.enable()
    x, y = np.array(lengths, float), np.array(best)
    slope, intercept = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - slope * x - intercept) ** 2) / np.sum((y - y.mean()) ** 2)
    for T, t in zip(lengths, best):
        print(f"T={T:<6d}{t * 1e3:8.2f} ms")
    print(f"m={vocab.max_len}  slope={slope * 1e6:.2f} us/char  R^2={r2:.4f}")


if __name__ == "__main__":
    main()
