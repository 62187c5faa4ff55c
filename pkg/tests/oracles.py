"""Independent reference computations used as test oracles.

Nothing here calls into dpe.dp or dpe.lattice.build_lattice.
"""

import itertools
import math
import random
import zlib
from collections import Counter

import numpy as np
from scipy.special import logsumexp

from dpe.core import Vocabulary
from dpe.scorer import FeatureConfig, LogLinearScorer, ScorerParams


def all_segmentations(y, vocab):
    """Every way to place cuts between characters, filtered by vocabulary membership."""
    T = len(y)
    out = []
    for mask in itertools.product((0, 1), repeat=max(T - 1, 0)):
        z = [0] + [i + 1 for i, bit in enumerate(mask) if bit] + [T] if T else [0]
        if all(y[a:b] in vocab for a, b in zip(z, z[1:])):
            out.append(tuple(z))
    return sorted(out)


def joint_log_prob(y, z, scorer, vocab, prefix="", source=()):
    window = scorer.features.window
    s = 0.0
    for a, b in zip(z, z[1:]):
        ctx_text = (prefix + y[:a])[-window:] if window else ""
        s = s + scorer.log_prob(scorer.context(ctx_text, source), vocab.id(y[a:b]))
    return s


def brute_marginal(y, scorer, vocab, prefix="", source=()):
    zs = all_segmentations(y, vocab)
    if not zs:
        return -math.inf
    return float(logsumexp([joint_log_prob(y, z, scorer, vocab, prefix, source) for z in zs]))


def brute_viterbi(y, scorer, vocab, prefix="", source=()):
    """Argmax; ties go to the smallest last cut, then the smallest cut before it, and so on."""
    scored = [(joint_log_prob(y, z, scorer, vocab, prefix, source), z) for z in all_segmentations(y, vocab)]
    best = max(s for s, _ in scored)
    z = min((z for s, z in scored if s == best), key=lambda z: tuple(reversed(z)))
    return z, best


def reference_feature_keys(window, max_order=4):
    keys = Counter(["<bias>"])
    for n in range(1, max_order + 1):
        if len(window) >= n:
            keys["s%d:%s" % (n, window[len(window) - n:])] += 1
        grams = ["".join(t) for t in zip(*(window[i:] for i in range(n)))]
        for g in grams:
            keys["b%d:%s" % (n, g)] += 1
    return keys


def reference_hashed(keys, cfg=FeatureConfig()):
    out = Counter()
    for k, c in keys.items():
        out[zlib.crc32(k.encode("utf-8"), cfg.hash_seed) % (1 << cfg.hash_bits)] += c
    return dict(out)


def random_vocab(rng, alphabet, n_extra, max_len=4):
    entries = list(alphabet)
    while len(entries) < len(alphabet) + n_extra:
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(2, max_len)))
        if s not in entries:
            entries.append(s)
    rng.shuffle(entries)
    return Vocabulary.from_entries(entries)


def random_loglinear(vocab, rng, d=4, window=4, scale=0.7, hash_bits=10, conditional=True):
    """Log-linear scorer with random weights on every feature row it can touch."""
    cfg = FeatureConfig(hash_bits=hash_bits, window=window, conditional=conditional)
    nprng = np.random.default_rng(rng.randrange(2 ** 32))
    params = ScorerParams(nprng.normal(0, scale, (len(vocab), d)), nprng.normal(0, scale, len(vocab)), {})
    for k in range(1 << hash_bits):
        params.W[k] = nprng.normal(0, scale, d)
    return LogLinearScorer(vocab, params, cfg)


def random_direction(params, keys, rng):
    nprng = np.random.default_rng(rng.randrange(2 ** 32))
    return ScorerParams(nprng.normal(size=params.e.shape), nprng.normal(size=params.b.shape),
                        {k: nprng.normal(size=params.d) for k in sorted(keys)})


def shifted(params, direction, h):
    out = params.copy()
    out.e = out.e + h * direction.e
    out.b = out.b + h * direction.b
    for k, v in direction.W.items():
        out.W[k] = out.W.get(k, np.zeros(params.d)) + h * v
    return out


def central_difference(fn, params, direction, h):
    return (fn(shifted(params, direction, h)) - fn(shifted(params, direction, -h))) / (2 * h)


def random_string(rng, alphabet, n):
    return "".join(rng.choice(alphabet) for _ in range(n))


def seeded(seed):
    return random.Random(seed)
