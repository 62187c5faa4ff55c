"""Next-subword scorers p(w | target character prefix, source).

Every scorer conditions on characters of the target prefix only, never on how
that prefix was segmented; this is what lets the dynamic programs in
:mod:`dpe.dp` factor over lattice positions.
"""

from __future__ import annotations

import json
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .core import DPEError, Vocabulary
from .logmath import log_softmax

CHECKPOINT_FORMAT = "dpe-scorer"
CHECKPOINT_VERSION = 1
BIAS_KEY = "<bias>"

Features = tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class FeatureConfig:
    hash_bits: int = 18
    hash_seed: int = 0x5EED
    window: int = 8
    max_order: int = 4
    conditional: bool = True

    @property
    def hash_dim(self) -> int:
        return 1 << self.hash_bits


@dataclass(frozen=True)
class ScorerContext:
    """Cache key and feature vector for one prediction.

    ``window`` holds the last ``FeatureConfig.window`` characters of the
    target prefix; ``features`` is the sorted sparse vector built from the
    window and the source tokens.
    """

    window: str
    source: Features = ()
    features: Features = ()


def hash_feature(key: str, cfg: FeatureConfig) -> int:
    return zlib.crc32(key.encode("utf-8"), cfg.hash_seed) & (cfg.hash_dim - 1)


def target_feature_keys(window: str, max_order: int) -> list[str]:
    """Unhashed target-side feature names for a context window.

    Two families: n-grams anchored at the end of the window (``s<n>:``), and
    the bag of all n-grams inside the window (``b<n>:``), for n in
    ``1..max_order``.
    """
    keys = [BIAS_KEY]
    T = len(window)
    for n in range(1, min(max_order, T) + 1):
        keys.append(f"s{n}:{window[T - n:]}")
    for n in range(1, min(max_order, T) + 1):
        for i in range(T - n + 1):
            keys.append(f"b{n}:{window[i:i + n]}")
    return keys


def _accumulate(keys, cfg: FeatureConfig, acc: dict[int, float]) -> None:
    for k in keys:
        h = hash_feature(k, cfg)
        acc[h] = acc.get(h, 0.0) + 1.0


def source_features(source_tokens: Sequence[str], cfg: FeatureConfig) -> Features:
    if not cfg.conditional:
        return ()
    acc: dict[int, float] = {}
    _accumulate((f"x:{t}" for t in source_tokens), cfg, acc)
    return tuple(sorted(acc.items()))


def featurize_context(target_prefix: str, source_tokens: Sequence[str] = (),
                      cfg: FeatureConfig = FeatureConfig(), *,
                      source: Features | None = None) -> ScorerContext:
    """Build the sparse context vector for predicting the next subword.

    ``source`` may carry already-hashed source features to skip recomputing
    them per position.
    """
    window = target_prefix[-cfg.window:] if cfg.window > 0 else ""
    if source is None:
        source = source_features(source_tokens, cfg)
    acc: dict[int, float] = {}
    _accumulate(target_feature_keys(window, cfg.max_order), cfg, acc)
    for h, v in source:
        acc[h] = acc.get(h, 0.0) + v
    return ScorerContext(window, source, tuple(sorted(acc.items())))


@dataclass
class ScorerParams:
    """Log-linear scorer weights.

    ``logit(w) = f . e[w] + b[w]`` with ``f = sum_i x_i W[i]`` over the sparse
    context features ``x``. ``W`` maps hashed feature ids to ``d``-vectors;
    absent rows are zero.
    """

    e: np.ndarray
    b: np.ndarray
    W: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.e.shape[1]

    @classmethod
    def zeros(cls, vocab_size: int, d: int) -> ScorerParams:
        if d < 1:
            raise ValueError("embedding width must be >= 1")
        return cls(np.zeros((vocab_size, d)), np.zeros(vocab_size), {})

    @classmethod
    def init(cls, vocab_size: int, d: int, seed: int = 0, scale: float = 0.1) -> ScorerParams:
        """Uniform-predicting start point: random ``e``, zero ``W`` and ``b``.

        With ``W = 0`` the context vector is zero, so every row is exactly
        uniform, but the gradient with respect to ``W`` is not (unlike the
        all-zero point, which is a saddle of the bilinear form).
        """
        p = cls.zeros(vocab_size, d)
        rng = np.random.default_rng(seed)
        p.e = rng.normal(0.0, scale, size=(vocab_size, d))
        return p

    def copy(self) -> ScorerParams:
        return ScorerParams(self.e.copy(), self.b.copy(), {k: v.copy() for k, v in self.W.items()})

    def add_(self, grad: ScorerGrad, scale: float = 1.0) -> None:
        self.e += scale * grad.e
        self.b += scale * grad.b
        d = self.d
        for k, v in grad.W.items():
            row = self.W.get(k)
            if row is None:
                row = self.W[k] = np.zeros(d)
            row += scale * v

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.e).all() and np.isfinite(self.b).all()
                    and all(np.isfinite(v).all() for v in self.W.values()))

    def equals(self, other: ScorerParams) -> bool:
        if not (np.array_equal(self.e, other.e) and np.array_equal(self.b, other.b)):
            return False
        keys = {k for k, v in self.W.items() if v.any()} | {k for k, v in other.W.items() if v.any()}
        d = self.d
        zero = np.zeros(d)
        return all(np.array_equal(self.W.get(k, zero), other.W.get(k, zero)) for k in keys)


@dataclass
class ScorerGrad:
    """Gradient with the same layout as :class:`ScorerParams` (``W`` sparse)."""

    e: np.ndarray
    b: np.ndarray
    W: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: ScorerParams) -> ScorerGrad:
        return cls(np.zeros_like(params.e), np.zeros_like(params.b), {})

    def add_(self, other: ScorerGrad, scale: float = 1.0) -> ScorerGrad:
        self.e += scale * other.e
        self.b += scale * other.b
        for k in sorted(other.W):
            v = other.W[k]
            row = self.W.get(k)
            if row is None:
                self.W[k] = scale * v
            else:
                row += scale * v
        return self

    def scale_(self, s: float) -> ScorerGrad:
        self.e *= s
        self.b *= s
        for v in self.W.values():
            v *= s
        return self

    def norm(self) -> float:
        sq = float((self.e ** 2).sum() + (self.b ** 2).sum())
        sq += sum(float((v ** 2).sum()) for v in self.W.values())
        return math.sqrt(sq)

    def dot(self, direction: ScorerParams) -> float:
        total = float((self.e * direction.e).sum() + (self.b * direction.b).sum())
        for k, v in self.W.items():
            other = direction.W.get(k)
            if other is not None:
                total += float(v @ other)
        return total


class Scorer:
    """Base class: subclasses implement :meth:`logits_row` or :meth:`row`."""

    trainable = False

    def __init__(self, vocab: Vocabulary, features: FeatureConfig = FeatureConfig()):
        self.vocab = vocab
        self.features = features

    def source_features(self, source_tokens: Sequence[str]) -> Features:
        return ()

    def context(self, prefix: str, source: Features = ()) -> Hashable:
        return ScorerContext(prefix[-self.features.window:] if self.features.window else "", source)

    def row(self, ctx) -> np.ndarray:
        raise NotImplementedError

    def log_prob(self, ctx, w: int) -> float:
        return float(self.row(ctx)[w])

    def log_prob_grad(self, ctx, w: int) -> ScorerGrad | None:
        return None

    def backward(self, contexts, logit_grads, out: ScorerGrad) -> None:
        """Accumulate the chain rule for ``d(objective)/d(logits)`` rows into ``out``."""

    def clear_cache(self) -> None:
        pass


class UniformScorer(Scorer):
    def __init__(self, vocab: Vocabulary, features: FeatureConfig = FeatureConfig()):
        super().__init__(vocab, features)
        self._row = np.full(len(vocab), -math.log(len(vocab)))

    def row(self, ctx) -> np.ndarray:
        return self._row


class UnigramScorer(Scorer):
    """Context-free scorer from subword counts with add-``smoothing``."""

    def __init__(self, vocab: Vocabulary, counts: Mapping[str, float], smoothing: float = 0.0,
                 features: FeatureConfig = FeatureConfig()):
        super().__init__(vocab, features)
        c = np.array([float(counts.get(s, 0.0)) + smoothing for s in vocab.entries])
        total = c.sum()
        if total <= 0:
            raise DPEError("unigram counts sum to zero")
        with np.errstate(divide="ignore"):
            self._row = np.log(c) - math.log(total)

    def row(self, ctx) -> np.ndarray:
        return self._row


class LogLinearScorer(Scorer):
    """Hashed-feature log-linear model over the full subword vocabulary.

    Rows are cached per context; the cache is dropped whenever the parameters
    change through :meth:`update`.
    """

    trainable = True
    max_cache = 500_000

    def __init__(self, vocab: Vocabulary, params: ScorerParams,
                 features: FeatureConfig = FeatureConfig()):
        super().__init__(vocab, features)
        if params.e.shape[0] != len(vocab) or params.b.shape != (len(vocab),):
            raise DPEError(f"parameter shapes {params.e.shape} do not match |V|={len(vocab)}")
        self.params = params
        self._cache: dict[ScorerContext, tuple[np.ndarray, np.ndarray]] = {}
        self._feat_cache: dict[tuple[str, Features], ScorerContext] = {}

    @property
    def conditional(self) -> bool:
        return self.features.conditional

    def source_features(self, source_tokens: Sequence[str]) -> Features:
        return source_features(source_tokens, self.features)

    def context(self, prefix: str, source: Features = ()) -> ScorerContext:
        cfg = self.features
        window = prefix[-cfg.window:] if cfg.window > 0 else ""
        key = (window, source)
        ctx = self._feat_cache.get(key)
        if ctx is None:
            ctx = featurize_context(window, cfg=cfg, source=source)
            if len(self._feat_cache) >= self.max_cache:
                self._feat_cache.clear()
            self._feat_cache[key] = ctx
        return ctx

    def context_vector(self, ctx: ScorerContext) -> np.ndarray:
        f = np.zeros(self.params.d)
        W = self.params.W
        for i, v in ctx.features:
            row = W.get(i)
            if row is not None:
                f += v * row
        return f

    def _forward(self, ctx: ScorerContext) -> tuple[np.ndarray, np.ndarray]:
        hit = self._cache.get(ctx)
        if hit is None:
            f = self.context_vector(ctx)
            logits = self.params.e @ f + self.params.b
            hit = (log_softmax(logits), f)
            if len(self._cache) >= self.max_cache:
                self._cache.clear()
            self._cache[ctx] = hit
        return hit

    def row(self, ctx: ScorerContext) -> np.ndarray:
        return self._forward(ctx)[0]

    def log_prob_grad(self, ctx: ScorerContext, w: int) -> ScorerGrad:
        logp, _ = self._forward(ctx)
        g = -np.exp(logp)
        g[w] += 1.0
        out = ScorerGrad.zeros_like(self.params)
        self.backward([ctx], g[None, :], out)
        return out

    def backward(self, contexts, logit_grads, out: ScorerGrad) -> None:
        G = np.asarray(logit_grads)
        F = np.stack([self._forward(c)[1] for c in contexts])
        out.b += G.sum(axis=0)
        out.e += G.T @ F
        dF = G @ self.params.e
        d = self.params.d
        for ctx, df in zip(contexts, dF):
            for i, v in ctx.features:
                row = out.W.get(i)
                if row is None:
                    row = out.W[i] = np.zeros(d)
                row += v * df

    def update(self, grad: ScorerGrad, scale: float) -> None:
        self.params.add_(grad, scale)
        self._cache.clear()

    def clear_cache(self) -> None:
        self._cache.clear()

    def with_params(self, params: ScorerParams) -> LogLinearScorer:
        return LogLinearScorer(self.vocab, params, self.features)


def save_checkpoint(path: str | os.PathLike, params: ScorerParams, features: FeatureConfig,
                    vocab: Vocabulary, mode: str = "conditional", extra: Mapping | None = None) -> None:
    """Write parameters as JSON. Floats are emitted with ``repr`` so loading is bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": mode,
        "d": params.d,
        "vocab_size": len(vocab),
        "vocab_crc32": zlib.crc32("\n".join(vocab.entries).encode("utf-8")),
        "features": {
            "hash_bits": features.hash_bits,
            "hash_seed": features.hash_seed,
            "window": features.window,
            "max_order": features.max_order,
            "conditional": features.conditional,
        },
        "extra": dict(extra or {}),
        "e": params.e.tolist(),
        "b": params.b.tolist(),
        "W": {str(k): params.W[k].tolist() for k in sorted(params.W) if params.W[k].any()},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path: str | os.PathLike, vocab: Vocabulary | None = None):
    """Return ``(params, features, meta)``; ``meta`` holds mode and extra fields."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise DPEError(f"{path}: not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} checkpoint")
    if vocab is not None:
        crc = zlib.crc32("\n".join(vocab.entries).encode("utf-8"))
        if doc["vocab_size"] != len(vocab) or doc["vocab_crc32"] != crc:
            raise DPEError(f"{path}: checkpoint was trained with a different vocabulary")
    d = doc["d"]
    e = np.array(doc["e"], dtype=np.float64).reshape(doc["vocab_size"], d)
    b = np.array(doc["b"], dtype=np.float64)
    W = {int(k): np.array(v, dtype=np.float64) for k, v in doc["W"].items()}
    features = FeatureConfig(**doc["features"])
    meta = {"mode": doc["mode"], "extra": doc.get("extra", {})}
    return ScorerParams(e, b, W), features, meta
