import math

import numpy as np

NEG_INF = float("-inf")


def logsumexp(values) -> float:
    """log(sum(exp(v))) with max subtraction; empty input gives -inf."""
    if not values:
        return NEG_INF
    hi = max(values)
    if hi == NEG_INF:
        return NEG_INF
    if hi == math.inf:
        return math.inf
    return hi + math.log(math.fsum(math.exp(v - hi) for v in values))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - math.log(np.exp(shifted).sum())
