"""Small scalar helpers shared across modules."""

import math

import numpy as np

NEG_INF = -math.inf
LOG_2PI = math.log(2.0 * math.pi)


def logsumexp(values):
    """Log of the sum of exponentials of an iterable of floats."""
    values = list(values)
    if not values:
        return NEG_INF
    m = max(values)
    if m == NEG_INF:
        return NEG_INF
    if m == math.inf:
        return math.inf
    return m + math.log(sum(math.exp(v - m) for v in values))


def log_mean_exp(values):
    values = list(values)
    return logsumexp(values) - math.log(len(values))


def logsumexp_array(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return NEG_INF
    m = np.max(a)
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.sum(np.exp(a - m))))


def sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def logit(p):
    return math.log(p) - math.log1p(-p)


def softmax(logits):
    logits = np.asarray(logits, dtype=float)
    e = np.exp(logits - np.max(logits))
    return e / e.sum()
