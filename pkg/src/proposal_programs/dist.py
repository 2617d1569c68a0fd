"""Primitive distributions.

Each distribution samples from a ``random.Random`` stream, evaluates its log
density (``-inf`` outside the support) and returns score-function partials
with respect to its own parameters.  ``normal`` and ``cauchy`` take a scale
(standard deviation), not a variance; ``gamma`` is shape-scale.
"""

import math

import numpy as np

from ._math import LOG_2PI, NEG_INF
from .core import is_real
from .errors import DomainError, InvalidParams, NonEnumerable, OutOfSupport

LOG_PI = math.log(math.pi)


def digamma(x):
    """Digamma function for ``x > 0`` by upward recurrence and the asymptotic series."""
    if not x > 0:
        raise DomainError(f"digamma is defined here for x > 0, got {x}")
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1 / 12 - inv2 * (1 / 120 - inv2 * (1 / 252 - inv2 * (1 / 240 - inv2 * (1 / 132)))))
    return acc + math.log(x) - 0.5 * inv - series


class Distribution:
    discrete = False

    def sample(self, rng):
        raise NotImplementedError

    def log_density(self, v):
        raise NotImplementedError

    def grad_log_density(self, v):
        raise NotImplementedError

    def support(self):
        """Values with nonzero probability, for enumeration."""
        raise NonEnumerable(f"{type(self).__name__} has no finite support")

    def _check_support(self, v):
        if self.log_density(v) == NEG_INF:
            raise OutOfSupport(f"{v!r} is outside the support of {self!r}")


class Bernoulli(Distribution):
    __slots__ = ("p",)
    discrete = True

    def __init__(self, p, validate=True):
        if validate and not 0.0 <= p <= 1.0:
            raise InvalidParams(f"bernoulli p must lie in [0, 1], got {p}")
        self.p = float(p)

    def sample(self, rng):
        return rng.random() < self.p

    def log_density(self, v):
        if type(v) is not bool:
            return NEG_INF
        q = self.p if v else 1.0 - self.p
        return math.log(q) if q > 0.0 else NEG_INF

    def grad_log_density(self, v):
        self._check_support(v)
        return {"p": 1.0 / self.p if v else -1.0 / (1.0 - self.p)}

    def support(self):
        return [v for v in (False, True) if self.log_density(v) > NEG_INF]

    def __repr__(self):
        return f"bernoulli({self.p})"


class Categorical(Distribution):
    """Distribution over indices ``0..len(probs)-1``."""

    __slots__ = ("probs",)
    discrete = True

    def __init__(self, probs, validate=True):
        probs = np.asarray(probs, dtype=float)
        if validate:
            if probs.ndim != 1 or probs.size == 0:
                raise InvalidParams("categorical probs must be a nonempty vector")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise InvalidParams(f"categorical probs must be nonnegative and sum to 1, got {probs}")
        self.probs = probs

    def sample(self, rng):
        u = rng.random()
        acc = 0.0
        last = 0
        for i, p in enumerate(self.probs):
            if p > 0.0:
                acc += p
                last = i
                if u < acc:
                    return i
        return last

    def log_density(self, v):
        if type(v) is not int or not 0 <= v < len(self.probs):
            return NEG_INF
        p = self.probs[v]
        return math.log(p) if p > 0.0 else NEG_INF

    def grad_log_density(self, v):
        self._check_support(v)
        g = np.zeros(len(self.probs))
        g[v] = 1.0 / self.probs[v]
        return {"probs": g}

    def support(self):
        return [i for i, p in enumerate(self.probs) if p > 0.0]

    def __repr__(self):
        return f"categorical({list(self.probs)})"


class UniformDiscrete(Distribution):
    """Uniform over the integers ``lo..hi`` inclusive."""

    __slots__ = ("lo", "hi")
    discrete = True

    def __init__(self, lo, hi):
        if int(lo) != lo or int(hi) != hi or hi < lo:
            raise InvalidParams(f"uniform_discrete needs integers lo <= hi, got {lo}, {hi}")
        self.lo, self.hi = int(lo), int(hi)

    def sample(self, rng):
        return rng.randint(self.lo, self.hi)

    def log_density(self, v):
        if type(v) is not int or not self.lo <= v <= self.hi:
            return NEG_INF
        return -math.log(self.hi - self.lo + 1)

    def grad_log_density(self, v):
        self._check_support(v)
        return {}

    def support(self):
        return list(range(self.lo, self.hi + 1))

    def __repr__(self):
        return f"uniform_discrete({self.lo}, {self.hi})"


class Normal(Distribution):
    __slots__ = ("mean", "stddev")

    def __init__(self, mean, stddev, validate=True):
        if validate and not stddev > 0:
            raise InvalidParams(f"normal stddev must be positive, got {stddev}")
        self.mean, self.stddev = float(mean), float(stddev)

    def sample(self, rng):
        return rng.gauss(self.mean, self.stddev)

    def log_density(self, v):
        if not is_real(v):
            return NEG_INF
        r = (v - self.mean) / self.stddev
        return -0.5 * r * r - math.log(self.stddev) - 0.5 * LOG_2PI

    def grad_log_density(self, v):
        self._check_support(v)
        d = v - self.mean
        s2 = self.stddev * self.stddev
        return {"mean": d / s2, "stddev": -1.0 / self.stddev + d * d / (s2 * self.stddev)}

    def __repr__(self):
        return f"normal({self.mean}, {self.stddev})"


class Cauchy(Distribution):
    __slots__ = ("location", "scale")

    def __init__(self, location, scale, validate=True):
        if validate and not scale > 0:
            raise InvalidParams(f"cauchy scale must be positive, got {scale}")
        self.location, self.scale = float(location), float(scale)

    def sample(self, rng):
        return self.location + self.scale * math.tan(math.pi * (rng.random() - 0.5))

    def log_density(self, v):
        if not is_real(v):
            return NEG_INF
        r = (v - self.location) / self.scale
        return -LOG_PI - math.log(self.scale) - math.log1p(r * r)

    def grad_log_density(self, v):
        self._check_support(v)
        d = v - self.location
        s = self.scale
        denom = s * s + d * d
        return {"location": 2.0 * d / denom, "scale": -1.0 / s + 2.0 * d * d / (s * denom)}

    def __repr__(self):
        return f"cauchy({self.location}, {self.scale})"


class Gamma(Distribution):
    __slots__ = ("shape", "scale")

    def __init__(self, shape, scale, validate=True):
        if validate and not (shape > 0 and scale > 0):
            raise InvalidParams(f"gamma shape and scale must be positive, got {shape}, {scale}")
        self.shape, self.scale = float(shape), float(scale)

    def sample(self, rng):
        return rng.gammavariate(self.shape, self.scale)

    def log_density(self, v):
        if not is_real(v) or v <= 0.0:
            return NEG_INF
        k, th = self.shape, self.scale
        return -math.lgamma(k) - k * math.log(th) + (k - 1.0) * math.log(v) - v / th

    def grad_log_density(self, v):
        self._check_support(v)
        k, th = self.shape, self.scale
        return {"shape": -digamma(k) - math.log(th) + math.log(v), "scale": -k / th + v / (th * th)}

    def __repr__(self):
        return f"gamma({self.shape}, {self.scale})"


class MvNormalIID(Distribution):
    """Standard normal vector of fixed dimension; no parameters."""

    __slots__ = ("dim",)

    def __init__(self, dim):
        if int(dim) != dim or dim < 1:
            raise InvalidParams(f"mvnormal_iid dimension must be a positive integer, got {dim}")
        self.dim = int(dim)

    def sample(self, rng):
        return tuple(rng.gauss(0.0, 1.0) for _ in range(self.dim))

    def log_density(self, v):
        if type(v) is not tuple or len(v) != self.dim:
            return NEG_INF
        return -0.5 * sum(e * e for e in v) - 0.5 * self.dim * LOG_2PI

    def grad_log_density(self, v):
        self._check_support(v)
        return {}

    def __repr__(self):
        return f"mvnormal_iid({self.dim})"


bernoulli = Bernoulli
categorical = Categorical
uniform_discrete = UniformDiscrete
normal = Normal
cauchy = Cauchy
gamma = Gamma
mvnormal_iid = MvNormalIID
