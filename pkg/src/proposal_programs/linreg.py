"""Bayesian linear regression with outliers, and proposal programs for it.

Model, conditioned on the x-coordinates::

    slope      ~ Normal(0, 1)
    intercept  ~ Normal(0, 2)
    outlier-i  ~ Bernoulli(0.1)                         i = 1..N
    y_i        ~ Normal(slope * x_i + intercept, 5.8 if outlier-i else 1)

The latent assignment is a ChoiceMap with addresses ``"slope"``,
``"intercept"`` and ``"outlier-1"`` .. ``"outlier-N"``.  Second normal
parameters are standard deviations.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from ._math import LOG_2PI, softmax
from .core import ChoiceMap, OutputSelection
from .dist import bernoulli, categorical, cauchy, gamma, normal
from .errors import DegeneratePair, ShapeMismatch
from .nnet import MLP
from .params import ParamStore
from .runtime import ProposalProgram, as_rng

SLOPE_PRIOR_SD = 1.0
INTERCEPT_PRIOR_SD = 2.0
OUTLIER_PROB = 0.1
INLIER_SD = 1.0
OUTLIER_SD = 5.8
X_GRID = (-5.0, 5.0)

OUTPUTS = OutputSelection(["slope", "intercept"], prefixes=["outlier-"])

# clamp so every outlier flag keeps positive probability either way
_P_MAX = 1.0 - 2.0**-53
_P_MIN = 2.0**-1000


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ShapeMismatch("xs and ys must be vectors of equal length")
        if xs.size < 2:
            raise ValueError("a dataset needs at least two points")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "features", np.concatenate([xs, ys]))

    def __len__(self):
        return self.xs.size

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["x", "y"])
            for x, y in zip(self.xs, self.ys):
                w.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [line for line in fh if not line.startswith("#")]
        reader = csv.DictReader(rows)
        pts = [(float(r["x"]), float(r["y"])) for r in reader]
        return cls(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))


@dataclass(frozen=True)
class LineHypothesis:
    slope: float
    intercept: float


@dataclass(frozen=True)
class RansacParams:
    num_iters: int
    epsilon: float

    def __post_init__(self):
        if self.num_iters < 1:
            raise ValueError("num_iters must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def outlier_address(i):
    """Address of the outlier flag of the ``i``-th point, 1-based."""
    return f"outlier-{i}"


def latent_assignment(slope, intercept, outliers):
    d = {"slope": float(slope), "intercept": float(intercept)}
    for i, o in enumerate(outliers, start=1):
        d[outlier_address(i)] = bool(o)
    return ChoiceMap(d)


def outlier_flags(z, n):
    return [z[outlier_address(i)] for i in range(1, n + 1)]


def _normal_logpdf(x, mu, sd):
    r = (x - mu) / sd
    return -0.5 * r * r - math.log(sd) - 0.5 * LOG_2PI


def check_assignment(data, z):
    expected = {"slope", "intercept"} | {outlier_address(i) for i in range(1, len(data) + 1)}
    if set(z) != expected:
        raise ShapeMismatch(f"latent assignment does not match a dataset of {len(data)} points")


def model_log_joint(data, z):
    """Log joint density of latents ``z`` and the observed ys."""
    check_assignment(data, z)
    slope, intercept = z["slope"], z["intercept"]
    lp = _normal_logpdf(slope, 0.0, SLOPE_PRIOR_SD) + _normal_logpdf(intercept, 0.0, INTERCEPT_PRIOR_SD)
    log_out, log_in = math.log(OUTLIER_PROB), math.log1p(-OUTLIER_PROB)
    for i, (x, y) in enumerate(zip(data.xs, data.ys), start=1):
        o = z[outlier_address(i)]
        mu = slope * x + intercept
        lp += (log_out if o else log_in) + _normal_logpdf(y, mu, OUTLIER_SD if o else INLIER_SD)
    return float(lp)


def ransac(data, params, rng):
    """Best-of-``num_iters`` two-point line fit, scored by inlier count.

    Pairs with equal x are skipped.  Ties keep the earliest best hypothesis.
    """
    xs, ys = data.xs, data.ys
    n = xs.size
    best = -1
    line = None
    for _ in range(params.num_iters):
        i, j = rng.sample(range(n), 2)
        dx = xs[j] - xs[i]
        if dx == 0.0:
            continue
        slope = (ys[j] - ys[i]) / dx
        intercept = ys[i] - slope * xs[i]
        count = int(np.count_nonzero(np.abs(ys - (intercept + slope * xs)) < params.epsilon))
        if count > best:
            best = count
            line = (float(slope), float(intercept))
    if line is None:
        raise DegeneratePair("every sampled pair had equal x coordinates")
    return LineHypothesis(*line)


def conditional_outlier_prob(x, y, line):
    """Posterior probability that ``(x, y)`` is an outlier given the line."""
    mu = line.slope * x + line.intercept
    lo = math.log(OUTLIER_PROB) + _normal_logpdf(y, mu, OUTLIER_SD)
    li = math.log1p(-OUTLIER_PROB) + _normal_logpdf(y, mu, INLIER_SD)
    d = li - lo
    p = 1.0 / (1.0 + math.exp(d)) if d < 700.0 else 0.0
    return min(max(p, _P_MIN), _P_MAX)


def _sample_outliers(ctx, data, slope, intercept):
    line = LineHypothesis(slope, intercept)
    for i, (x, y) in enumerate(zip(data.xs, data.ys), start=1):
        ctx.choice(bernoulli(conditional_outlier_prob(x, y, line)), outlier_address(i))


_MLP = MLP()


def _ransac_nn(ctx, data, params):
    a, b = float(params["eps_alpha"]), float(params["eps_beta"])
    shape, scale = math.exp(a), math.exp(b)
    epsilon = ctx.choice(
        gamma(shape, scale), "epsilon", grad=lambda g: {"eps_alpha": g["shape"] * shape, "eps_beta": g["scale"] * scale}
    )
    probs = softmax(params["iter_logits"])

    def iter_grad(g):
        gp = g["probs"]
        return {"iter_logits": probs * (gp - probs @ gp)}

    idx = ctx.choice(categorical(probs, validate=False), "iters", grad=iter_grad)
    guess = ransac(data, RansacParams(idx + 1, epsilon), ctx.rng)

    out, cache = _MLP.forward(params, data.features)
    s_scale, i_scale = math.exp(out[0]), math.exp(out[1])
    slope = ctx.choice(
        cauchy(guess.slope, s_scale),
        "slope",
        grad=lambda g: _MLP.param_grads(params, cache, [g["scale"] * s_scale, 0.0]),
    )
    intercept = ctx.choice(
        cauchy(guess.intercept, i_scale),
        "intercept",
        grad=lambda g: _MLP.param_grads(params, cache, [0.0, g["scale"] * i_scale]),
    )
    _sample_outliers(ctx, data, slope, intercept)


def _nn(ctx, data, params):
    latent = [ctx.rng.gauss(0.0, 1.0), ctx.rng.gauss(0.0, 1.0)]
    features = np.concatenate([latent, data.features])
    out, cache = _MLP.forward(params, features)
    s_mu, i_mu = float(out[0]), float(out[1])
    s_scale, i_scale = math.exp(out[2]), math.exp(out[3])
    slope = ctx.choice(
        cauchy(s_mu, s_scale),
        "slope",
        grad=lambda g: _MLP.param_grads(params, cache, [g["location"], 0.0, g["scale"] * s_scale, 0.0]),
    )
    intercept = ctx.choice(
        cauchy(i_mu, i_scale),
        "intercept",
        grad=lambda g: _MLP.param_grads(params, cache, [0.0, g["location"], 0.0, g["scale"] * i_scale]),
    )
    _sample_outliers(ctx, data, slope, intercept)


def _prior(ctx, data, params):
    ctx.choice(normal(0.0, SLOPE_PRIOR_SD), "slope")
    ctx.choice(normal(0.0, INTERCEPT_PRIOR_SD), "intercept")
    for i in range(1, len(data) + 1):
        ctx.choice(bernoulli(OUTLIER_PROB), outlier_address(i))


ransac_nn_proposal = ProposalProgram(_ransac_nn, outputs=OUTPUTS, name="ransac_nn")
nn_proposal = ProposalProgram(_nn, outputs=OUTPUTS, name="nn")
prior_proposal = ProposalProgram(_prior, outputs=OUTPUTS, name="prior")

PROPOSALS = {"ransac_nn": ransac_nn_proposal, "nn": nn_proposal, "prior": prior_proposal}


def init_ransac_nn_params(n_points, hidden=10, iter_support=10, seed=0):
    """Initial parameters: epsilon ~ gamma(1, 1), uniform iterations, network scales near 1."""
    store = ParamStore({"eps_alpha": 0.0, "eps_beta": 0.0, "iter_logits": np.zeros(iter_support)})
    return _MLP.init_params(store, 2 * n_points, hidden, 2, seed=seed)


def init_nn_params(n_points, hidden=10, seed=0):
    return _MLP.init_params(ParamStore(), 2 + 2 * n_points, hidden, 4, seed=seed)


def init_params(kind, n_points, hidden=10, iter_support=10, seed=0):
    if kind == "ransac_nn":
        return init_ransac_nn_params(n_points, hidden, iter_support, seed)
    if kind == "nn":
        return init_nn_params(n_points, hidden, seed)
    if kind == "prior":
        return ParamStore()
    raise ValueError(f"unknown proposal kind {kind!r}")


def x_grid(n, lo=X_GRID[0], hi=X_GRID[1]):
    return np.linspace(lo, hi, n)


def generate_training_pair(n, seed, grid=X_GRID):
    """Ancestral sample of latents and ys on an evenly spaced x grid."""
    if n < 2:
        raise ValueError("need at least two data points")
    rng = as_rng(seed)
    xs = x_grid(n, *grid)
    slope = rng.gauss(0.0, SLOPE_PRIOR_SD)
    intercept = rng.gauss(0.0, INTERCEPT_PRIOR_SD)
    outliers = [rng.random() < OUTLIER_PROB for _ in range(n)]
    ys = np.array(
        [rng.gauss(slope * x + intercept, OUTLIER_SD if o else INLIER_SD) for x, o in zip(xs, outliers)]
    )
    return Dataset(xs, ys), latent_assignment(slope, intercept, outliers)


def training_sampler(n, grid=X_GRID):
    """Training distribution for the trainer: ``rng -> (dataset, latents)``."""
    return lambda rng: generate_training_pair(n, rng, grid)


def posterior_target(data):
    from .samplers import UnnormalizedTarget

    return UnnormalizedTarget(lambda z: model_log_joint(data, z), f"linreg joint, N={len(data)}")
