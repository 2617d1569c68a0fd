"""Offline training of proposal parameters.

Maximizes the multi-sample bound ``J^K`` on the expected log proposal
probability by stochastic gradient ascent.  The gradient estimate combines a
score-function term for the parameter-dependent internal choices, with a
leave-one-out baseline per trace, and the exact gradient of ``log xi_hat``
through the output choices.
"""

import csv
import json
import math
from typing import NamedTuple

import numpy as np

from ._math import NEG_INF, log_mean_exp
from .errors import DegenerateBatch, NonFiniteGradient
from .params import ParamStore
from .runtime import as_rng, assess, execute, substream_seed


class GradientEstimate(NamedTuple):
    grad: dict
    log_xi_hat: float


def _add(acc, contributions, scale):
    for name, g in contributions.items():
        acc[name] = acc[name] + scale * np.asarray(g, dtype=float)


def _shifted_log_mean_exp(values):
    """``(m, a)`` with ``log mean exp(values) = m + a`` and ``m`` the maximum."""
    m = float(values.max())
    if m == NEG_INF:
        return m, 0.0
    return m, math.log(float(np.sum(np.exp(values - m)))) - math.log(values.size)


def baseline_differences(log_p_outs):
    """``log xi_hat - log xi_hat_{-k}`` for every ``k``, and ``log xi_hat``.

    Each difference is assembled as ``(m - m_k) + (a - a_k)`` from the
    maxima and shifted log-means, so identical traces give exactly zero and
    a common shift of all inputs cancels without rounding.
    """
    lpo = np.asarray(log_p_outs, dtype=float)
    m, a = _shifted_log_mean_exp(lpo)
    diffs = np.empty(lpo.size)
    for k in range(lpo.size):
        mk, ak = _shifted_log_mean_exp(np.delete(lpo, k))
        diffs[k] = math.inf if mk == NEG_INF else (m - mk) + (a - ak)
    return diffs, m + a


def combine_gradient(log_p_outs, grads_out, grads_in, zeros):
    """Combine per-trace quantities into ``g + h``.

    ``g`` weights each trace's internal score by ``log xi_hat`` minus the
    leave-one-out ``log xi_hat``; ``h`` is the self-normalized average of
    the output-choice gradients.
    """
    diffs, log_xi = baseline_differences(log_p_outs)
    if log_xi == NEG_INF:
        raise DegenerateBatch("all traces have zero output probability")
    lpo = np.asarray(log_p_outs, dtype=float)
    w = np.exp(lpo - lpo.max())
    w /= w.sum()
    grad = {name: z.copy() for name, z in zeros.items()}
    for k in range(len(lpo)):
        if grads_in[k]:
            _add(grad, grads_in[k], diffs[k])
        if grads_out[k] and w[k] > 0.0:
            _add(grad, grads_out[k], w[k])
    return GradientEstimate(grad, log_xi)


def estimate_gradient(program, x, z, params, K, outputs=None, seed=None):
    """Unbiased estimate of the gradient of ``E[log xi_hat]`` for one ``(x, z)`` pair.

    Returns ``(grad, log_xi_hat)`` with ``grad`` a dict of arrays shaped like
    ``params``.
    """
    if K < 2:
        raise ValueError("the leave-one-out baseline needs K >= 2")
    outputs = program.resolve_outputs(outputs)
    rng = as_rng(seed)
    lpo, gout, gin = [], [], []
    for _ in range(K):
        ex = execute(program, x, params, rng, constraints=z, outputs=outputs, grads=True)
        lpo.append(ex.log_p_out)
        gout.append(ex.grad_out)
        gin.append(ex.grad_in)
    return combine_gradient(lpo, gout, gin, params.zeros_like())


class SGD:
    """Plain gradient ascent; ``step`` is a constant or a function of the iteration."""

    name = "sgd"

    def __init__(self, step=1e-2):
        self.step_size = step
        self.t = 0

    def rho(self, t):
        return self.step_size(t) if callable(self.step_size) else self.step_size

    def step(self, params, grad):
        self.t += 1
        rho = self.rho(self.t)
        for name, g in grad.items():
            params.values[name] = params.values[name] + rho * g

    def to_json_obj(self):
        return {"algorithm": "sgd", "t": self.t, "step": self.step_size if not callable(self.step_size) else None}


class Adam:
    """ADAM ascent steps on a ParamStore."""

    name = "adam"

    def __init__(self, alpha=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.alpha, self.beta1, self.beta2, self.eps = alpha, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grad):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grad.items():
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m = b1 * m + (1.0 - b1) * g
            v = b2 * self.v[name] + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            params.values[name] = params.values[name] + self.alpha * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def to_json_obj(self):
        pack = lambda d: {n: [list(a.shape)] + [float(e) for e in a.ravel()] for n, a in d.items()}
        return {
            "algorithm": "adam",
            "t": self.t,
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "m": pack(self.m),
            "v": pack(self.v),
        }


def optimizer_from_json_obj(obj):
    if obj["algorithm"] == "sgd":
        opt = SGD(obj["step"])
        opt.t = obj["t"]
        return opt
    opt = Adam(obj["alpha"], obj["beta1"], obj["beta2"], obj["eps"])
    opt.t = obj["t"]
    unpack = lambda d: {n: np.array(p[1:], dtype=float).reshape(p[0]) for n, p in d.items()}
    opt.m, opt.v = unpack(obj["m"]), unpack(obj["v"])
    return opt


class TrainResult(NamedTuple):
    params: ParamStore
    objective_log: list


def train(program, sampler, params, K, M, opt, iterations, seed, outputs=None, callback=None):
    """Stochastic gradient ascent on ``J^K``.

    ``sampler(rng)`` draws one ``(x, z)`` training pair.  ``params`` is
    updated in place and also returned.  ``objective_log[t]`` is the mean
    ``log xi_hat`` over iteration ``t``'s minibatch.
    """
    if K < 2 or M < 1:
        raise ValueError("train needs K >= 2 and M >= 1")
    outputs = program.resolve_outputs(outputs)
    objective_log = []
    for t in range(iterations):
        it_seed = substream_seed(seed, t)
        total = params.zeros_like()
        log_xis = []
        for m in range(M):
            rng = as_rng(substream_seed(it_seed, m))
            x, z = sampler(rng)
            est = estimate_gradient(program, x, z, params, K, outputs, seed=rng)
            for name in total:
                total[name] += est.grad[name]
            log_xis.append(est.log_xi_hat)
        mean = {name: g / M for name, g in total.items()}
        bad = [name for name, g in mean.items() if not np.all(np.isfinite(g))]
        if bad:
            raise NonFiniteGradient(t + 1, bad)
        opt.step(params, mean)
        objective_log.append(float(np.mean(log_xis)))
        if callback is not None:
            callback(t + 1, params, objective_log[-1])
    return TrainResult(params, objective_log)


def objective_estimate(program, sampler, params, K, n_outer, seed, outputs=None):
    """Monte Carlo estimate of ``J^K``: mean ``log xi_hat`` over ``n_outer`` training pairs."""
    if n_outer < 1:
        raise ValueError("n_outer must be >= 1")
    vals = []
    for i in range(n_outer):
        rng = as_rng(substream_seed(seed, i))
        x, z = sampler(rng)
        vals.append(assess(program, x, params, z, K, outputs, seed=rng).log_xi_hat)
    return float(np.mean(vals))


def objective_values(program, sampler, params, K, n_outer, seed, outputs=None):
    """Per-pair ``log xi_hat`` values behind :func:`objective_estimate`."""
    out = []
    for i in range(n_outer):
        rng = as_rng(substream_seed(seed, i))
        x, z = sampler(rng)
        out.append(assess(program, x, params, z, K, outputs, seed=rng).log_xi_hat)
    return out


def save_checkpoint(path, iteration, params, opt, **extra):
    obj = {"iteration": iteration, "params": params.to_json_obj(), "opt_state": opt.to_json_obj()}
    obj.update(extra)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        obj = json.load(fh)
    obj["params"] = ParamStore.from_json_obj(obj["params"])
    obj["opt_state"] = optimizer_from_json_obj(obj["opt_state"])
    return obj


def write_objective_csv(path, objective_log, header=None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "mean_log_xi_hat"])
        for i, v in enumerate(objective_log, start=1):
            w.writerow([i, repr(v)])


__all__ = [
    "Adam",
    "SGD",
    "GradientEstimate",
    "ParamStore",
    "TrainResult",
    "estimate_gradient",
    "combine_gradient",
    "train",
    "objective_estimate",
    "save_checkpoint",
    "load_checkpoint",
    "write_objective_csv",
    "log_mean_exp",
]
