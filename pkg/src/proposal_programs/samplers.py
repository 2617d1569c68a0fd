"""Importance sampling and Metropolis-Hastings driven by proposal programs.

Both samplers only see a proposal through ``simulate``/``assess``, so the
estimated proposal probabilities stand in for exact ones.  All weight
arithmetic is in log space.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from ._math import NEG_INF, logsumexp_array
from .core import ChoiceMap
from .errors import AllWeightsZero
from .runtime import as_rng, assess, simulate, substream_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnnormalizedTarget:
    """``log_density`` maps a ChoiceMap to log of the unnormalized target (``-inf`` allowed)."""

    log_density: Callable
    description: str = ""

    def __call__(self, z):
        return self.log_density(z)

    def scaled(self, c):
        """The same target multiplied by the constant ``c > 0``."""
        if not c > 0:
            raise ValueError("scale must be positive")
        shift = math.log(c)
        return UnnormalizedTarget(lambda z: self.log_density(z) + shift, f"{c} * ({self.description})")


class WeightedSample(NamedTuple):
    z: ChoiceMap
    log_weight: float


class ISResult(NamedTuple):
    estimate: float
    samples: list
    log_sum_weights: float

    def normalized_weights(self):
        lw = np.array([s.log_weight for s in self.samples])
        return np.exp(lw - self.log_sum_weights)


def normalize_log_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    total = logsumexp_array(lw)
    if total == NEG_INF:
        raise AllWeightsZero("every importance weight is zero")
    return np.exp(lw - total), total


def importance_sample(target, program, x, params, N, K, f, seed, outputs=None):
    """Self-normalized importance sampling with a proposal program.

    Particle ``i`` draws from its own substream of ``seed``.  Returns
    ``(estimate, samples, log_sum_weights)``.
    """
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    samples = []
    for i in range(N):
        z, est, _ = simulate(program, x, params, K, outputs, seed=substream_seed(seed, i))
        lp = float(target(z))
        samples.append(WeightedSample(z, lp - est.log_xi_hat if lp > NEG_INF else NEG_INF))
    w, total = normalize_log_weights([s.log_weight for s in samples])
    fs = np.array([f(s.z) for s in samples], dtype=float)
    nz = w > 0
    estimate = float(np.sum(w[nz] * fs[nz]))
    return ISResult(estimate, samples, total)


@dataclass(frozen=True)
class MHState:
    current: ChoiceMap
    log_target_current: float
    step_count: int = 0
    accept_count: int = 0
    last_accepted: bool = False
    last_log_alpha: float = NEG_INF

    @classmethod
    def initial(cls, target, z0):
        z0 = z0 if isinstance(z0, ChoiceMap) else ChoiceMap(z0)
        return cls(z0, float(target(z0)))


def mh_step(target, program, params, state, K, outputs=None, seed=None):
    """One Metropolis-Hastings transition using ``simulate`` and ``assess``.

    The proposal receives the whole current state as its input and proposes
    values for ``outputs``; unselected addresses keep their current values.
    """
    if not state.log_target_current > NEG_INF:
        raise ValueError("current state has zero target density")
    outputs = program.resolve_outputs(outputs)
    rng = as_rng(seed)
    current = state.current
    proposed, fwd, _ = simulate(program, current, params, K, outputs, seed=rng)
    new = current.merge(proposed)
    lp_new = float(target(new))
    accepted = False
    if fwd.log_xi_hat == NEG_INF:
        log.warning("degenerate forward estimate at step %d; rejecting", state.step_count)
        log_alpha = NEG_INF
    elif lp_new == NEG_INF:
        log_alpha = NEG_INF
    else:
        rev = assess(program, new, params, restrict_map(current, outputs), K, outputs, seed=rng)
        log_alpha = min(0.0, lp_new + rev.log_xi_hat - state.log_target_current - fwd.log_xi_hat)
    r = rng.random()
    if log_alpha > NEG_INF and r <= math.exp(log_alpha):
        accepted = True
    if accepted:
        return MHState(new, lp_new, state.step_count + 1, state.accept_count + 1, True, log_alpha)
    return replace(state, step_count=state.step_count + 1, last_accepted=False, last_log_alpha=log_alpha)


def restrict_map(z, selection):
    return ChoiceMap._from_trusted({a: v for a, v in z.items() if a in selection})


class ProposalKernel:
    """MH transition operator bound to a program, its parameters, ``K`` and an output block."""

    def __init__(self, program, params=None, K=1, outputs=None):
        self.program = program
        self.params = params
        self.K = K
        self.outputs = program.resolve_outputs(outputs)

    def __call__(self, target, state, seed):
        return mh_step(target, self.program, self.params, state, self.K, self.outputs, seed)

    def __repr__(self):
        return f"ProposalKernel({self.program.name}, K={self.K})"


class ChainStep(NamedTuple):
    step: int
    kernel: int
    accepted: bool
    log_alpha: float


class ChainResult(NamedTuple):
    iterates: list
    accept_rates: list
    steps: list


def mh_chain(target, kernels, z0, steps, seed):
    """Apply ``kernels`` in a fixed cyclic scan for ``steps`` transitions.

    A kernel is any callable ``(target, state, seed) -> MHState``.  Step ``t``
    uses substream ``t`` of ``seed``.  ``iterates`` has ``steps + 1`` entries,
    starting with ``z0``.
    """
    if not kernels:
        raise ValueError("need at least one kernel")
    state = MHState.initial(target, z0)
    if not state.log_target_current > NEG_INF:
        raise ValueError("initial state has zero target density")
    iterates = [state.current]
    tried = [0] * len(kernels)
    accepted = [0] * len(kernels)
    log_steps = []
    for t in range(steps):
        j = t % len(kernels)
        state = kernels[j](target, state, substream_seed(seed, t))
        tried[j] += 1
        accepted[j] += state.last_accepted
        iterates.append(state.current)
        log_steps.append(ChainStep(t, j, state.last_accepted, state.last_log_alpha))
    rates = [a / n if n else 0.0 for a, n in zip(accepted, tried)]
    return ChainResult(iterates, rates, log_steps)


def write_is_diagnostics(path, result, f, header=None):
    """CSV with columns particle_index, log_weight, f_value."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["particle_index", "log_weight", "f_value"])
        for i, s in enumerate(result.samples):
            w.writerow([i, repr(s.log_weight), repr(float(f(s.z)))])


def write_mh_diagnostics(path, chain, header=None):
    """CSV with columns step, accepted, log_alpha."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh)
        w.writerow(["step", "accepted", "log_alpha"])
        for s in chain.steps:
            w.writerow([s.step, int(s.accepted), repr(s.log_alpha)])
