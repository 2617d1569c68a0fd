"""Exact reference computations on small discrete proposal programs.

Enumeration replays the program under test in the runtime's scripted mode,
so the exact numbers are computed from the same code the samplers execute.
These routines are deliberately brute force and are only meant for programs
with a handful of discrete choices.
"""

import itertools
import math
from typing import NamedTuple

import numpy as np

from ._math import NEG_INF, log_mean_exp
from .core import ChoiceMap, agrees, restrict, split_log_prob
from .errors import BranchLimit, DegenerateCells, EmptySupport
from .runtime import _Branch, execute

DEFAULT_CAP = 10**6


class EnumeratedTrace(NamedTuple):
    trace: object
    prob: float
    log_p_out: float
    log_p_in: float
    grad_out: dict
    grad_in: dict


class EnumeratedProgram:
    """All traces of a program with their probabilities.

    For a constrained enumeration, ``prob`` is the probability of the trace
    under constrained execution, i.e. the product over the unconstrained
    choices only.
    """

    def __init__(self, entries, constraints=None):
        self.entries = entries
        self.constraints = constraints

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def traces(self):
        return [(e.trace, e.prob) for e in self.entries]

    def total_prob(self):
        return math.fsum(e.prob for e in self.entries)

    def output_traces(self, outputs):
        """Distinct restrictions to ``outputs`` with positive probability, in enumeration order."""
        seen = {}
        for e in self.entries:
            if e.prob > 0.0 and not e.trace.failed:
                z = restrict(e.trace, outputs)
                seen.setdefault(z, None)
        return list(seen)


def enumerate_program(program, x, params, constraints=None, outputs=None, grads=False, cap=DEFAULT_CAP):
    """Depth-first enumeration of every execution of ``program`` on ``x``.

    With ``constraints`` the constrained addresses are held fixed and only
    the remaining choices branch.
    """
    if constraints is not None and not isinstance(constraints, ChoiceMap):
        constraints = ChoiceMap(constraints)
    if outputs is None and constraints is not None:
        outputs = constraints
    stack = [()]
    entries = []
    while stack:
        script = stack.pop()
        try:
            ex = execute(program, x, params, None, constraints, outputs, grads, script)
        except _Branch as b:
            for v in reversed(b.support):
                stack.append(script + (v,))
            continue
        if constraints:
            prob = math.exp(ex.log_p_in)
        else:
            prob = math.exp(ex.trace.total_log_prob)
        entries.append(EnumeratedTrace(ex.trace, prob, ex.log_p_out, ex.log_p_in, ex.grad_out, ex.grad_in))
        if len(entries) > cap:
            raise BranchLimit(f"more than {cap} traces")
    return EnumeratedProgram(entries, constraints)


def exact_marginal(enum, z):
    """Exact proposal probability: total probability of traces agreeing with ``z``."""
    if not isinstance(z, ChoiceMap):
        z = ChoiceMap(z)
    return math.fsum(e.prob for e in enum.entries if not e.trace.failed and agrees(e.trace, z))


def marginal_of(program, x, params, z):
    return exact_marginal(enumerate_program(program, x, params), z)


def positivity_holds(program, x, params, z):
    """Every positive-probability constrained trace is possible under forward execution."""
    constrained = enumerate_program(program, x, params, constraints=z)
    return all(e.log_p_out > NEG_INF for e in constrained if e.prob > 0.0)


def exact_log_xi_expectation(constrained, K):
    """``E[log xi_hat]`` over all ``K``-tuples of constrained traces."""
    entries = [e for e in constrained if e.prob > 0.0]
    total = 0.0
    for tup in itertools.product(entries, repeat=K):
        p = math.prod(e.prob for e in tup)
        total += p * log_mean_exp([e.log_p_out for e in tup])
    return total


def exact_J_and_JK(program, params, pairs, K, cap=DEFAULT_CAP):
    """Exact ``J`` (expected log proposal probability) and its ``K``-sample lower bound.

    ``pairs`` is a list of ``(x, z, weight)`` describing a finite training
    distribution.  Raises AssertionError if the bound ``JK <= J`` fails.
    """
    J = 0.0
    JK = 0.0
    for x, z, w in pairs:
        p = marginal_of(program, x, params, z)
        J += w * (math.log(p) if p > 0 else NEG_INF)
        constrained = enumerate_program(program, x, params, constraints=z, outputs=program.resolve_outputs(None))
        n = sum(1 for e in constrained if e.prob > 0.0)
        if n**K > cap:
            raise BranchLimit(f"{n}^{K} trace tuples exceed cap {cap}")
        JK += w * exact_log_xi_expectation(constrained, K)
    assert JK <= J + 1e-12, (JK, J)
    return J, JK


def exact_grad_JK(program, params, pairs, K):
    """Exact gradient of ``J^K`` by enumerating all ``K``-tuples of constrained traces.

    Uses the score-function identity: for each tuple, the integrand is
    ``log xi_hat * sum_k grad log p_I(tau_k) + grad log xi_hat``.
    """
    grad = params.zeros_like()
    for x, z, w in pairs:
        constrained = enumerate_program(
            program, x, params, constraints=z, outputs=program.resolve_outputs(None), grads=True
        )
        entries = [e for e in constrained if e.prob > 0.0]
        for tup in itertools.product(entries, repeat=K):
            p = w * math.prod(e.prob for e in tup)
            lpo = [e.log_p_out for e in tup]
            log_xi = log_mean_exp(lpo)
            m = max(lpo)
            weights = [math.exp(v - m) for v in lpo]
            s = sum(weights)
            for e, wk in zip(tup, weights):
                for name, g in e.grad_in.items():
                    grad[name] = grad[name] + p * log_xi * np.asarray(g)
                for name, g in e.grad_out.items():
                    grad[name] = grad[name] + p * (wk / s) * np.asarray(g)
    return grad


def finite_difference_grad_JK(program, params, pairs, K, h=1e-6):
    """Central finite differences of the exact ``J^K``, coordinate by coordinate."""
    grad = params.zeros_like()
    for name in params.names():
        flat = grad[name].reshape(-1)
        for i in range(flat.size):
            vals = []
            for sign in (1.0, -1.0):
                p = params.copy()
                p.values[name].reshape(-1)[i] += sign * h
                vals.append(exact_J_and_JK(program, p, pairs, K)[1])
            flat[i] = (vals[0] - vals[1]) / (2 * h)
    return grad


def exact_target_distribution(target, support):
    """Normalize an unnormalized target over an explicit finite support."""
    if not support:
        raise EmptySupport("support is empty")
    lp = np.array([target(z) for z in support], dtype=float)
    if np.all(lp == NEG_INF):
        raise EmptySupport("target has zero mass on the given support")
    w = np.exp(lp - lp.max())
    return w / w.sum()


def exact_expectation(target, support, f):
    probs = exact_target_distribution(target, support)
    return float(sum(p * f(z) for p, z in zip(probs, support)))


# statistics -------------------------------------------------------------------


def regularized_gamma_q(a, x):
    """Upper regularized incomplete gamma ``Q(a, x)``."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x <= 0:
        return 1.0
    log_prefix = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # series for P(a, x)
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(10_000):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return 1.0 - total * math.exp(log_prefix)
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(log_prefix) * h


def chi2_sf(statistic, df):
    return regularized_gamma_q(df / 2.0, statistic / 2.0)


class ChiSquareResult(NamedTuple):
    statistic: float
    df: int
    p_value: float


def chi_square_gof(observed, expected_probs):
    """Pearson goodness-of-fit test with ``k - 1`` degrees of freedom."""
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if obs.shape != probs.shape or obs.ndim != 1 or obs.size < 2:
        raise DegenerateCells("observed and expected must be equal-length vectors with at least two cells")
    if np.any(probs <= 0):
        raise DegenerateCells("expected probabilities must be positive on every cell")
    n = obs.sum()
    if n <= 0:
        raise DegenerateCells("no observations")
    probs = probs / probs.sum()
    expected = n * probs
    stat = float(np.sum((obs - expected) ** 2 / expected))
    df = obs.size - 1
    return ChiSquareResult(stat, df, chi2_sf(stat, df))


def tv_distance(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.sum(np.abs(p - q)))


def empirical_distribution(iterates, support):
    index = {z: i for i, z in enumerate(support)}
    counts = np.zeros(len(support))
    for z in iterates:
        counts[index[z]] += 1
    return counts


# extended-space identities ----------------------------------------------------


def _forward_table(program, x, params):
    """Map from full trace assignment to its probability under forward execution."""
    return {e.trace.choices(): e.prob for e in enumerate_program(program, x, params)}


def _forward_prob(table, e):
    """Forward-execution probability of a trace, looked up by its full assignment."""
    if e.trace.failed:
        return 0.0
    return table.get(e.trace.choices(), 0.0)


def extended_weight_discrepancies(program, x, params, target, K=2, outputs=None):
    """Compare the importance weight of the sampler with the extended-space ratio.

    For every output trace ``z`` the program can produce and every ``K``-tuple
    of constrained traces, computes

    * the sampler's weight ``pi(z) / mean_k p_O(tau_k)``, and
    * ``pi(z) prod_i p(tau_i; x, z) / q(z, tau_1..K)`` with the explicit
      extended proposal ``q = 1/K sum_k p(tau_k; x) prod_{i != k} p(tau_i; x, z)``,

    and yields ``(z, tuple, weight, extended_ratio)``.
    """
    outputs = program.resolve_outputs(outputs)
    forward = enumerate_program(program, x, params)
    table = {e.trace.choices(): e.prob for e in forward}
    for z in forward.output_traces(outputs):
        pi_z = math.exp(target(z))
        constrained = [e for e in enumerate_program(program, x, params, constraints=z, outputs=outputs) if e.prob > 0]
        for tup in itertools.product(constrained, repeat=K):
            ext_target = pi_z * math.prod(e.prob for e in tup)
            q = sum(
                _forward_prob(table, tup[k]) * math.prod(tup[i].prob for i in range(K) if i != k) for k in range(K)
            ) / K
            xi_hat = sum(math.exp(e.log_p_out) if e.log_p_out > NEG_INF else 0.0 for e in tup) / K
            weight = pi_z / xi_hat
            yield z, tup, weight, ext_target / q


def extended_mh_discrepancies(program, params, target, states, K=2, outputs=None):
    """Compare the sampler's MH ratio with the explicit extended-space MH ratio.

    Enumerates current state ``z``, forward slot ``k``, the simulate tuple
    ``tau_1..K`` (input ``z``, outputs ``zeta``), the assess tuple
    ``tau'_1..K`` (input ``zeta``, outputs ``z``) and slot ``k'``.  Yields
    ``(z, zeta, sampler_ratio, extended_ratio)``.
    """
    outputs = program.resolve_outputs(outputs)

    def constrained(inp, out):
        return [e for e in enumerate_program(program, inp, params, constraints=out, outputs=outputs) if e.prob > 0]

    def p_out(e):
        return math.exp(e.log_p_out) if e.log_p_out > NEG_INF else 0.0

    for z in states:
        pi_z = math.exp(target(z))
        if pi_z == 0.0:
            continue
        fwd_table = _forward_table(program, z, params)
        for zeta in enumerate_program(program, z, params).output_traces(outputs):
            pi_zeta = math.exp(target(zeta))
            rev_table = _forward_table(program, zeta, params)
            fwd_tuples = constrained(z, zeta)
            rev_tuples = constrained(zeta, z)
            for tau in itertools.product(fwd_tuples, repeat=K):
                sum_fwd = sum(p_out(e) for e in tau)
                for taup in itertools.product(rev_tuples, repeat=K):
                    sum_rev = sum(p_out(e) for e in taup)
                    sampler = (pi_zeta * sum_rev / K) / (pi_z * sum_fwd / K)
                    for k in range(K):
                        if _forward_prob(fwd_table, tau[k]) == 0.0:
                            continue
                        for kp in range(K):
                            if _forward_prob(rev_table, taup[kp]) == 0.0:
                                continue
                            num = (
                                pi_zeta
                                / K
                                * _forward_prob(rev_table, taup[kp])
                                * math.prod(taup[i].prob for i in range(K) if i != kp)
                                * math.prod(e.prob for e in tau)
                                * p_out(tau[k])
                                / sum_fwd
                            )
                            den = (
                                pi_z
                                / K
                                * _forward_prob(fwd_table, tau[k])
                                * math.prod(tau[i].prob for i in range(K) if i != k)
                                * math.prod(e.prob for e in taup)
                                * p_out(taup[kp])
                                / sum_rev
                            )
                            yield z, zeta, sampler, num / den


def split_check(trace, selection):
    """``exp(log_p_O) * exp(log_p_I)`` against ``exp(total)``; returns the relative error."""
    lo, li = split_log_prob(trace, selection)
    whole = math.exp(trace.total_log_prob)
    return abs(math.exp(lo) * math.exp(li) - whole) / whole
