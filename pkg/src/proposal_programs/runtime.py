"""Execution engine for proposal programs.

A proposal program is an ordinary Python function ``body(ctx, x, params)``
that makes addressed random choices through ``ctx.choice``.  Randomness
that must not be instrumented (black-box code such as RANSAC) is drawn
from ``ctx.rng`` directly; the author guarantees it does not depend
deterministically on the trainable parameters.

Three execution modes share one context type:

* forward: every choice is sampled;
* constrained: choices whose address appears in the constraint map take the
  constrained value, the rest are sampled;
* scripted: unconstrained choices replay a fixed value script and signal the
  driver when the script runs out (used for exhaustive enumeration).

Example::

    def two_coin(ctx, x, params):
        u = ctx.choice(bernoulli(0.5), "u")
        ctx.choice(bernoulli(0.9 if u else 0.1), "z")

    prog = ProposalProgram(two_coin, outputs=select("z"))
    z, est, _ = simulate(prog, None, None, K=3, seed=1)
"""

import logging
import math
import random
from typing import NamedTuple

from ._math import NEG_INF, log_mean_exp
from .core import ChoiceMap, ChoiceRecord, OutputSelection, Trace, restrict, split_log_prob
from .errors import DuplicateAddress, MissingOutput, NonEnumerable, SelectionMismatch

log = logging.getLogger(__name__)


def as_rng(seed):
    """Coerce an int/str seed (or an existing stream) into a ``random.Random``."""
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


def substream_seed(seed, index):
    """Seed for the ``index``-th independent substream of ``seed``."""
    if isinstance(seed, random.Random):
        seed = seed.getrandbits(64)
    return f"{seed}/{index}"


class _Abort(Exception):
    pass


class _Branch(Exception):
    def __init__(self, address, support):
        super().__init__(address)
        self.address = address
        self.support = support


class ExecutionContext:
    __slots__ = (
        "constraints",
        "outputs",
        "script",
        "records",
        "log_prob",
        "log_p_out",
        "grad_out",
        "grad_in",
        "_rng",
        "_seen",
        "_script_pos",
    )

    def __init__(self, rng=None, constraints=None, outputs=None, grads=False, script=None):
        self._rng = rng
        self.constraints = constraints
        if outputs is None and constraints is not None:
            outputs = constraints
        self.outputs = outputs if outputs is not None else ()
        self.script = script
        self._script_pos = 0
        self.records = []
        self._seen = set()
        self.log_prob = 0.0
        self.log_p_out = 0.0
        self.grad_out = {} if grads else None
        self.grad_in = {} if grads else None

    @property
    def mode(self):
        if self.script is not None:
            return "scripted"
        return "constrained" if self.constraints else "forward"

    @property
    def rng(self):
        """Raw random stream for un-annotated randomness."""
        if self.script is not None:
            raise NonEnumerable("program draws un-annotated randomness; it cannot be enumerated")
        return self._rng

    def choice(self, dist, address, grad=None):
        """Make the random choice ``address ~ dist`` and return its value.

        ``grad``, when given, marks the choice as depending deterministically
        on the trainable parameters: it receives the distribution's
        parameter partials (see ``Distribution.grad_log_density``) and must
        return a dict ``{param_name: gradient}`` (chain rule applied).
        """
        if address in self._seen:
            raise DuplicateAddress(address)
        self._seen.add(address)
        z = self.constraints
        if z is not None and address in z:
            value = z[address]
            lp = dist.log_density(value)
            if lp == NEG_INF:
                self.records.append(ChoiceRecord(address, value, lp, len(self.records)))
                self.log_prob = NEG_INF
                if address in self.outputs:
                    self.log_p_out = NEG_INF
                raise _Abort()
        elif self.script is not None:
            if self._script_pos == len(self.script):
                raise _Branch(address, dist.support())
            value = self.script[self._script_pos]
            self._script_pos += 1
            lp = dist.log_density(value)
        else:
            value = dist.sample(self._rng)
            lp = dist.log_density(value)
        self.records.append(ChoiceRecord(address, value, lp, len(self.records)))
        self.log_prob += lp
        is_out = address in self.outputs
        if is_out:
            self.log_p_out += lp
        if grad is not None and self.grad_out is not None:
            sink = self.grad_out if is_out else self.grad_in
            for name, g in grad(dist.grad_log_density(value)).items():
                sink[name] = sink[name] + g if name in sink else g
        return value


class Execution(NamedTuple):
    trace: Trace
    log_p_out: float
    log_p_in: float
    grad_out: dict
    grad_in: dict
    retval: object


class ProbEstimate(NamedTuple):
    log_xi_hat: float
    K: int

    @property
    def xi_hat(self):
        return math.exp(self.log_xi_hat)


class SimulateResult(NamedTuple):
    z: ChoiceMap
    estimate: ProbEstimate
    traces: list


class ProposalProgram:
    """A proposal program: ``body(ctx, x, params)`` plus a default output selection."""

    def __init__(self, body, outputs=None, name=None):
        self.body = body
        self.outputs = outputs
        self.name = name or getattr(body, "__name__", "proposal")

    def __repr__(self):
        return f"ProposalProgram({self.name})"

    def resolve_outputs(self, outputs):
        outputs = outputs if outputs is not None else self.outputs
        if outputs is None:
            raise ValueError(f"{self.name}: no output selection given and no default declared")
        if not isinstance(outputs, OutputSelection):
            outputs = OutputSelection(outputs)
        return outputs


def proposal_program(outputs=None, name=None):
    """Decorator form of :class:`ProposalProgram`."""

    def wrap(body):
        return ProposalProgram(body, outputs=outputs, name=name)

    return wrap


def execute(program, x, params, rng=None, constraints=None, outputs=None, grads=False, script=None):
    """Run ``program`` once and return an :class:`Execution`.

    When ``outputs`` is omitted, the constrained addresses count as outputs.
    An out-of-support constraint aborts the run and yields a failed trace
    with ``-inf`` log probability instead of raising.
    """
    if constraints is not None and not isinstance(constraints, ChoiceMap):
        constraints = ChoiceMap(constraints)
    if rng is not None and not isinstance(rng, random.Random):
        rng = as_rng(rng)
    ctx = ExecutionContext(rng, constraints or None, outputs, grads, script)
    body = program.body if isinstance(program, ProposalProgram) else program
    failed = False
    retval = None
    try:
        retval = body(ctx, x, params)
    except _Abort:
        failed = True
    if not failed and constraints:
        seen = ctx._seen
        for a in constraints:
            if a not in seen:
                raise MissingOutput(a)
    trace = Trace(ctx.records, ctx.log_prob, failed)
    log_p_in = NEG_INF if failed else ctx.log_prob - ctx.log_p_out
    if failed:
        # internal log probability of the realized prefix, excluding the failing record
        log_p_in = sum(r.log_prob for r in ctx.records[:-1] if r.address not in ctx.outputs)
    return Execution(trace, ctx.log_p_out, log_p_in, ctx.grad_out, ctx.grad_in, retval)


def run_forward(program, x, params, seed):
    return execute(program, x, params, as_rng(seed)).trace


def run_constrained(program, x, params, z, seed, strict=False):
    """Execute with the addresses of ``z`` fixed.

    An out-of-support constrained value yields a failed ``-inf`` trace, or
    raises OutOfSupportConstraint when ``strict`` is set.
    """
    trace = execute(program, x, params, as_rng(seed), constraints=z).trace
    if strict and trace.failed:
        raise trace.failure
    return trace


def simulate(program, x, params, K, outputs=None, seed=None):
    """Forward-execute once, then ``K - 1`` times constrained to the result.

    Returns ``(z, estimate, traces)`` where ``estimate.log_xi_hat`` is the log
    of the mean output probability over all ``K`` traces.  The uniformly
    drawn slot ``k`` only positions the forward trace within ``traces``.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    outputs = program.resolve_outputs(outputs)
    rng = as_rng(seed)
    k = rng.randrange(K)
    first = execute(program, x, params, rng).trace
    z = restrict(first, outputs)
    log_ps = [split_log_prob(first, outputs)[0]]
    traces = [first]
    for _ in range(K - 1):
        ex = execute(program, x, params, rng, constraints=z, outputs=outputs)
        log_ps.append(ex.log_p_out)
        traces.append(ex.trace)
    traces.insert(k, traces.pop(0))
    return SimulateResult(z, ProbEstimate(log_mean_exp(log_ps), K), traces)


def assess(program, x, params, z, K, outputs=None, seed=None):
    """Estimate the proposal probability of output trace ``z`` from ``K`` constrained runs."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    outputs = program.resolve_outputs(outputs)
    if not isinstance(z, ChoiceMap):
        z = ChoiceMap(z)
    if not outputs.matches_exactly(z):
        raise SelectionMismatch(f"choice map addresses {sorted(z)} do not match outputs {outputs}")
    rng = as_rng(seed)
    log_ps = [execute(program, x, params, rng, constraints=z, outputs=outputs).log_p_out for _ in range(K)]
    return ProbEstimate(log_mean_exp(log_ps), K)
