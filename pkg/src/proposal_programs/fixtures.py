"""Small enumerable proposal programs used by the oracle checks and tests.

Every program here has finite discrete support, so the oracle can compute
its exact marginals.  None of them draws un-annotated randomness.
"""

import math
from dataclasses import dataclass, field

from ._math import logit, sigmoid
from .core import ChoiceMap, select
from .dist import bernoulli, categorical, uniform_discrete
from .params import ParamStore
from .runtime import ProposalProgram
from .samplers import UnnormalizedTarget


@dataclass
class Fixture:
    name: str
    program: ProposalProgram
    x: object = None
    params: object = None
    zs: list = field(default_factory=list)
    target: UnnormalizedTarget = None
    states: list = field(default_factory=list)
    has_internal: bool = True


def _two_coin(ctx, x, params):
    u = ctx.choice(bernoulli(0.5), "u")
    ctx.choice(bernoulli(0.9 if u else 0.1), "z")


def _param_two_coin(ctx, x, params):
    pu = sigmoid(float(params["u_logit"]))
    u = ctx.choice(bernoulli(pu), "u", grad=lambda g: {"u_logit": g["p"] * pu * (1.0 - pu)})
    name = "z_logit_1" if u else "z_logit_0"
    pz = sigmoid(float(params[name]))
    ctx.choice(bernoulli(pz), "z", grad=lambda g: {name: g["p"] * pz * (1.0 - pz)})


def _coin_pair(ctx, x, params):
    u = ctx.choice(bernoulli(0.4), "u")
    z1 = ctx.choice(bernoulli(0.8 if u else 0.3), "z1")
    ctx.choice(bernoulli(0.75 if z1 == u else 0.2), "z2")


_DICE_ROWS = ([0.6, 0.3, 0.1], [0.1, 0.5, 0.4], [0.25, 0.25, 0.5])


def _dice_mixture(ctx, x, params):
    u = ctx.choice(uniform_discrete(0, 2), "u")
    z = ctx.choice(categorical(_DICE_ROWS[u]), "z")
    # internal choice after an output, feeding a later output
    v = ctx.choice(bernoulli(0.3 + 0.2 * z), "v")
    ctx.choice(bernoulli(0.7 if v else 0.2), "y")


_LATE_ROWS = ([0.7, 0.1, 0.1, 0.1], [0.1, 0.6, 0.2, 0.1], [0.1, 0.2, 0.6, 0.1], [0.05, 0.05, 0.1, 0.8])


def _late_internal(ctx, x, params):
    a = ctx.choice(bernoulli(0.35), "a")
    w = ctx.choice(categorical([0.1, 0.2, 0.3, 0.4] if a else [0.4, 0.3, 0.2, 0.1]), "w")
    ctx.choice(categorical(_LATE_ROWS[w]), "b")


def _output_only(ctx, x, params):
    a = ctx.choice(bernoulli(0.3), "a")
    ctx.choice(uniform_discrete(0, 2) if a else categorical([0.5, 0.3, 0.2]), "b")


def _flip_proposal(ctx, x, params):
    """Input-dependent proposal over two bits; ``x`` is the current state."""
    u = ctx.choice(bernoulli(0.3 if x["a"] else 0.6), "u")
    ctx.choice(bernoulli(0.8 if u else 0.25), "a")
    ctx.choice(bernoulli(0.7 if u != x["b"] else 0.35), "b")


def _four_state_log_density(z):
    table = {(False, False): 1.0, (False, True): 2.0, (True, False): 3.0, (True, True): 4.0}
    return math.log(table[(z["a"], z["b"])])


def _two_coin_log_density(z):
    return math.log(3.0) if z["z"] else 0.0


def two_coin_params():
    return ParamStore({"u_logit": 0.0, "z_logit_0": logit(0.1), "z_logit_1": logit(0.9)})


# training distribution for the parameterized two-coin program: z ~ bernoulli(0.7)
TWO_COIN_TRAINING_PAIRS = [(None, ChoiceMap(z=True), 0.7), (None, ChoiceMap(z=False), 0.3)]


def two_coin_training_sampler(rng):
    return None, (TWO_COIN_TRAINING_PAIRS[0][1] if rng.random() < 0.7 else TWO_COIN_TRAINING_PAIRS[1][1])


def _bits(*names):
    from itertools import product

    return [ChoiceMap(dict(zip(names, vals))) for vals in product((False, True), repeat=len(names))]


def get(name):
    return FIXTURES[name]()


FIXTURES = {
    "two-coin": lambda: Fixture(
        "two-coin",
        ProposalProgram(_two_coin, outputs=select("z"), name="two_coin"),
        zs=_bits("z"),
        target=UnnormalizedTarget(_two_coin_log_density, "pi(z=1)=3/4"),
        states=_bits("z"),
    ),
    "param-two-coin": lambda: Fixture(
        "param-two-coin",
        ProposalProgram(_param_two_coin, outputs=select("z"), name="param_two_coin"),
        params=two_coin_params(),
        zs=_bits("z"),
    ),
    "coin-pair": lambda: Fixture(
        "coin-pair",
        ProposalProgram(_coin_pair, outputs=select("z1", "z2"), name="coin_pair"),
        zs=_bits("z1", "z2")[1:],
    ),
    "dice-mixture": lambda: Fixture(
        "dice-mixture",
        ProposalProgram(_dice_mixture, outputs=select("z", "y"), name="dice_mixture"),
        zs=[ChoiceMap(z=0, y=True), ChoiceMap(z=1, y=False), ChoiceMap(z=2, y=True)],
    ),
    "late-internal": lambda: Fixture(
        "late-internal",
        ProposalProgram(_late_internal, outputs=select("a", "b"), name="late_internal"),
        zs=[ChoiceMap(a=True, b=3), ChoiceMap(a=False, b=0), ChoiceMap(a=True, b=1)],
    ),
    "output-only": lambda: Fixture(
        "output-only",
        ProposalProgram(_output_only, outputs=select("a", "b"), name="output_only"),
        zs=[ChoiceMap(a=True, b=2), ChoiceMap(a=False, b=0), ChoiceMap(a=False, b=2)],
        has_internal=False,
    ),
    "four-state": lambda: Fixture(
        "four-state",
        ProposalProgram(_flip_proposal, outputs=select("a", "b"), name="flip_proposal"),
        target=UnnormalizedTarget(_four_state_log_density, "pi proportional to 1,2,3,4"),
        states=_bits("a", "b"),
    ),
}

# fixtures whose marginals are stored as frozen data files
MARGINAL_FIXTURES = ("two-coin", "coin-pair", "dice-mixture", "late-internal", "output-only")
