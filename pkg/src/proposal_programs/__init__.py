"""Proposal programs: probabilistic programs used as Monte Carlo proposals.

A proposal program marks some of its random choices as outputs.  Its
marginal over those outputs is the proposal distribution, estimated without
bias by :func:`simulate` and :func:`assess`, which is enough for importance
sampling, Metropolis-Hastings and gradient-based training.
"""

from .core import ChoiceMap, OutputSelection, Trace, select
from .runtime import ProbEstimate, ProposalProgram, assess, execute, proposal_program, simulate
from .samplers import ProposalKernel, UnnormalizedTarget, importance_sample, mh_chain, mh_step
from .params import ParamStore
from .trainer import SGD, Adam, estimate_gradient, train

__all__ = [
    "Adam",
    "ChoiceMap",
    "OutputSelection",
    "ParamStore",
    "ProbEstimate",
    "ProposalKernel",
    "ProposalProgram",
    "SGD",
    "Trace",
    "UnnormalizedTarget",
    "assess",
    "estimate_gradient",
    "execute",
    "importance_sample",
    "mh_chain",
    "mh_step",
    "proposal_program",
    "select",
    "simulate",
    "train",
]
