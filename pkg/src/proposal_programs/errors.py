"""Exception hierarchy.

Every error raised deliberately by the library derives from
:class:`ProposalProgramError`, so callers such as the CLI can separate
library failures from programming errors.
"""


class ProposalProgramError(Exception):
    pass


class MissingOutput(ProposalProgramError, KeyError):
    def __init__(self, address):
        super().__init__(address)
        self.address = address

    def __str__(self):
        return f"output address {self.address!r} was not realized"


class DuplicateAddress(ProposalProgramError):
    def __init__(self, address):
        super().__init__(f"address {address!r} visited twice in one execution")
        self.address = address


class OutOfSupportConstraint(ProposalProgramError):
    """A constrained value has zero density under its choice's distribution."""

    def __init__(self, address, value):
        super().__init__(f"constrained value {value!r} at {address!r} is out of support")
        self.address = address
        self.value = value


class SelectionMismatch(ProposalProgramError):
    pass


class InvalidParams(ProposalProgramError, ValueError):
    pass


class OutOfSupport(ProposalProgramError, ValueError):
    pass


class DomainError(ProposalProgramError, ValueError):
    pass


class ShapeMismatch(ProposalProgramError, ValueError):
    pass


class AllWeightsZero(ProposalProgramError):
    pass


class DegenerateBatch(ProposalProgramError):
    pass


class NonFiniteGradient(ProposalProgramError):
    def __init__(self, iteration, names=()):
        names = ", ".join(names)
        super().__init__(f"non-finite gradient at iteration {iteration}" + (f" ({names})" if names else ""))
        self.iteration = iteration


class NonEnumerable(ProposalProgramError):
    pass


class BranchLimit(ProposalProgramError):
    pass


class EmptySupport(ProposalProgramError):
    pass


class DegenerateCells(ProposalProgramError):
    pass


class DegeneratePair(ProposalProgramError):
    pass


class ConfigError(ProposalProgramError, ValueError):
    pass
