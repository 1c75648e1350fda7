"""Exception types shared across the package."""


class NetfolkError(Exception):
    """Base class for all package errors."""


class InputError(NetfolkError):
    """Malformed input data (graphs, games, configs)."""


class AcyclicGraphError(NetfolkError):
    """Raised when a cycle computation is asked about a graph with no cycle."""


class DegenerateProtocolError(NetfolkError):
    """The communication protocol is undefined for this cycle length.

    Block count is longest_cycle - 3, so anything with a longest cycle of
    3 or less has no blocks to run. Callers may supply an explicit
    cycle-length override instead of relying on the computed value.
    """


class FeasibilityError(NetfolkError):
    """A payoff point or threshold selection is infeasible; carries a certificate."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class PreconditionError(NetfolkError):
    """A simulation precondition failed; carries a witness (e.g. a cut vertex)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
