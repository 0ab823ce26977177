"""Exception hierarchy.

Every contract violation raised by the package derives from
:class:`FpmpcError`; the CLI maps these to exit code 2.
"""


class FpmpcError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FpmpcError, ValueError):
    pass


class ShapeError(FpmpcError, ValueError):
    pass


class BoundViolation(FpmpcError, ValueError):
    """Plaintext exceeds the certified bound; sharing it would void the leakage certificate."""


class DomainError(FpmpcError, ValueError):
    pass


class IncompleteSet(FpmpcError, ValueError):
    """Shares handed to reconstruct do not form one complete set."""


class ReuseError(FpmpcError, RuntimeError):
    """A Beaver triple was consumed twice."""


class TriplesExhausted(FpmpcError, RuntimeError):
    pass


class ProtocolDesync(FpmpcError, RuntimeError):
    """Parties diverged: mismatched tags, shapes, sequence numbers or program length."""


class PeerUnreachable(FpmpcError, ConnectionError):
    pass


class NumericFailure(FpmpcError, ArithmeticError):
    pass


class FormatError(FpmpcError, ValueError):
    pass


class TrainingDiverged(FpmpcError, ArithmeticError):
    pass
