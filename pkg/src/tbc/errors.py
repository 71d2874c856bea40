"""Exception hierarchy. Each class carries the CLI exit code for its failure class."""

from __future__ import annotations


class TbcError(Exception):
    exit_code = 5


class ParameterError(TbcError, ValueError):
    exit_code = 2


class SchemeParseError(TbcError, ValueError):
    exit_code = 2


class DomainError(TbcError, ValueError):
    pass


class SingularSymbolError(TbcError):
    """Q_{s+1} symbol vanishes: the implicit operator is not invertible."""


class CharacteristicBoundaryError(TbcError):
    """a_p(z) = 0, so the companion matrix is undefined."""


class DegenerateStencilError(TbcError):
    pass


class IndexInconclusiveError(TbcError):
    pass


class NearCircleError(TbcError):
    """A spatial root sits within tolerance of the unit circle."""


class AssumptionViolationError(TbcError):
    pass


class UnsupportedSchemeError(TbcError):
    pass


class ClusteredEigenvaluesError(TbcError):
    pass


class ResolutionError(TbcError):
    exit_code = 3


class SingularExpansionError(TbcError):
    pass


class CompatibilityError(TbcError):
    exit_code = 4

    def __init__(self, message: str, defects=None):
        super().__init__(message)
        self.defects = defects


class PadTooSmallError(TbcError):
    def __init__(self, message: str, suggested: int):
        super().__init__(message)
        self.suggested = suggested


class TailDropError(TbcError):
    exit_code = 2


class DivergenceError(TbcError):
    pass
