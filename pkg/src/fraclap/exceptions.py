"""Exception hierarchy shared by all modules."""


class FraclapError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FraclapError, ValueError):
    """An argument is malformed or out of range."""


class InvalidStructureError(FraclapError, ValueError):
    """A fractal or harmonic structure fails validation."""


class ResolutionError(InvalidInputError):
    """A measure is addressed more finely than the requested level."""


class UnsupportedOperationError(FraclapError):
    """The operation needs data the structure does not carry."""


class StructuralError(FraclapError, ArithmeticError):
    """A linear system is singular for structural reasons."""


class NotContractiveError(FraclapError, ArithmeticError):
    """The Picard map is not a contraction for the given potential.

    Carries the measured contraction factor and, when known, the depth at
    which cell-local problems become contractive.
    """

    def __init__(self, message, kappa, certified_depth=None):
        super().__init__(message)
        self.kappa = kappa
        self.certified_depth = certified_depth


class CertificationError(FraclapError, ArithmeticError):
    def __init__(self, message, cell, kappa):
        super().__init__(message)
        self.cell = cell
        self.kappa = kappa


class PositivityError(FraclapError, ArithmeticError):
    """A sampled solution is not strictly positive where it must be."""

    def __init__(self, message, witness):
        super().__init__(message)
        self.witness = witness
