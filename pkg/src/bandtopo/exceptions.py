"""Exception types shared across the toolkit."""


class BandTopoError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(BandTopoError):
    """Malformed model config, unknown builtin, or bad parameter."""


class DomainError(BandTopoError):
    """Evaluation outside a continuum box, or geometry leaving the domain."""


class RefinementError(BandTopoError):
    """Gap minimization failed to reach the requested residual."""

    def __init__(self, message, residual=None, position=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.position = position
        self.iterations = iterations


class LocusAmbiguityError(BandTopoError):
    """A flagged-cell cluster is neither point-like nor curve-like."""


class SurfaceError(BandTopoError):
    """Invalid surface construction (radius too large, bad slice, ...)."""


class MeshResolutionError(BandTopoError):
    """Integer rounding residual too large: mesh too coarse or surface too
    close to the nodal set."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedModelError(BandTopoError):
    """Operation not defined for this model class (e.g. w2 on two bands)."""


class ObstructionError(BandTopoError):
    """A charge is not well-defined on the given surface (non-vanishing
    first Stiefel-Whitney class on an essential cycle)."""


class LinkingError(BandTopoError):
    """Linking number not computable (loops touching, non-contractible)."""


class LedgerError(BandTopoError):
    """Charge ledger is missing entries required by a cancellation check."""


class ComplexError(BandTopoError):
    """Invalid cubical complex construction (tube self-touching, bad locus)."""
