"""Exception types raised by foxli."""


class FoxliError(Exception):
    """Base class for all foxli errors."""


class ValidationError(FoxliError):
    """A parameter or configuration value is out of its documented range."""


class StrictConfigError(ValidationError):
    """A scenario file contains an unknown key."""


class GridMismatchError(FoxliError):
    """Binary field operation attempted on fields with different grids."""


class ResolutionError(FoxliError):
    """A feature (waist, aperture) is not resolvable on the grid."""


class SamplingError(FoxliError):
    """Fresnel transfer phase would alias on this grid for this distance."""


class SizeCapError(FoxliError):
    """A dense matrix or Fock space would exceed the configured size cap."""


class ConvergenceError(FoxliError):
    """Iterative eigensolver did not reach the requested tolerance.

    Carries the best-so-far residuals in ``best_residuals``.
    """

    def __init__(self, message, best_residuals=None):
        super().__init__(message)
        self.best_residuals = best_residuals


class NearDefectivePairError(FoxliError):
    """A right/left eigenvector pair is nearly orthogonal.

    Signals proximity to an exceptional point where biorthonormalization
    breaks down.
    """


class QuadratureQualityError(FoxliError):
    """A matrix that must be Hermitean came out asymmetric beyond tolerance."""


class ConsistencyError(FoxliError):
    """A quantity with a mandated structure (real, positive) violated it."""


class PositionError(FoxliError):
    """An atom position lies outside the transverse grid."""


class StepSizeError(FoxliError):
    """Requested integration step violates the stability precondition."""


class AlgebraError(FoxliError):
    """Operator-set construction precondition violated."""


class PhysicalityError(FoxliError):
    """A rate or probability came out with an unphysical sign."""
