"""Exception types shared across the package."""


class LkpolarError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LkpolarError):
    """Inputs do not share the expected ambient dimension."""


class ZeroGenerator(LkpolarError):
    """A generating vector is (numerically) zero."""


class DomainError(LkpolarError):
    """An argument is outside the mathematical domain of an operation."""


class NoConvergence(LkpolarError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""


class IllConditioned(LkpolarError):
    """A linear system is too ill-conditioned to solve reliably."""


class EmptyCone(LkpolarError):
    """A positive-dimensional quantity was requested for a cone with no generators."""


class FaceNotInLattice(LkpolarError):
    """The given face does not belong to the cone's face lattice."""


class DegenerateFace(LkpolarError):
    """A face's geometric rank disagrees with its combinatorial dimension."""


class TruncationSuspect(LkpolarError):
    """A feasible point was found suspiciously close to the truncation radius."""


class SceneError(LkpolarError):
    """A scene file failed to parse or validate."""
