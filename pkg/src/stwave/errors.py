"""Exception types shared across the package.

All errors derive from StwaveError so callers can catch everything coming
out of this library with a single except clause.
"""


class StwaveError(Exception):
    pass


class InvalidDims(StwaveError):
    """Mesh resolution parameters out of range."""


class OmegaNotAligned(StwaveError):
    """Observation interval endpoints do not sit on the spatial grid."""


class NonManifold(StwaveError):
    """An edge is shared by more than two triangles."""


class MeshMismatch(StwaveError):
    """Operands built on different meshes."""


class OutOfDomain(StwaveError):
    """Evaluation point outside the space-time slab."""


class UnsupportedDegree(StwaveError):
    """Polynomial or quadrature degree outside the supported range."""


class BoundaryFacet(StwaveError):
    """Interior-facet operation applied to a boundary facet."""


class VariantConstraint(StwaveError):
    """Stabilizer variant incompatible with the chosen degree pair."""


class DegreeOrder(StwaveError):
    """Dual degree exceeds primal degree (locking regime)."""


class Singular(StwaveError):
    """Saddle-point matrix is numerically singular."""


class NonPositive(StwaveError):
    """Quantity that must be positive is not."""


class OutsideObservationDomain(StwaveError):
    """Observation data queried outside the observation cylinder."""
