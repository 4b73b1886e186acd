"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: infeasibility (finite-norm
conditions violated) is distinct from numerical breakdown, which is distinct
from malformed input.
"""


class H2TauError(Exception):
    """Base class for all package-specific errors."""


class ModelInputError(H2TauError):
    """Malformed system description (dimensions, schema, unknown tags)."""


class DelayOrderingError(H2TauError):
    """Delays violate positivity or strict ordering after a parameter update."""


class DifferentiationIndexError(H2TauError):
    """The DDAE has differentiation index larger than one."""


class NotStronglyStableError(H2TauError):
    """Strong exponential stability test failed."""


class FeedthroughError(H2TauError):
    """Feedthrough present (directly or under infinitesimal delay
    perturbations); the strong H2 norm is infinite."""


class UnstableError(H2TauError):
    """Reduced discretization is unstable and pole flipping was not allowed."""


class DefectiveEigenproblemError(H2TauError):
    """Eigenvector basis too ill-conditioned to flip poles reliably."""


class ReductionError(H2TauError):
    """Schur-complement elimination failed (A22 numerically singular)."""


class LyapunovError(H2TauError):
    """Lyapunov equation unsolvable or residual check failed."""


class CharacteristicRootError(H2TauError):
    """Resolvent (or rational-approximation denominator) singular at the
    requested frequency point."""


class OracleDivergenceError(H2TauError):
    """Quadrature tail fails to decay; the frequency-domain integral appears
    divergent (feedthrough suspected)."""
