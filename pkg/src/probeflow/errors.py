"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ProbeStateError(RuntimeError):
    """A probe's kinematic state is required at a time where it has not been
    resolved (e.g. a model-coupled probe queried outside a running
    simulation)."""


class StabilityError(RuntimeError):
    """A finite-volume update produced densities outside [0, 1] beyond
    floating-point tolerance."""


class FrontTrackError(RuntimeError):
    """Internal inconsistency in the wave-front evolution (event bookkeeping
    or front-count growth)."""
