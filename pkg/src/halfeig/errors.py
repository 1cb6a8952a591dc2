"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """An operator, grid or run configuration is malformed."""


class NotDiagonallyDominant(ValueError):
    """A diffusion matrix cannot be split over the stencil directions with
    nonnegative weights, so the monotone scheme rejects the control."""


class SolverFailure(RuntimeError):
    """An iterative solve did not converge or produced an uncertified result.

    ``trace`` carries whatever diagnostic history the solver collected.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class RefusedNoMP(ValueError):
    """Dirichlet solve refused: the shift is not below the principal
    half-eigenvalue, so no maximum principle guarantees a signed solution."""


class ThetaTooSmall(RuntimeError):
    """Monotone iteration produced a decreasing step."""


class EstimateUnstable(RuntimeError):
    """Monte-Carlo functional overflowed even in log-sum-exp form."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
