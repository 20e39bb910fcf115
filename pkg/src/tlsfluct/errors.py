"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class NonPhysicalError(ValidationError):
    """Parameters imply a non-positive internal loss (1/Q_i <= 0)."""


class FitError(RuntimeError):
    """A fit could not be carried out or did not converge."""


class IllPosedFitError(FitError):
    """The data cannot constrain the requested model."""


class NegativeLossTangentWarning(UserWarning):
    """The interleaved estimator produced values below zero."""
