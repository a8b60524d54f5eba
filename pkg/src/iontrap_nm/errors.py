"""Exception and warning types shared across the package."""


class InvalidDimensionError(ValueError):
    """A truncation dimension or matrix shape is not usable."""


class IntegrationError(RuntimeError):
    """The master-equation integrator lost trace beyond tolerance."""


class TruncationWarning(UserWarning):
    """Population is leaking into the top Fock levels of a mode."""
