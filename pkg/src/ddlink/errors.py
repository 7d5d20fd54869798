"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter combination that the simulator refuses to run."""


class UnsupportedConfigurationError(ConfigurationError):
    """A configuration that is structurally impossible, not merely invalid."""


class ShapeError(ValueError):
    """An array argument whose length or shape does not match the frame grid."""


class DegeneratePilotError(ValueError):
    """A reference frame with no energy; nothing can be estimated from it."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced an unusable result."""
