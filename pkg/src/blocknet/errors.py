"""Exception hierarchy shared across the package."""


class BlocknetError(Exception):
    """Base class for all package errors."""


class ConfigError(BlocknetError):
    """Invalid or inconsistent configuration."""


class DegenerateCovariateError(BlocknetError):
    """A covariate layer has zero off-diagonal variance."""


class NumericalError(BlocknetError):
    """A numerical routine failed in a way that cannot be recovered."""
