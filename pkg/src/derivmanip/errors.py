"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """A numeric argument is outside the domain an operation accepts."""


class ConfigError(ValueError):
    """A configuration (spec, run config, CLI arguments) is inconsistent."""


class ShapeError(ValueError):
    """Array shapes do not line up."""


class QuadratureError(ArithmeticError):
    """The integrand produced a non-finite sample."""


class ParseError(ValueError):
    """A data file could not be parsed."""


class StratificationError(ValueError):
    """A class is too small to be split."""


class DivergenceError(RuntimeError):
    """Training produced non-finite parameters."""
