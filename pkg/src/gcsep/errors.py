"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """An operation's precondition is violated."""


class ConfigError(ValueError):
    """Invalid model, training or run configuration."""
