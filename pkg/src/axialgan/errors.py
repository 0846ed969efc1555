"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition of a call was violated."""


class ConfigurationError(ValueError):
    """A layer or run was configured outside its supported range."""


class NumericalError(ArithmeticError):
    """A forward computation produced NaN or Inf from finite inputs."""


class FormatError(ValueError):
    """A file does not carry the expected magic bytes or version."""


class IntegrityError(ValueError):
    """A file is truncated, corrupt, or does not match the target model."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite during training."""
