"""Exception types shared across the package."""


class LatticeOhmError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(LatticeOhmError, ValueError):
    """An argument violates a documented precondition."""


class CapacityError(LatticeOhmError):
    """A requested box or matrix exceeds the configured size cap."""


class GeometryError(LatticeOhmError):
    """A site, bond or translate falls outside the ambient box."""


class NumericalError(LatticeOhmError):
    """A numerical routine failed its own accuracy check."""


class CalibrationError(NumericalError):
    """A derived formula failed its reconstruction oracle."""


class CheckpointError(LatticeOhmError):
    """A requested time is not among the stored checkpoints."""


class ConfigError(LatticeOhmError):
    """A run configuration failed schema validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message
