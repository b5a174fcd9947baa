"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class PathEnergyError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


class ShapeMismatch(PathEnergyError, ValueError):
    pass


class IncompatibleSize(PathEnergyError, ValueError):
    pass


class ZeroMass(PathEnergyError, ValueError):
    pass


class NonPositiveDensity(PathEnergyError, ValueError):
    pass


class MassMismatch(PathEnergyError, ValueError):
    """Balanced transport was asked to connect slices of different mass."""

    def __init__(self, message: str, slice_index: int | None = None):
        if slice_index is not None:
            message = f"slice {slice_index} -> {slice_index + 1}: {message}"
        super().__init__(message)
        self.slice_index = slice_index


class DisconnectedDomain(MassMismatch):
    """A component cut off by obstacles does not conserve its own mass."""


class SolverDivergence(PathEnergyError, RuntimeError):
    def __init__(self, message: str, slice_index: int | None = None):
        if slice_index is not None:
            message = f"slice {slice_index}: {message}"
        super().__init__(message)
        self.slice_index = slice_index


class UnsupportedFormat(PathEnergyError, ValueError):
    pass


class NonSquare(PathEnergyError, ValueError):
    pass


class CorruptHeader(PathEnergyError, ValueError):
    pass


class IoFailure(PathEnergyError, OSError):
    pass


class ConfigError(PathEnergyError, ValueError):
    pass
