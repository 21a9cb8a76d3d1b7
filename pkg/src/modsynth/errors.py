"""Exception types shared across the package."""


class ModsynthError(Exception):
    """Base class for all package-specific errors."""


class InvalidStructure(ModsynthError):
    """Module sequence does not follow base - regular... - end effector."""


class ConnectorMismatch(ModsynthError):
    """Adjacent modules cannot mate at junction ``index``."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"connector mismatch at junction {index}")


class DimensionMismatch(ModsynthError):
    """Joint vector length does not match the assembly's joint count."""


class EmptyPath(ModsynthError):
    """Time parameterization requires at least one waypoint."""


class InvalidEndpoint(ModsynthError):
    """Planning endpoint violates limits or is in collision."""


class Unsatisfiable(ModsynthError):
    """Task generation cannot satisfy its structural constraints."""


class InitFailure(ModsynthError):
    """Population initialization exhausted its retry budget."""
