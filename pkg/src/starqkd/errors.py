"""Exception hierarchy shared by all modules."""


class StarQKDError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(StarQKDError, ValueError):
    """A numeric argument lies outside its admissible range."""


class InvalidNetworkError(StarQKDError, ValueError):
    pass


class InsufficientChannelsError(StarQKDError, ValueError):
    """The wavelength grid has fewer channels than the plan needs."""


class RoutingError(StarQKDError):
    pass


class ConfigurationError(StarQKDError, ValueError):
    """Scenario or parameter set is inconsistent.

    ``violations`` holds one human-readable line per problem, each prefixed
    with the dotted field path when one is known.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = list(violations or [])
        if self.violations:
            message = message + "\n" + "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(message)


class CalibrationInfeasibleError(StarQKDError, ValueError):
    """Measured QBER sits below the model's zero-excess floor."""

    def __init__(self, measured: float, floor: float, label: str = ""):
        self.measured = measured
        self.floor = floor
        self.label = label
        where = f"{label}: " if label else ""
        super().__init__(
            f"{where}measured QBER {measured:.4%} is below the model floor {floor:.4%}"
        )


class ProtocolDesyncError(StarQKDError):
    """Sender and receiver records are not aligned by pulse index."""


class InsufficientDataError(StarQKDError):
    pass


class DegenerateBoundsError(StarQKDError):
    """Decoy bounds admit no single-photon yield, so no key can be claimed."""


class ComparisonError(StarQKDError):
    pass
