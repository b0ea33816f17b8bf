"""Shared exception types."""


class CruiseError(Exception):
    pass


class SingularAttitude(CruiseError):
    """Pitch too close to +-90 deg for the Euler-rate map."""


class NonFiniteState(CruiseError):
    """Integration produced NaN or inf."""


class InvalidTrackSpec(CruiseError):
    pass


class ShapeMismatch(CruiseError):
    pass


class LengthMismatch(CruiseError):
    pass


class NonFiniteLoss(CruiseError):
    """Aborts a policy update; caller keeps the old parameters."""


class EmptyResults(CruiseError):
    pass


class ConfigError(CruiseError):
    """Bad or unknown config field. Message names the offending field."""
