class HolosimError(Exception):
    """Base class for simulator errors."""


class ConfigError(HolosimError, ValueError):
    """Unknown key or infeasible/out-of-range parameter value."""


class DataError(HolosimError, ValueError):
    """Malformed or inconsistent base-population input."""


class CalibrationError(HolosimError, RuntimeError):
    """Effect calibration has no admissible solution."""
