"""Exception hierarchy shared by all modules."""


class ServoError(Exception):
    """Base class for every error raised by this package."""


class SingularDepthError(ServoError, ValueError):
    pass


class BehindCameraError(ServoError, ValueError):
    pass


class InvalidDepthError(ServoError, ValueError):
    pass


class DegenerateProjectionError(ServoError, ValueError):
    pass


class SingularInertiaError(ServoError, ArithmeticError):
    pass


class DimensionError(ServoError, ValueError):
    pass


class VisibilityError(ServoError):
    """A feature left the viewing frustum of one of the cameras.

    ``camera`` names the camera, ``feature`` is the feature index and ``depth``
    the offending camera-frame depth. ``t`` is filled in by the simulator.
    """

    def __init__(self, message, camera=None, feature=None, depth=None, t=None):
        super().__init__(message)
        self.camera = camera
        self.feature = feature
        self.depth = depth
        self.t = t

    def __str__(self):
        base = super().__str__()
        if self.t is not None:
            return f"t={self.t:.6g}s: {base}"
        return base


class ConfigError(ServoError, ValueError):
    """Invalid configuration text.

    Carries the 1-based ``line`` for syntax errors and ``field`` for
    validation failures.
    """

    def __init__(self, message, line=None, field=None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)
        self.detail = message
        self.line = line
        self.field = field


class TraceFormatError(ServoError, ValueError):
    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record
