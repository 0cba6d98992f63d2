"""Exception hierarchy shared by every module."""


class ScribbleSimError(Exception):
    """Base class for all errors raised by scribblesim."""


class EmptyMaskError(ScribbleSimError, ValueError):
    pass


class DegenerateRatioError(ScribbleSimError, ValueError):
    pass


class NoPathsError(ScribbleSimError, ValueError):
    pass


class TooFewPointsError(ScribbleSimError, ValueError):
    pass


class DimensionMismatchError(ScribbleSimError, ValueError):
    pass


class NoSourcesError(ScribbleSimError, ValueError):
    pass


class NoForegroundError(ScribbleSimError, ValueError):
    pass


class NoForegroundScribbleError(NoForegroundError):
    pass


class MalformedFileError(ScribbleSimError, ValueError):
    pass


class NoLabeledPixelsError(ScribbleSimError, ValueError):
    pass


class ShapeMismatchError(ScribbleSimError, ValueError):
    pass


class AllZeroDistanceMapError(ScribbleSimError, ValueError):
    pass


class UnsupportedLossError(ScribbleSimError, ValueError):
    pass


class MissingScribbleError(ScribbleSimError, FileNotFoundError):
    pass


class ParseError(ScribbleSimError, ValueError):
    """Manifest or config file could not be decoded."""

    def __init__(self, message, line=None, column=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}, column {column}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)
        self.line = line
        self.column = column
        self.field = field


class ValidationError(ScribbleSimError, ValueError):
    """Carries every violation found, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
