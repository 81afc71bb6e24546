"""Exception hierarchy for chipqa.

Every error raised on bad input derives from :class:`ChipQAError`; the
validation errors also derive from :class:`ValueError` so callers that only
care about "bad data" can catch that.
"""


class ChipQAError(Exception):
    """Base class for all chipqa errors."""

    def __init__(self, message="", *, context=None):
        super().__init__(message)
        self.message = message
        self.context = context

    def with_context(self, context):
        """Attach a file or probeset name and return self (for re-raising)."""
        self.context = context if self.context is None else f"{context}: {self.context}"
        return self

    def __str__(self):
        if self.context:
            return f"{self.context}: {self.message}"
        return self.message


class ParseError(ChipQAError, ValueError):
    """Malformed text input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None, **kw):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, **kw)
        self.line = line


class LayoutError(ChipQAError, ValueError):
    pass


class DuplicateCoordinate(LayoutError):
    pass


class CoordinateOutOfRange(LayoutError):
    pass


class ProbesetTooSmall(LayoutError):
    pass


class MissingProbe(ChipQAError, ValueError):
    def __init__(self, x, y, **kw):
        super().__init__(f"no intensity for layout probe at ({x}, {y})", **kw)
        self.x, self.y = x, y


class UnknownCoordinate(ChipQAError, ValueError):
    def __init__(self, x, y, line=None, **kw):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}coordinate ({x}, {y}) is not a layout probe", **kw)
        self.x, self.y = x, y


class BadIntensity(ChipQAError, ValueError):
    pass


class NotEnoughChips(ChipQAError, ValueError):
    pass


class ConfigError(ChipQAError, ValueError):
    pass


class ShapeError(ChipQAError, ValueError):
    pass


class BadInput(ChipQAError, ValueError):
    pass


class EmptyInput(ChipQAError, ValueError):
    pass


class RefMismatch(ChipQAError, KeyError):
    def __str__(self):
        return ChipQAError.__str__(self)


class LayoutMismatch(ChipQAError, ValueError):
    pass


class DegenerateChip(ChipQAError, ValueError):
    pass


class UnknownChip(ChipQAError, KeyError):
    def __str__(self):
        return ChipQAError.__str__(self)


class PaletteError(ChipQAError, ValueError):
    pass


class BadArtifact(ChipQAError, ValueError):
    pass


class IoError(ChipQAError, OSError):
    pass


class ConvergenceWarning(RuntimeWarning):
    """IRLS hit ``max_iter`` before the parameter change dropped below ``tol``."""
