"""Exception hierarchy shared across the pipeline stages."""


class HazpipeError(Exception):
    """Base class for every error raised by this package."""


class DegenerateInput(HazpipeError, ValueError):
    pass


class InvalidFraction(HazpipeError, ValueError):
    pass


class EmptyMask(HazpipeError, ValueError):
    pass


class InvalidFps(HazpipeError, ValueError):
    pass


class EmptyTrace(HazpipeError, ValueError):
    pass


class DetectorUnavailable(HazpipeError, RuntimeError):
    pass


class MalformedResponse(HazpipeError, ValueError):
    pass


class ParseError(HazpipeError, ValueError):
    """Raised for a bad line in a detections JSONL file.

    Attributes:
        line: 1-based line number of the offending record.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateBox(HazpipeError, ValueError):
    pass


class UniformRegion(HazpipeError):
    """No colour structure inside the box; GrabCut cannot separate anything.

    ``fallback`` holds the padded rectangle as a mask so callers can degrade
    gracefully instead of failing.
    """

    def __init__(self, message: str, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class InsufficientSamples(HazpipeError, ValueError):
    pass


class InconsistentIds(HazpipeError, ValueError):
    pass


class XmlError(HazpipeError, ValueError):
    pass


class UnknownClass(HazpipeError, KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown hazmat class {self.name!r}"


class OutOfBoundsBox(HazpipeError, ValueError):
    pass


class EmptySet(HazpipeError, ValueError):
    pass


class SinkClosed(HazpipeError, RuntimeError):
    pass


class IoFailure(HazpipeError, OSError):
    pass


class StageError(HazpipeError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
