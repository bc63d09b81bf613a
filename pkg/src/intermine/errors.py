"""Exception types raised across the package."""

from __future__ import annotations


class InterMineError(ValueError):
    """Base class for all domain errors."""


class EmptyInput(InterMineError):
    pass


class MixedScenes(InterMineError):
    pass


class NonContiguousTrack(InterMineError):
    pass


class NonPositiveDt(InterMineError):
    pass


class StepOutOfRange(InterMineError, IndexError):
    pass


class NonPositiveBuffer(InterMineError):
    pass


class PointNotOnPolyline(InterMineError):
    pass


class InvalidPolyline(InterMineError):
    pass


class ComponentError(InterMineError):
    """A conflict component violates the connectivity precondition."""


class MtlSyntaxError(InterMineError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class BadInterval(MtlSyntaxError):
    pass


class UnknownAtom(InterMineError, KeyError):
    def __str__(self) -> str:
        return ValueError.__str__(self)


class InvalidSpec(InterMineError):
    pass


class ZeroScenes(InterMineError):
    pass


class UnknownEventId(InterMineError, KeyError):
    def __str__(self) -> str:
        return ValueError.__str__(self)
