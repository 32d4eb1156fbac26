"""Exception types shared across the package."""


class UigraphError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGeometryError(UigraphError):
    """A bounding box is degenerate (non-positive width or height)."""


class InvalidInputError(UigraphError):
    """An input value violates a documented precondition."""


class ParseError(UigraphError):
    """HTML tokenization failed. Carries the byte offset of the construct."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class StructureError(UigraphError):
    """Strict tree building hit a tag mismatch."""

    def __init__(self, message: str, tag: str, offset: int):
        super().__init__(f"{message}: <{tag}> (byte offset {offset})")
        self.tag = tag
        self.offset = offset


class MetricError(UigraphError):
    """A metric could not be computed for the given pair."""


class ShapeError(UigraphError):
    """Tensor shapes do not chain."""


class NumericError(UigraphError):
    """A non-finite value appeared where finite math was required."""


class VocabularyError(UigraphError):
    """A token id falls outside the registered vocabulary."""


class CheckpointError(UigraphError):
    """Checkpoint contents do not match the requested configuration."""


class PipelineError(UigraphError):
    """Inference pipeline failure, labeled with the stage that failed."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
