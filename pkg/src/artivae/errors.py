"""Exception types shared across the package."""


class ArtivaeError(Exception):
    """Base class for runtime failures (CLI exit code 1)."""


class StageError(ArtivaeError):
    """A guided-PCA stage could not be computed."""

    def __init__(self, stage, reason):
        self.stage = stage
        super().__init__(f"{reason} at stage {stage}")


class NonFiniteLossError(ArtivaeError):
    """Loss became NaN/Inf; carries the offending frame index within the batch."""

    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"non-finite loss at frame {frame_index}")


class TrainingAborted(ArtivaeError):
    def __init__(self, epoch, batch, cause):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training aborted at epoch {epoch}, batch {batch}: {cause}")
