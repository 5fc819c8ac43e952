class DegenerateGridError(ValueError):
    """Raised for density fields or grids with no voxels."""


class FormatError(ValueError):
    """Base class for binary grid decoding failures."""


class BadMagicError(FormatError):
    pass


class BadVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class KernelStalled(RuntimeError):
    """The literal skip kernel stopped making progress.

    ``samples`` holds whatever was collected before the stall was detected.
    """

    def __init__(self, samples):
        super().__init__(f"kernel stalled after {len(samples)} samples")
        self.samples = samples
