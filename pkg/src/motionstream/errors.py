"""Exception hierarchy.

Every error raised deliberately by this package derives from
:class:`MotionStreamError` and carries a stable ``code`` attribute so the CLI
can emit machine-readable failure records.
"""

from __future__ import annotations


class MotionStreamError(Exception):
    """Base class for structured errors."""

    code = "error"


class DimensionError(MotionStreamError):
    """Array shape or degree-of-freedom count does not match the contract."""

    code = "dimension_mismatch"


class SkeletonError(MotionStreamError):
    """Invalid skeleton description (ordering, axes, mirror map, ...)."""

    code = "invalid_skeleton"


class NumericalError(MotionStreamError):
    """A numerical routine produced non-finite values.

    ``step`` identifies the failing iteration when applicable.
    """

    code = "numerical_failure"

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FormatError(MotionStreamError):
    """Malformed persisted artifact (clip, codec, index, skeleton file)."""

    code = "format_error"


class VersionMismatchError(FormatError):
    code = "version_mismatch"


class SkeletonHashMismatchError(FormatError):
    code = "skeleton_hash_mismatch"


class TruncatedFileError(FormatError):
    """File ends before the payload announced in its header.

    ``byte_offset`` is the offset at which data ran out.
    """

    code = "truncated_file"

    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


class EmptyIndexError(MotionStreamError):
    code = "empty_index"


class RankError(MotionStreamError):
    """Requested latent dimension exceeds the achievable data rank."""

    code = "rank_deficient"

    def __init__(self, message: str, achievable_rank: int):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class GeneratorError(MotionStreamError):
    """A block generator failed mid-rollout; context in the message."""

    code = "generator_failure"


class ProtocolError(MotionStreamError):
    """Malformed wire message."""

    code = "protocol_error"
