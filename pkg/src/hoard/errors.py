"""Exception hierarchy. Every error maps to a stable CLI exit code."""

from __future__ import annotations


class HoardError(Exception):
    """Base class; subclasses carry the process exit code for the CLI."""

    exit_code = 1


class ConfigError(HoardError):
    """Malformed or invalid configuration/scenario document."""

    exit_code = 2


class NotFoundError(HoardError):
    exit_code = 3


class DuplicateError(HoardError):
    exit_code = 4


class InUseError(HoardError):
    """Dataset is referenced by a running job."""

    exit_code = 5


class PinnedError(HoardError):
    """Eviction of a pinned dataset without --force."""

    exit_code = 6


class CapacityError(HoardError):
    """No feasible cache placement, even after allowed evictions."""

    exit_code = 7


class IllegalTransitionError(HoardError):
    exit_code = 8


class RemoteStoreError(HoardError):
    """Remote store unreachable or a read failed."""

    exit_code = 9


class NotOwnerError(HoardError):
    """Chunk request sent to a node that does not own the chunk."""

    exit_code = 10

    def __init__(self, message: str, owner: str | None = None):
        super().__init__(message)
        self.owner = owner


class ChunkCorruptError(HoardError):
    """Stored chunk failed its checksum twice (after one refetch)."""

    exit_code = 11


class InsufficientGPUsError(HoardError):
    """Gang placement impossible right now; the job should queue."""

    exit_code = 12


class WireProtocolError(HoardError):
    """Malformed frame on the chunk-transfer wire protocol."""

    exit_code = 13
