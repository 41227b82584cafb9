"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`VigxrayError` so the CLI
can map it to a stable exit code.
"""


class VigxrayError(Exception):
    """Base class for all package errors."""


class ValidationError(VigxrayError, ValueError):
    """Bad argument, configuration or dimensions supplied by the caller."""


# image / mask decoding

class UnsupportedFormatError(VigxrayError):
    """File is readable but not in a format we decode."""


class CorruptStreamError(VigxrayError):
    """File claims a supported format but its contents are damaged."""


class AmbiguousMaskError(VigxrayError):
    """Mask file cannot be interpreted as a single binary channel."""


# binary containers (weights, traces)

class ContainerError(VigxrayError):
    """Base for container read failures."""


class FormatError(ContainerError):
    """Wrong magic bytes: not a file of the expected kind."""


class VersionError(ContainerError):
    """Container version is not one this build understands."""


class TruncatedError(ContainerError):
    """Container ended before all declared payloads were read."""


class ConsistencyError(ContainerError):
    """Header and payload disagree (shapes, counts, non-finite values)."""


class TraceInvariantError(ContainerError):
    """A stored graph violates a structural invariant."""

    def __init__(self, message, layer=None, node=None):
        super().__init__(message)
        self.layer = layer
        self.node = node
