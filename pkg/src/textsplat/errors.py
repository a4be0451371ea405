"""Exception taxonomy shared across the package.

CLI exit codes: config errors map to 2, provider/transport errors to 3,
IO/format errors to 4.
"""


class TextsplatError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TextsplatError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateAlignmentError(TextsplatError):
    """Depth alignment has no unique least-squares solution."""


class ConfigError(TextsplatError):
    """Bad pipeline configuration (file or field level)."""


class ProviderError(TextsplatError):
    """Base for generative-provider failures."""


class ContractViolationError(ProviderError):
    """A provider response broke the provider contract."""


class ProtocolError(ProviderError):
    """A remote response did not match the wire schema."""


class TransportError(ProviderError):
    """The remote gateway could not be reached (after retries)."""


class PipelineError(TextsplatError):
    """A stage of the generation pipeline failed."""


class FormatError(TextsplatError):
    """A file on disk does not match its expected format."""


class PersistenceError(TextsplatError):
    """Writing artifacts failed partway through.

    ``partial_manifest`` lists the files that were written before the
    failure.
    """

    def __init__(self, message, partial_manifest=None):
        super().__init__(message)
        self.partial_manifest = list(partial_manifest or [])


class ManifestError(TextsplatError):
    """An artifact directory is missing required entries."""
