"""Exception hierarchy for the engine.

The service layer maps these onto HTTP statuses: NotFoundError -> 404,
VersionConflictError -> 409, RejectionError subclasses -> 400, provider
faults -> 502, anything else -> 500.
"""

from __future__ import annotations


class LitsynthError(Exception):
    """Base class for all engine errors."""


class RejectionError(LitsynthError):
    """The caller's request is invalid for the current state."""


class ManifestError(RejectionError):
    """A collection manifest failed validation."""


class DuplicatePaperError(ManifestError):
    def __init__(self, paper_id: str):
        super().__init__(f"duplicate paper_id in manifest: {paper_id!r}")
        self.paper_id = paper_id


class DuplicateFacetError(RejectionError):
    """A facet with the same normalized name already exists in the collection."""


class MutationError(RejectionError):
    """A taxonomy mutation would violate a structural constraint."""


class PreconditionError(RejectionError):
    """An operation precondition does not hold."""


class NotFoundError(LitsynthError):
    """A referenced entity does not exist."""


class VersionConflictError(LitsynthError):
    """A mutation or selection was computed against a stale version."""


class TemplateError(LitsynthError):
    def __init__(self, message: str, placeholder: str | None = None):
        super().__init__(message)
        self.placeholder = placeholder


class ProviderError(LitsynthError):
    """Base for failures raised by the model-provider layer."""


class ProviderTransportError(ProviderError):
    """Transport-level failure talking to an endpoint; safe to retry."""

    retryable = True


class StructuredOutputError(ProviderError):
    """Model output failed structural validation after all repair attempts."""

    def __init__(self, message: str, raw_text: str = "", violations=()):
        super().__init__(message)
        self.raw_text = raw_text
        self.violations = tuple(violations)


class TranscriptError(ProviderError):
    """Transcript file missing, unreadable, or out of sync with requests."""


class TranscriptMissError(TranscriptError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no transcript entry for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


class MetadataFetchError(LitsynthError):
    """Metadata lookup failed; failed_ids carries the ids worth retrying."""

    retryable = True

    def __init__(self, message: str, failed_ids=()):
        super().__init__(message)
        self.failed_ids = tuple(failed_ids)
