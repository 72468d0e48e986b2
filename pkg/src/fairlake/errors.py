"""Exception hierarchy shared by every fairlake component.

Each error carries a stable machine-readable ``code`` so the HTTP layer can
serialize it and the client can re-raise the same class on the other side.
"""

from __future__ import annotations

from typing import Any


class FairlakeError(Exception):
    """Base class; ``code`` is the wire identifier for the error."""

    code = "Error"
    http_status = 400

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_payload(self) -> dict:
        payload = {"error": self.code, "message": self.message}
        payload.update(self.details)
        return payload


# --- erm-core ---------------------------------------------------------------

class AlreadyBootstrapped(FairlakeError):
    code = "AlreadyBootstrapped"
    http_status = 409

class InvalidSpec(FairlakeError):
    code = "InvalidSpec"
    http_status = 422

class NoLinkTarget(FairlakeError):
    code = "NoLinkTarget"
    http_status = 422

class BreakingChange(FairlakeError):
    code = "BreakingChange"
    http_status = 409

class NameCollision(FairlakeError):
    code = "NameCollision"
    http_status = 409

class DuplicateTerm(FairlakeError):
    code = "DuplicateTerm"
    http_status = 409

class NotAVocabulary(FairlakeError):
    code = "NotAVocabulary"
    http_status = 422

class UnknownEntityType(FairlakeError):
    code = "UnknownEntityType"
    http_status = 404


# --- catalog-service --------------------------------------------------------

class InvalidToken(FairlakeError):
    code = "InvalidToken"
    http_status = 401

class AccessDenied(FairlakeError):
    code = "AccessDenied"
    http_status = 403

class ValidationFailed(FairlakeError):
    code = "ValidationFailed"
    http_status = 422

class StaleWrite(FairlakeError):
    code = "StaleWrite"
    http_status = 409

class InvalidQuery(FairlakeError):
    code = "InvalidQuery"
    http_status = 422

class NotBootstrapped(FairlakeError):
    code = "NotBootstrapped"
    http_status = 409


# --- object-store -----------------------------------------------------------

class ChecksumMismatch(FairlakeError):
    code = "ChecksumMismatch"
    http_status = 409

class NamespaceMissing(FairlakeError):
    code = "NamespaceMissing"
    http_status = 409

class NotFound(FairlakeError):
    code = "NotFound"
    http_status = 404

class VersionNotFound(FairlakeError):
    code = "VersionNotFound"
    http_status = 404

class VersionDeleted(FairlakeError):
    """Version tombstoned; metadata retained, bytes withheld."""

    code = "VersionDeleted"
    http_status = 410


# --- bag-package ------------------------------------------------------------

class DuplicatePath(FairlakeError):
    code = "DuplicatePath"
    http_status = 409

class MissingDigest(FairlakeError):
    code = "MissingDigest"
    http_status = 422

class IncompleteBag(FairlakeError):
    code = "IncompleteBag"
    http_status = 409

class NotReproducible(FairlakeError):
    code = "NotReproducible"
    http_status = 409

class BadBagPath(FairlakeError):
    code = "BadBagPath"
    http_status = 422


# --- identifier -------------------------------------------------------------

class InvalidDigest(FairlakeError):
    code = "InvalidDigest"
    http_status = 422

class NoLocations(FairlakeError):
    code = "NoLocations"
    http_status = 422

class UnknownIdentifier(FairlakeError):
    code = "UnknownIdentifier"
    http_status = 404

class Tombstoned(FairlakeError):
    code = "Tombstoned"
    http_status = 409


# --- ml-provenance ----------------------------------------------------------

class EmptyMembership(FairlakeError):
    code = "EmptyMembership"
    http_status = 422

class WrongMemberType(FairlakeError):
    code = "WrongMemberType"
    http_status = 422

class InvalidChecksum(FairlakeError):
    code = "InvalidChecksum"
    http_status = 422

class ConfigInvalid(FairlakeError):
    code = "ConfigInvalid"
    http_status = 422

class MaterializationFailed(FairlakeError):
    code = "MaterializationFailed"
    http_status = 502

class InvalidState(FairlakeError):
    code = "InvalidState"
    http_status = 409

class PartialUpload(FairlakeError):
    code = "PartialUpload"
    http_status = 502

class UnknownAssociation(FairlakeError):
    code = "UnknownAssociation"
    http_status = 404

class TypeMismatch(FairlakeError):
    code = "TypeMismatch"
    http_status = 422

class WorkloadFailed(FairlakeError):
    """Raised out of an execution scope after the failure has been recorded."""

    code = "WorkloadFailed"
    http_status = 500


# --- dataset-ops ------------------------------------------------------------

class UnresolvableMinid(FairlakeError):
    code = "UnresolvableMinid"
    http_status = 404

class DigestMismatch(FairlakeError):
    code = "DigestMismatch"
    http_status = 502

class FetchFailed(FairlakeError):
    code = "FetchFailed"
    http_status = 502

class NonDisjointLabels(FairlakeError):
    code = "NonDisjointLabels"
    http_status = 422

class ChecksumDrift(FairlakeError):
    code = "ChecksumDrift"
    http_status = 500


_REGISTRY = {
    cls.code: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, FairlakeError)
}


def from_payload(payload: dict, default_message: str = "") -> FairlakeError:
    """Rebuild the exception class a server serialized with ``to_payload``."""
    code = payload.get("error", "Error")
    cls = _REGISTRY.get(code, FairlakeError)
    message = payload.get("message", default_message)
    details = {k: v for k, v in payload.items() if k not in ("error", "message")}
    return cls(message, **details)
