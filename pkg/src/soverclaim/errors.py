"""Platform exception hierarchy.

Every failure the public API surfaces derives from SoverClaimError so
callers can catch platform errors as one family; subsystems raise the
specific class named in their contract.
"""

from __future__ import annotations


class SoverClaimError(Exception):
    """Base class for all platform errors."""


# -- crypto ----------------------------------------------------------------

class AuthFailure(SoverClaimError):
    """Authenticated decryption or key unwrap failed."""


class WrongPassphrase(AuthFailure):
    """Key store passphrase did not authenticate."""


class CorruptStore(SoverClaimError):
    """Key store file is malformed or truncated."""


class KeystoreLocked(SoverClaimError):
    """Another writer holds the key store lock."""


# -- did -------------------------------------------------------------------

class MalformedDid(SoverClaimError):
    pass


class UnknownDid(SoverClaimError):
    pass


# -- ledger ----------------------------------------------------------------

class BadQuorumConfig(SoverClaimError):
    pass


class BadSignature(SoverClaimError):
    pass


class SchemaViolation(SoverClaimError):
    pass


class DuplicateSchemaId(SoverClaimError):
    pass


class LedgerUnavailable(SoverClaimError):
    pass


# -- storage ---------------------------------------------------------------

class BadName(SoverClaimError):
    pass


class BucketExists(SoverClaimError):
    pass


class NoSuchBucket(SoverClaimError):
    pass


class NoSuchObject(SoverClaimError):
    pass


class InsufficientNodes(SoverClaimError):
    pass


class NotEnoughShards(SoverClaimError):
    pass


class ExpiredCapability(SoverClaimError):
    pass


class PartialDeletion(SoverClaimError):
    """Some nodes were unreachable during delete; pointers are gone and GC
    will finish the job. Carries the partial report."""

    def __init__(self, report):
        super().__init__(f"{len(report.receipts)} receipts collected, some nodes unreachable")
        self.report = report


# -- didcomm ---------------------------------------------------------------

class InvitationConsumed(SoverClaimError):
    pass


class HandshakeTimeout(SoverClaimError):
    pass


class ConnectionClosed(SoverClaimError):
    pass


class DecryptFailure(SoverClaimError):
    pass


class DeliveryFailed(SoverClaimError):
    """All transport retries exhausted."""


# -- credentials -----------------------------------------------------------

class AttributeMismatch(SoverClaimError):
    pass


class RevokedDefinition(SoverClaimError):
    pass


class UnsatisfiableRequest(SoverClaimError):
    pass


class NotIssuer(SoverClaimError):
    pass


class AlreadyRevoked(SoverClaimError):
    pass


# -- audit -----------------------------------------------------------------

class WrongKey(SoverClaimError):
    pass


class DeniedByUser(SoverClaimError):
    pass


class HashMismatch(SoverClaimError):
    pass


# -- agents ----------------------------------------------------------------

class ProtocolError(SoverClaimError):
    pass


class DocumentUnavailable(SoverClaimError):
    pass


class PolicyRejected(SoverClaimError):
    pass


class OwnershipUnproven(SoverClaimError):
    pass


# -- bench -----------------------------------------------------------------

class ScenarioUnknown(SoverClaimError):
    pass
