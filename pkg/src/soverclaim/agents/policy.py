"""Document validation policy the issuer runs against a proposed claim
document before offering a credential. Pluggable per credential type;
the default checks availability, size bounds, content type, and a
holder-declared checksum echo. Verdicts are deterministic."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import crypto
from ..errors import PolicyRejected

_MAGIC = {
    "image/png": b"\x89PNG",
    "image/jpeg": b"\xff\xd8\xff",
    "application/pdf": b"%PDF",
}


@dataclass
class DocumentCheck:
    min_bytes: int = 1
    max_bytes: int = 10 * 1024 * 1024
    content_types: tuple[str, ...] = (
        "image/png",
        "image/jpeg",
        "application/pdf",
        "application/octet-stream",
    )
    require_checksum: bool = True


@dataclass
class DocumentValidationPolicy:
    checks: dict[str, DocumentCheck] = field(default_factory=dict)
    default: DocumentCheck = field(default_factory=DocumentCheck)

    def check_for(self, credential_type: str) -> DocumentCheck:
        return self.checks.get(credential_type, self.default)

    def validate(self, credential_type: str, document: bytes, declared: dict) -> None:
        check = self.check_for(credential_type)
        size = len(document)
        if size < check.min_bytes:
            raise PolicyRejected(f"document is {size} bytes, below the {check.min_bytes} byte floor")
        if size > check.max_bytes:
            raise PolicyRejected(f"document is {size} bytes, above the {check.max_bytes} byte bound")

        content_type = declared.get("content_type", "")
        if content_type not in check.content_types:
            raise PolicyRejected(f"content type {content_type!r} not allowed for {credential_type!r}")
        magic = _MAGIC.get(content_type)
        if magic is not None and not document.startswith(magic):
            raise PolicyRejected(f"document does not look like {content_type}")

        if check.require_checksum:
            declared_sum = declared.get("checksum", "")
            if crypto.sha256(document).hex() != declared_sum:
                raise PolicyRejected("declared checksum does not match the document")
