"""Decentralized security: offline-verifiable capability tokens, revocation
sets, and runtime security postures.

Tokens are Ed25519-signed over a canonical body encoding (fixed field order,
varint length prefixes) so verification depends only on key material and
never on reaching the issuer.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass
from enum import Enum

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .wire import encode_varint

REVOCATION_TOPIC = "_sec.revoke"


class SecurityError(Exception):
    pass


class UnknownIssuer(SecurityError):
    pass


class UnknownTrigger(SecurityError):
    pass


class RejectReason(str, Enum):
    BAD_SIGNATURE = "bad_signature"
    EXPIRED = "expired"
    REVOKED = "revoked"
    UNKNOWN_ISSUER = "unknown_issuer"


class PostureLevel(str, Enum):
    NORMAL = "normal"
    ELEVATED = "elevated"
    LOCKDOWN = "lockdown"


@dataclass
class SecurityPosture:
    level: PostureLevel
    changed_at: int
    cause: str


def canonical_body(subject: str, rights: frozenset[str], issued_at: int,
                   expires_at: int, issuer: str) -> bytes:
    """Deterministic token body: subject, sorted rights, validity, issuer,
    each length-prefixed with a varint."""
    out = bytearray()
    for s in [subject, *sorted(rights), "", str(issuer)]:
        b = s.encode("utf-8")
        out += encode_varint(len(b))
        out += b
    out += encode_varint(issued_at)
    out += encode_varint(expires_at)
    return bytes(out)


@dataclass(frozen=True)
class CapabilityToken:
    subject: str
    rights: frozenset[str]
    issued_at: int
    expires_at: int
    issuer: str  # key id
    signature: bytes

    @property
    def body(self) -> bytes:
        return canonical_body(self.subject, self.rights, self.issued_at,
                              self.expires_at, self.issuer)

    @property
    def token_id(self) -> str:
        return hashlib.sha256(self.body).hexdigest()

    def grants(self, right: str) -> bool:
        if right in self.rights:
            return True
        return any(r.endswith("*") and right.startswith(r[:-1]) for r in self.rights)

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "rights": sorted(self.rights),
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
            "issuer": self.issuer,
            "signature": base64.b64encode(self.signature).decode(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CapabilityToken":
        return cls(
            subject=d["subject"],
            rights=frozenset(d["rights"]),
            issued_at=d["issued_at"],
            expires_at=d["expires_at"],
            issuer=d["issuer"],
            signature=base64.b64decode(d["signature"]),
        )


TrustRoots = dict[str, Ed25519PublicKey]


def generate_keypair() -> tuple[Ed25519PrivateKey, Ed25519PublicKey]:
    key = Ed25519PrivateKey.generate()
    return key, key.public_key()


def private_key_from_b64(b64: str) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(base64.b64decode(b64))


def public_key_from_b64(b64: str) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(base64.b64decode(b64))


def issue_token(private_key: Ed25519PrivateKey, issuer: str, subject: str,
                rights: set[str], issued_at: int, expires_at: int,
                trust_roots: TrustRoots) -> CapabilityToken:
    if issuer not in trust_roots:
        raise UnknownIssuer(issuer)
    if expires_at <= issued_at:
        raise ValueError("expires_at must be after issued_at")
    body = canonical_body(subject, frozenset(rights), issued_at, expires_at, issuer)
    return CapabilityToken(
        subject=subject,
        rights=frozenset(rights),
        issued_at=issued_at,
        expires_at=expires_at,
        issuer=issuer,
        signature=private_key.sign(body),
    )


def verify_token(token: CapabilityToken, trust_roots: TrustRoots,
                 revocations: set[str], now: int) -> tuple[bool, RejectReason | None]:
    """Purely local check: signature, expiry, revocation. Never touches the
    network, so results are identical under total partition."""
    pub = trust_roots.get(token.issuer)
    if pub is None:
        return False, RejectReason.UNKNOWN_ISSUER
    try:
        pub.verify(token.signature, token.body)
    except InvalidSignature:
        return False, RejectReason.BAD_SIGNATURE
    if now > token.expires_at or now < token.issued_at:
        return False, RejectReason.EXPIRED
    if token.token_id in revocations:
        return False, RejectReason.REVOKED
    return True, None


RECOGNIZED_TRIGGERS = {"threat", "threat_cleared", "operator"}


def apply_posture(current: SecurityPosture, trigger: str, now: int,
                  operator_level: PostureLevel | None = None) -> SecurityPosture:
    if trigger == "threat":
        return SecurityPosture(PostureLevel.LOCKDOWN, now, trigger)
    if trigger == "threat_cleared":
        return SecurityPosture(PostureLevel.NORMAL, now, trigger)
    if trigger == "operator":
        if operator_level is None:
            raise ValueError("operator trigger requires a level")
        return SecurityPosture(operator_level, now, trigger)
    raise UnknownTrigger(trigger)


def posture_allows(posture: SecurityPosture, topic: str, critical_topics: set[str],
                   token: CapabilityToken | None) -> bool:
    """Lockdown permits only mission-critical topics, and only when the
    sender holds a token granting "critical"."""
    if posture.level is not PostureLevel.LOCKDOWN:
        return True
    if topic not in critical_topics:
        return False
    return token is not None and token.grants("critical")
