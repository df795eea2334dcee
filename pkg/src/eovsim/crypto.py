"""Hashing and the simulated signature schemes."""

from __future__ import annotations

import hashlib
import hmac

HASH_NAME = "sha256"
DIGEST_SIZE = 32


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class SignatureScheme:
    name = "abstract"

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        """Return ``(secret, public_key)`` derived deterministically from seed."""
        raise NotImplementedError

    def sign(self, secret: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


class KeyedDigestScheme(SignatureScheme):
    """HMAC-SHA256 signatures checked through a process-wide keyring.

    The keyring plays the role of the trusted membership service: it maps a
    public key back to the secret so any party can recompute the MAC. This is
    only meaningful inside the simulator, where no real adversary exists.
    """

    name = "keyed-digest"

    def __init__(self) -> None:
        self._keyring: dict[bytes, bytes] = {}

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        secret = H(b"eovsim/secret/" + seed)
        public = H(b"eovsim/public/" + secret)
        self._keyring[public] = secret
        return secret, public

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return hmac.new(secret, message, hashlib.sha256).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        secret = self._keyring.get(public_key)
        if secret is None:
            return False
        expected = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


class Ed25519Scheme(SignatureScheme):
    name = "ed25519"

    def keygen(self, seed: bytes) -> tuple[bytes, bytes]:
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

        secret = H(b"eovsim/ed25519/" + seed)
        key = Ed25519PrivateKey.from_private_bytes(secret)
        public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return secret, public

    def sign(self, secret: bytes, message: bytes) -> bytes:
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

        return Ed25519PrivateKey.from_private_bytes(secret).sign(message)

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


_SCHEMES: dict[str, SignatureScheme] = {
    KeyedDigestScheme.name: KeyedDigestScheme(),
    Ed25519Scheme.name: Ed25519Scheme(),
}
_active = _SCHEMES[KeyedDigestScheme.name]


def scheme() -> SignatureScheme:
    return _active


def use_scheme(name: str) -> SignatureScheme:
    global _active
    try:
        _active = _SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None
    return _active
