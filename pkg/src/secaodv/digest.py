"""Message digest with a shared secret key.

The digest of a message is ``h(body_bytes || key)``: the canonical body
encoding with the group key appended, hashed by the function named in the
message's hash-function field. Verification recomputes it and compares.

MD5 and SHA-1 are kept because the protocol's registry names them; both are
broken as collision-resistant hashes and this construction is not HMAC, so
the scheme should not be relied on outside simulation.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, replace
from typing import Callable

from .wire import (
    DIGEST_LENGTHS,
    HASH_MD5,
    HASH_SHA1,
    Body,
    MissingExtension,
    ReservedHashFunctionId,
    SecureEnvelope,
    SecurityExtension,
    digest_input,
)

__all__ = [
    "HASH_MD5",
    "HASH_SHA1",
    "USABLE_HASH_IDS",
    "SecretKey",
    "Verdict",
    "message_digest",
    "sign",
    "verify",
    "resign_for_forward",
    "RoundRobinSelector",
    "fixed_selector",
]

USABLE_HASH_IDS = (HASH_MD5, HASH_SHA1)

_HASHES = {HASH_MD5: hashlib.md5, HASH_SHA1: hashlib.sha1}

HashSelector = Callable[[], int]


@dataclass(frozen=True, repr=False)
class SecretKey:
    """Group key shared by every legitimate node. Never rendered anywhere."""

    material: bytes

    def __post_init__(self):
        if not isinstance(self.material, (bytes, bytearray)):
            raise TypeError("secret key material must be bytes")
        if not 1 <= len(self.material) <= 64:
            raise ValueError(f"secret key must be 1..64 octets, got {len(self.material)}")
        object.__setattr__(self, "material", bytes(self.material))

    def __repr__(self) -> str:
        return f"SecretKey(<{len(self.material)} octets redacted>)"

    __str__ = __repr__


class Verdict(enum.Enum):
    ACCEPTED = "accepted"
    DIGEST_MISMATCH = "digest-mismatch"
    UNSUPPORTED_HASH = "unsupported-hash"

    @property
    def accepted(self) -> bool:
        return self is Verdict.ACCEPTED


def message_digest(hash_id: int, data: bytes) -> bytes:
    """Plain MD5 (id 1) or SHA-1 (id 2) of ``data``."""
    try:
        algo = _HASHES[hash_id]
    except KeyError:
        raise ReservedHashFunctionId(f"hash function id {hash_id} is not usable") from None
    return algo(data).digest()


def _keyed(body: Body, key: SecretKey, hash_id: int) -> bytes:
    return message_digest(hash_id, digest_input(body) + key.material)


def sign(body: Body, key: SecretKey, hash_id: int) -> SecurityExtension:
    return SecurityExtension(hash_id, _keyed(body, key, hash_id))


def verify(env: SecureEnvelope, key: SecretKey) -> Verdict:
    if env.ext is None:
        raise MissingExtension("cannot verify a message without a security extension")
    hid = env.ext.hash_function_id
    if hid not in _HASHES:
        return Verdict.UNSUPPORTED_HASH
    if len(env.ext.digest) != DIGEST_LENGTHS[hid]:
        return Verdict.DIGEST_MISMATCH
    if hmac.compare_digest(_keyed(env.body, key, hid), env.ext.digest):
        return Verdict.ACCEPTED
    return Verdict.DIGEST_MISMATCH


def resign_for_forward(env: SecureEnvelope, key: SecretKey, id_selector: HashSelector) -> SecureEnvelope:
    """Replace the extension with a fresh one over the (already updated) body."""
    return replace(env, ext=sign(env.body, key, id_selector()))


class RoundRobinSelector:
    """Cycles through the usable hash ids, phase fixed by run seed and node address."""

    def __init__(self, seed: int, addr: int, ids: tuple[int, ...] = USABLE_HASH_IDS):
        self._ids = ids
        self._next = (seed + addr) % len(ids)

    def __call__(self) -> int:
        hid = self._ids[self._next]
        self._next = (self._next + 1) % len(self._ids)
        return hid


def fixed_selector(hash_id: int) -> HashSelector:
    if hash_id not in _HASHES:
        raise ReservedHashFunctionId(f"hash function id {hash_id} is not usable")
    return lambda: hash_id
