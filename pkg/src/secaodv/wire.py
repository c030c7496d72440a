"""AODV control messages and their bit-exact wire encoding.

Layouts (big-endian, MSB first within every 32-bit row)::

    RREQ  | type=1 |J|R|G| reserved (13) | hop count |   + rreq id, dest addr,
                                                         dest seq, orig addr,
                                                         orig seq  -> 24 octets
    RREP  | type=2 |R|A| reserved (9) | prefix (5) | hop count |
                                                       + dest addr, dest seq,
                                                         orig addr, lifetime
                                                                   -> 20 octets
    RERR  | type=3 |N| reserved (15) | dest count |    + (addr, seq) * count
                                                                -> 4 + 8n octets

A secured message carries a trailing security extension::

    | hash function id | digest length | reserved (16) | digest ... |

The digest is computed over the body encoding only, so every body field
(hop count included) is covered and the extension itself is not.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from typing import Union

RREQ_TYPE = 1
RREP_TYPE = 2
RERR_TYPE = 3

HASH_MD5 = 1
HASH_SHA1 = 2
# Table of digest lengths for the usable registry entries.
DIGEST_LENGTHS = {HASH_MD5: 16, HASH_SHA1: 20}

RREQ_LEN = 24
RREP_LEN = 20
RERR_HEADER_LEN = 4
RERR_PAIR_LEN = 8
EXT_HEADER_LEN = 4

U8 = 0xFF
U32 = 0xFFFF_FFFF

_ROW = struct.Struct("!I")
_RREQ = struct.Struct("!6I")
_RREP = struct.Struct("!5I")
_PAIR = struct.Struct("!II")
_EXT = struct.Struct("!BBH")


class WireError(Exception):
    """Base class for codec failures."""


class InvariantViolation(WireError):
    """An envelope handed to the encoder breaks a field invariant."""


class DecodeError(WireError):
    """Raised for byte strings that do not parse into a valid envelope."""


class Truncated(DecodeError):
    pass


class TrailingBytes(DecodeError):
    pass


class UnknownTypeCode(DecodeError):
    pass


class BadDigestLength(DecodeError):
    pass


class ReservedHashFunctionId(DecodeError):
    pass


class MissingExtension(DecodeError):
    pass


class MalformedMessage(DecodeError):
    """A structurally complete message with an invalid field value."""


def is_reserved_hash_id(hash_id: int) -> bool:
    return hash_id == 0 or 3 <= hash_id <= 127


def format_addr(addr: int) -> str:
    return str(ipaddress.IPv4Address(addr))


@dataclass(frozen=True)
class RreqMessage:
    rreq_id: int
    dest_addr: int
    dest_seq: int
    orig_addr: int
    orig_seq: int
    hop_count: int = 0
    flag_j: bool = False
    flag_r: bool = False
    flag_g: bool = False

    type_code = RREQ_TYPE


@dataclass(frozen=True)
class RrepMessage:
    dest_addr: int
    dest_seq: int
    orig_addr: int
    lifetime: int  # milliseconds
    hop_count: int = 0
    flag_r: bool = False
    flag_a: bool = False
    prefix_sz: int = 0

    type_code = RREP_TYPE

    @property
    def is_hello(self) -> bool:
        # HELLO: a zero-hop RREP that advertises its own sender.
        return self.hop_count == 0 and self.dest_addr == self.orig_addr


@dataclass(frozen=True)
class RerrMessage:
    unreachable: tuple[tuple[int, int], ...]
    flag_n: bool = False

    type_code = RERR_TYPE

    @property
    def dest_count(self) -> int:
        return len(self.unreachable)


Body = Union[RreqMessage, RrepMessage, RerrMessage]


@dataclass(frozen=True)
class SecurityExtension:
    hash_function_id: int
    digest: bytes

    @property
    def digest_len(self) -> int:
        return len(self.digest)


@dataclass(frozen=True)
class SecureEnvelope:
    body: Body
    ext: SecurityExtension | None = field(default=None)


def make_hello(addr: int, seq: int, lifetime_ms: int) -> RrepMessage:
    return RrepMessage(dest_addr=addr, dest_seq=seq, orig_addr=addr, lifetime=lifetime_ms)


# -- encoding ---------------------------------------------------------------

def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantViolation(msg)


def _check_u32(name: str, value: int) -> None:
    _check(isinstance(value, int) and 0 <= value <= U32, f"{name}={value!r} is not a 32-bit unsigned value")


def _check_addr(name: str, value: int) -> None:
    _check_u32(name, value)
    _check(value != 0, f"{name} must not be the unspecified address 0")


def _check_hops(value: int) -> None:
    _check(isinstance(value, int) and 0 <= value <= U8, f"hop_count={value!r} out of 8-bit range")


def encode_body(body: Body) -> bytes:
    """Canonical encoding of a message body without any security extension."""
    if isinstance(body, RreqMessage):
        _check_hops(body.hop_count)
        _check_u32("rreq_id", body.rreq_id)
        _check_addr("dest_addr", body.dest_addr)
        _check_u32("dest_seq", body.dest_seq)
        _check_addr("orig_addr", body.orig_addr)
        _check_u32("orig_seq", body.orig_seq)
        row = (RREQ_TYPE << 24) | (body.flag_j << 23) | (body.flag_r << 22) | (body.flag_g << 21) | body.hop_count
        return _RREQ.pack(row, body.rreq_id, body.dest_addr, body.dest_seq, body.orig_addr, body.orig_seq)
    if isinstance(body, RrepMessage):
        _check_hops(body.hop_count)
        _check(isinstance(body.prefix_sz, int) and 0 <= body.prefix_sz < 32, f"prefix_sz={body.prefix_sz!r} exceeds 5 bits")
        _check_addr("dest_addr", body.dest_addr)
        _check_u32("dest_seq", body.dest_seq)
        _check_addr("orig_addr", body.orig_addr)
        _check_u32("lifetime", body.lifetime)
        _check(body.lifetime > 0, "lifetime must be positive")
        row = (RREP_TYPE << 24) | (body.flag_r << 23) | (body.flag_a << 22) | (body.prefix_sz << 8) | body.hop_count
        return _RREP.pack(row, body.dest_addr, body.dest_seq, body.orig_addr, body.lifetime)
    if isinstance(body, RerrMessage):
        count = len(body.unreachable)
        _check(1 <= count <= U8, f"dest_count={count} must be in 1..255")
        parts = [_ROW.pack((RERR_TYPE << 24) | (body.flag_n << 23) | count)]
        for addr, seq in body.unreachable:
            _check_addr("unreachable addr", addr)
            _check_u32("unreachable seq", seq)
            parts.append(_PAIR.pack(addr, seq))
        return b"".join(parts)
    raise InvariantViolation(f"not a message body: {type(body).__name__}")


def encode_extension(ext: SecurityExtension) -> bytes:
    hid = ext.hash_function_id
    _check(isinstance(hid, int) and 0 <= hid <= U8, f"hash_function_id={hid!r} out of 8-bit range")
    _check(not is_reserved_hash_id(hid), f"hash_function_id={hid} is reserved")
    _check(len(ext.digest) <= U8, "digest longer than 255 octets")
    expected = DIGEST_LENGTHS.get(hid)
    _check(expected is None or len(ext.digest) == expected,
           f"digest_len={len(ext.digest)} does not match hash_function_id={hid}")
    return _EXT.pack(hid, len(ext.digest), 0) + bytes(ext.digest)


def encode(env: SecureEnvelope) -> bytes:
    out = encode_body(env.body)
    if env.ext is not None:
        out += encode_extension(env.ext)
    return out


def digest_input(body: Body) -> bytes:
    """Bytes the keyed digest is computed over: every body field, no extension."""
    return encode_body(body)


# -- decoding ---------------------------------------------------------------

def _need(data: bytes, n: int, what: str) -> None:
    if len(data) < n:
        raise Truncated(f"{what}: need {n} octets, have {len(data)}")


def _addr(value: int, name: str) -> int:
    if value == 0:
        raise MalformedMessage(f"{name} is the unspecified address 0")
    return value


def _decode_body(data: bytes) -> tuple[Body, int]:
    _need(data, 4, "message header")
    (row,) = _ROW.unpack_from(data)
    type_code = row >> 24
    hops = row & 0xFF
    if type_code == RREQ_TYPE:
        _need(data, RREQ_LEN, "RREQ")
        _, rid, daddr, dseq, oaddr, oseq = _RREQ.unpack_from(data)
        body = RreqMessage(
            rreq_id=rid, dest_addr=_addr(daddr, "dest_addr"), dest_seq=dseq,
            orig_addr=_addr(oaddr, "orig_addr"), orig_seq=oseq, hop_count=hops,
            flag_j=bool(row >> 23 & 1), flag_r=bool(row >> 22 & 1), flag_g=bool(row >> 21 & 1),
        )
        return body, RREQ_LEN
    if type_code == RREP_TYPE:
        _need(data, RREP_LEN, "RREP")
        _, daddr, dseq, oaddr, life = _RREP.unpack_from(data)
        if life == 0:
            raise MalformedMessage("RREP lifetime is zero")
        body = RrepMessage(
            dest_addr=_addr(daddr, "dest_addr"), dest_seq=dseq, orig_addr=_addr(oaddr, "orig_addr"),
            lifetime=life, hop_count=hops, flag_r=bool(row >> 23 & 1), flag_a=bool(row >> 22 & 1),
            prefix_sz=row >> 8 & 0x1F,
        )
        return body, RREP_LEN
    if type_code == RERR_TYPE:
        count = row & 0xFF
        if count == 0:
            raise MalformedMessage("RERR dest_count is zero")
        size = RERR_HEADER_LEN + RERR_PAIR_LEN * count
        _need(data, size, "RERR")
        pairs = tuple(
            (_addr(a, "unreachable addr"), s)
            for a, s in _PAIR.iter_unpack(data[RERR_HEADER_LEN:size])
        )
        return RerrMessage(unreachable=pairs, flag_n=bool(row >> 23 & 1)), size
    raise UnknownTypeCode(f"type code {type_code}")


def decode(data: bytes, secured: bool) -> SecureEnvelope:
    """Parse one envelope; ``secured`` demands a trailing security extension.

    Reserved bits are ignored, so only inputs with zero reserved bits
    re-encode to the identical byte string.
    """
    data = bytes(data)
    body, used = _decode_body(data)
    rest = data[used:]
    if not secured:
        if rest:
            raise TrailingBytes(f"{len(rest)} octets after {type(body).__name__}")
        return SecureEnvelope(body)
    if not rest:
        raise MissingExtension("secured message without a security extension")
    _need(rest, EXT_HEADER_LEN, "security extension header")
    hid, dlen, _ = _EXT.unpack_from(rest)
    if is_reserved_hash_id(hid):
        raise ReservedHashFunctionId(f"hash function id {hid} is reserved")
    expected = DIGEST_LENGTHS.get(hid)
    if expected is not None and dlen != expected:
        raise BadDigestLength(f"digest_len {dlen} for hash function id {hid}, expected {expected}")
    _need(rest, EXT_HEADER_LEN + dlen, "message digest")
    if len(rest) > EXT_HEADER_LEN + dlen:
        raise TrailingBytes(f"{len(rest) - EXT_HEADER_LEN - dlen} octets after the digest")
    return SecureEnvelope(body, SecurityExtension(hid, rest[EXT_HEADER_LEN:]))


# -- trace rendering --------------------------------------------------------

def render(env: SecureEnvelope | Body) -> str:
    """One-line human-readable form used in trace logs."""
    if isinstance(env, SecureEnvelope):
        body, ext = env.body, env.ext
    else:
        body, ext = env, None
    a = format_addr
    if isinstance(body, RreqMessage):
        text = (f"RREQ id={body.rreq_id} orig={a(body.orig_addr)} oseq={body.orig_seq} "
                f"dest={a(body.dest_addr)} dseq={body.dest_seq} hops={body.hop_count}")
    elif isinstance(body, RrepMessage):
        if body.is_hello:
            text = f"HELLO src={a(body.dest_addr)} seq={body.dest_seq}"
        else:
            text = (f"RREP orig={a(body.orig_addr)} dest={a(body.dest_addr)} dseq={body.dest_seq} "
                    f"hops={body.hop_count} life={body.lifetime}")
    else:
        dests = ",".join(f"{a(addr)}:{seq}" for addr, seq in body.unreachable)
        text = f"RERR n={int(body.flag_n)} dests={dests}"
    if ext is not None:
        text += f" hf={ext.hash_function_id}"
    return text
