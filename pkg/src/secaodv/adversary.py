"""Malicious node behaviors.

An adversary is an ordinary node wrapped in one of these policies. It never
holds the group key, so anything it originates or alters carries either no
security extension (plain AODV) or one with a random digest.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Union

from .wire import (
    DIGEST_LENGTHS,
    U32,
    U8,
    RreqMessage,
    RrepMessage,
    SecureEnvelope,
    SecurityExtension,
)


@dataclass(frozen=True)
class Honest:
    pass


@dataclass(frozen=True)
class TamperHopCount:
    set_to: int = 0


@dataclass(frozen=True)
class TamperSeq:
    delta: int = 100


@dataclass(frozen=True)
class DropAll:
    pass


@dataclass(frozen=True)
class DropRouting:
    pass


@dataclass(frozen=True)
class FabricateRrep:
    advertised_dest: int
    fake_seq: int = 1000
    fake_hops: int = 0
    # None: address one fabricated reply to every current neighbor.
    victim: int | None = None


@dataclass(frozen=True)
class SpoofOriginator:
    as_addr: int


AdversaryBehavior = Union[Honest, TamperHopCount, TamperSeq, DropAll, DropRouting, FabricateRrep, SpoofOriginator]

HONEST = Honest()

# Names used by the scenario grammar, with positional parameter order.
BEHAVIOR_NAMES: dict[str, tuple[type, tuple[str, ...]]] = {
    "honest": (Honest, ()),
    "tamper-hop": (TamperHopCount, ("set_to",)),
    "tamper-seq": (TamperSeq, ("delta",)),
    "drop-all": (DropAll, ()),
    "drop-routing": (DropRouting, ()),
    "fabricate-rrep": (FabricateRrep, ("advertised_dest", "fake_seq", "fake_hops", "victim")),
    "spoof-originator": (SpoofOriginator, ("as_addr",)),
}


def behavior_name(behavior: AdversaryBehavior) -> str:
    for name, (cls, _) in BEHAVIOR_NAMES.items():
        if type(behavior) is cls:
            return name
    raise TypeError(f"unknown behavior {behavior!r}")


def injects(behavior: AdversaryBehavior) -> bool:
    return isinstance(behavior, (FabricateRrep, SpoofOriginator))


def _clamp_seq(value: int) -> int:
    return min(max(value, 0), U32)


def apply_on_forward(behavior: AdversaryBehavior, env: SecureEnvelope) -> SecureEnvelope | None:
    """Return the envelope the node actually relays, or None when it is swallowed.

    Tampering never touches the extension: without the key it cannot be
    recomputed, so the stale digest travels on.
    """
    if isinstance(behavior, (DropAll, DropRouting)):
        return None
    body = env.body
    if isinstance(behavior, TamperHopCount):
        if isinstance(body, (RreqMessage, RrepMessage)):
            return replace(env, body=replace(body, hop_count=min(max(behavior.set_to, 0), U8)))
        return env
    if isinstance(behavior, TamperSeq):
        d = behavior.delta
        if isinstance(body, RreqMessage):
            body = replace(body, dest_seq=_clamp_seq(body.dest_seq + d), orig_seq=_clamp_seq(body.orig_seq + d))
        elif isinstance(body, RrepMessage):
            body = replace(body, dest_seq=_clamp_seq(body.dest_seq + d))
        else:
            body = replace(body, unreachable=tuple((a, _clamp_seq(s + d)) for a, s in body.unreachable))
        return replace(env, body=body)
    return env


def drops_data(behavior: AdversaryBehavior) -> bool:
    return isinstance(behavior, DropAll)


def forged_extension(rng: random.Random, hash_id: int) -> SecurityExtension:
    """Best blind forgery available without the key: a uniformly random digest."""
    return SecurityExtension(hash_id, rng.randbytes(DIGEST_LENGTHS[hash_id]))


def inject(
    behavior: AdversaryBehavior,
    now: int,
    *,
    self_addr: int,
    targets: list[int],
    rreq_id: int,
    rng: random.Random,
    secured: bool,
    lifetime_ms: int = 3000,
) -> list[SecureEnvelope]:
    """Fabricated control messages emitted by an injecting adversary at ``now``.

    ``targets`` are the current neighbors, used as RREP victims when the
    behavior names none. SpoofOriginator floods a RREQ that claims to come
    from ``as_addr`` while asking for the adversary itself.
    """
    bodies: list = []
    if isinstance(behavior, FabricateRrep):
        victims = [behavior.victim] if behavior.victim is not None else targets
        for victim in victims:
            if victim in (behavior.advertised_dest, self_addr):
                continue
            bodies.append(RrepMessage(
                dest_addr=behavior.advertised_dest, dest_seq=_clamp_seq(behavior.fake_seq),
                orig_addr=victim, lifetime=lifetime_ms, hop_count=min(max(behavior.fake_hops, 0), U8),
            ))
    elif isinstance(behavior, SpoofOriginator):
        bodies.append(RreqMessage(
            rreq_id=rreq_id & U32, dest_addr=self_addr, dest_seq=0,
            orig_addr=behavior.as_addr, orig_seq=_clamp_seq(now // 1000 + 1),
        ))
    envs = []
    for body in bodies:
        ext = forged_extension(rng, rng.choice(tuple(DIGEST_LENGTHS))) if secured else None
        envs.append(SecureEnvelope(body, ext))
    return envs
