"""Per-node AODV engine with the optional keyed-digest pipeline.

An :class:`AodvNode` is a deterministic state machine. Every entry point
(``receive_pipeline``, ``receive_data``, ``send_data``, ``on_timer``) takes
the current time and returns a list of actions for the simulator to carry
out; the node never touches the network or clock itself. An empty list is
the "do nothing" outcome.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, replace
from typing import Hashable, Union

from . import adversary as adv
from .digest import RoundRobinSelector, SecretKey, resign_for_forward, sign, verify
from .units import US_PER_MS, US_PER_S
from .wire import (
    U8,
    BadDigestLength,
    DecodeError,
    MissingExtension,
    RerrMessage,
    ReservedHashFunctionId,
    RreqMessage,
    RrepMessage,
    SecureEnvelope,
    decode,
    format_addr,
    make_hello,
)


@dataclass(frozen=True)
class DataPacket:
    """Application payload (data or its acknowledgement); not digest-protected."""

    flow_id: int
    seq: int
    src: int
    dst: int
    size: int = 512
    is_ack: bool = False

    def render(self) -> str:
        kind = "ACK" if self.is_ack else "DATA"
        return f"{kind} flow={self.flow_id} seq={self.seq} src={format_addr(self.src)} dst={format_addr(self.dst)}"


Payload = Union[SecureEnvelope, DataPacket]


@dataclass
class RouteEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    expiry: int
    seq_valid: bool = True
    valid: bool = True

    def usable(self, now: int) -> bool:
        return self.valid and now < self.expiry


@dataclass
class NodeConfig:
    """Protocol timers (microseconds) and limits."""

    hello_interval: int = 1 * US_PER_S
    allowed_hello_loss: int = 2
    active_route_timeout: int = 3 * US_PER_S
    path_discovery_time: int = 3 * US_PER_S
    rreq_timeout: int = 500 * US_PER_MS
    rreq_retries: int = 2
    net_diameter: int = 35
    blacklist_threshold: int = 1
    gratuitous_rrep: bool = False
    hello_enabled: bool = True
    inject_interval: int = 1 * US_PER_S
    buffer_limit: int = 64


# -- actions ----------------------------------------------------------------

@dataclass(frozen=True)
class Broadcast:
    payload: Payload
    origin: bool
    tampered: bool = False
    forged: bool = False


@dataclass(frozen=True)
class Unicast:
    next_hop: int
    payload: Payload
    origin: bool
    tampered: bool = False
    forged: bool = False


@dataclass(frozen=True)
class DeliverUp:
    packet: DataPacket


@dataclass(frozen=True)
class Detect:
    offender: int
    reason: str


@dataclass(frozen=True)
class Drop:
    reason: str
    payload: Payload | None = None


@dataclass(frozen=True)
class Schedule:
    delay: int
    timer: Hashable


ProtocolAction = Union[Broadcast, Unicast, DeliverUp, Detect, Drop, Schedule]

HELLO_TIMER = ("hello",)
INJECT_TIMER = ("inject",)

# Drop reasons that mean the message never got past the receive gate.
GATE_REASONS = frozenset({
    "blacklisted", "digest-mismatch", "unsupported-hash", "missing-extension",
    "reserved-hash-id", "bad-digest-length", "malformed",
})

_EXTENSION_FAULTS = {
    MissingExtension: "missing-extension",
    ReservedHashFunctionId: "reserved-hash-id",
    BadDigestLength: "bad-digest-length",
}


def was_accepted(actions: list[ProtocolAction]) -> bool:
    return not any(isinstance(a, Drop) and a.reason in GATE_REASONS for a in actions)


class AodvNode:
    def __init__(
        self,
        addr: int,
        *,
        secured: bool = False,
        key: SecretKey | None = None,
        config: NodeConfig | None = None,
        hash_selector=None,
        behavior: adv.AdversaryBehavior = adv.HONEST,
        forge_rng: random.Random | None = None,
    ):
        if addr == 0:
            raise ValueError("address 0 is reserved")
        if not isinstance(behavior, adv.Honest) and key is not None:
            raise ValueError("a malicious node cannot hold the group key")
        self.addr = addr
        self.secured = secured
        self.key = key if secured else None
        self.config = config or NodeConfig()
        self.select_hash = hash_selector or RoundRobinSelector(0, addr)
        self.behavior = behavior
        self.forge_rng = forge_rng or random.Random(addr)

        self.own_seq = 1
        self.next_rreq_id = 1
        self.routes: dict[int, RouteEntry] = {}
        self.rreq_cache: dict[tuple[int, int], int] = {}
        self.neighbors: dict[int, int] = {}
        self.blacklist: set[int] = set()
        self.strikes: Counter[int] = Counter()
        self.detection_log: list[tuple[int, int | None, str]] = []
        self.pending: dict[int, int] = {}
        self.buffer: dict[int, list[DataPacket]] = {}

    def __repr__(self) -> str:
        mode = "secured" if self.secured else "plain"
        return f"AodvNode({format_addr(self.addr)}, {mode}, {adv.behavior_name(self.behavior)})"

    # -- routing table ------------------------------------------------------

    def route_to(self, dest: int, now: int) -> RouteEntry | None:
        e = self.routes.get(dest)
        if e is not None and e.usable(now) and e.next_hop not in self.blacklist:
            return e
        return None

    def next_hop(self, dest: int, now: int) -> int | None:
        e = self.route_to(dest, now)
        return e.next_hop if e else None

    def _refresh(self, dest: int, now: int) -> None:
        e = self.route_to(dest, now)
        if e is not None:
            e.expiry = max(e.expiry, now + self.config.active_route_timeout)

    def _update_route(self, dest: int, next_hop: int, hops: int, seq: int, expiry: int, now: int) -> bool:
        """Install or replace the route to ``dest`` if the offer is fresher."""
        if dest == self.addr:
            return False
        e = self.routes.get(dest)
        if e is None:
            self.routes[dest] = RouteEntry(dest, next_hop, hops, seq, expiry)
            return True
        if e.usable(now):
            better = seq > e.dest_seq or (seq == e.dest_seq and hops < e.hop_count)
        else:
            better = seq >= e.dest_seq
        if better:
            e.next_hop, e.hop_count, e.dest_seq, e.expiry = next_hop, hops, seq, expiry
            e.seq_valid = e.valid = True
            return True
        if e.usable(now) and (e.next_hop, e.hop_count, e.dest_seq) == (next_hop, hops, seq):
            e.expiry = max(e.expiry, expiry)
        return False

    def _invalidate_via(self, neighbor: int) -> list[tuple[int, int]]:
        broken = []
        for e in self.routes.values():
            if e.valid and (e.next_hop == neighbor or e.dest == neighbor):
                e.valid = False
                e.dest_seq += 1
                broken.append((e.dest, e.dest_seq))
        return broken

    # -- message construction ----------------------------------------------

    def _seal(self, body) -> SecureEnvelope:
        if not self.secured:
            return SecureEnvelope(body)
        hid = self.select_hash()
        if self.key is not None:
            return SecureEnvelope(body, sign(body, self.key, hid))
        # Keyless node on a secured network: the best it can do is guess.
        return SecureEnvelope(body, adv.forged_extension(self.forge_rng, hid))

    def _relay(self, env: SecureEnvelope, new_body, next_hop: int | None = None) -> ProtocolAction:
        out = replace(env, body=new_body)
        if not self.secured:
            out = SecureEnvelope(new_body)
        elif self.key is not None:
            out = resign_for_forward(out, self.key, self.select_hash)
        altered = adv.apply_on_forward(self.behavior, out)
        if altered is None:
            return Drop("adversary-drop", env)
        tampered = altered != out
        if next_hop is None:
            return Broadcast(altered, origin=False, tampered=tampered)
        return Unicast(next_hop, altered, origin=False, tampered=tampered)

    # -- receive gate -------------------------------------------------------

    def _heard(self, neighbor: int, now: int) -> None:
        self.neighbors[neighbor] = now

    def _reject(self, sender: int, reason: str, now: int) -> list[ProtocolAction]:
        self.detection_log.append((now, sender, reason))
        self.strikes[sender] += 1
        actions: list[ProtocolAction] = [Drop(reason)]
        if self.strikes[sender] >= self.config.blacklist_threshold and sender not in self.blacklist and sender != self.addr:
            self.blacklist.add(sender)
            self.neighbors.pop(sender, None)
            self._invalidate_via(sender)
            actions.append(Detect(sender, reason))
        return actions

    def receive_pipeline(self, data: bytes, sender: int, now: int) -> list[ProtocolAction]:
        """Decode, authenticate (secured mode) and dispatch one control message."""
        if sender in self.blacklist:
            return [Drop("blacklisted")]
        try:
            env = decode(data, self.secured)
        except DecodeError as exc:
            fault = _EXTENSION_FAULTS.get(type(exc))
            if fault is not None and self.key is not None:
                return self._reject(sender, fault, now)
            return [Drop("malformed")]
        if self.key is not None:
            verdict = verify(env, self.key)
            if not verdict.accepted:
                return self._reject(sender, verdict.value, now)
        self._heard(sender, now)
        body = env.body
        if isinstance(body, RreqMessage):
            return self.handle_rreq(env, sender, now)
        if isinstance(body, RrepMessage):
            return self.handle_rrep(env, sender, now)
        return self.handle_rerr(env, sender, now)

    # -- control handlers ---------------------------------------------------

    def handle_rreq(self, env: SecureEnvelope, sender: int, now: int) -> list[ProtocolAction]:
        b: RreqMessage = env.body
        cache_key = (b.orig_addr, b.rreq_id)
        expiry = self.rreq_cache.get(cache_key)
        if b.orig_addr == self.addr or (expiry is not None and now < expiry):
            return []
        self.rreq_cache[cache_key] = now + self.config.path_discovery_time
        cfg = self.config
        hops = min(b.hop_count + 1, U8)
        self._update_route(b.orig_addr, sender, hops, b.orig_seq, now + cfg.active_route_timeout, now)
        rev = self.route_to(b.orig_addr, now)
        if rev is None:
            return [Drop("no-reverse-route", env)]

        if b.dest_addr == self.addr:
            self.own_seq = max(self.own_seq, b.dest_seq)
            rrep = RrepMessage(
                dest_addr=self.addr, dest_seq=self.own_seq, orig_addr=b.orig_addr,
                lifetime=cfg.active_route_timeout // US_PER_MS,
            )
            return [Unicast(rev.next_hop, self._seal(rrep), origin=True)]

        fwd = self.route_to(b.dest_addr, now)
        if fwd is not None and fwd.seq_valid and fwd.dest_seq >= b.dest_seq and fwd.next_hop != sender:
            rrep = RrepMessage(
                dest_addr=b.dest_addr, dest_seq=fwd.dest_seq, orig_addr=b.orig_addr,
                lifetime=max(1, (fwd.expiry - now) // US_PER_MS), hop_count=fwd.hop_count,
            )
            actions: list[ProtocolAction] = [Unicast(rev.next_hop, self._seal(rrep), origin=True)]
            if b.flag_g:
                grat = RrepMessage(
                    dest_addr=b.orig_addr, dest_seq=b.orig_seq, orig_addr=b.dest_addr,
                    lifetime=max(1, (rev.expiry - now) // US_PER_MS), hop_count=rev.hop_count,
                )
                actions.append(Unicast(fwd.next_hop, self._seal(grat), origin=True))
            return actions

        if hops > cfg.net_diameter:
            return [Drop("diameter", env)]
        known = self.routes.get(b.dest_addr)
        dseq = max(b.dest_seq, known.dest_seq) if known is not None else b.dest_seq
        return [self._relay(env, replace(b, hop_count=hops, dest_seq=dseq))]

    def handle_rrep(self, env: SecureEnvelope, sender: int, now: int) -> list[ProtocolAction]:
        b: RrepMessage = env.body
        if b.is_hello and b.dest_addr == sender:
            return []
        hops = min(b.hop_count + 1, U8)
        updated = self._update_route(b.dest_addr, sender, hops, b.dest_seq, now + b.lifetime * US_PER_MS, now)
        if b.orig_addr == self.addr:
            return self._flush(b.dest_addr, now)
        if not updated:
            return []
        rev = self.route_to(b.orig_addr, now)
        if rev is None:
            return [Drop("no-reverse-route", env)]
        self._refresh(b.orig_addr, now)
        return [self._relay(env, replace(b, hop_count=hops), rev.next_hop)]

    def handle_rerr(self, env: SecureEnvelope, sender: int, now: int) -> list[ProtocolAction]:
        b: RerrMessage = env.body
        invalidated = []
        for dest, seq in b.unreachable:
            e = self.routes.get(dest)
            if e is not None and e.valid and e.next_hop == sender and e.dest_seq <= seq:
                e.valid = False
                e.dest_seq = seq
                invalidated.append((dest, seq))
        if not invalidated:
            return []
        return [self._relay(env, RerrMessage(tuple(invalidated), flag_n=b.flag_n))]

    # -- discovery ----------------------------------------------------------

    def originate_rreq(self, dest: int, now: int) -> list[ProtocolAction]:
        self.own_seq += 1
        rid = self.next_rreq_id
        self.next_rreq_id += 1
        known = self.routes.get(dest)
        body = RreqMessage(
            rreq_id=rid, dest_addr=dest, dest_seq=known.dest_seq if known else 0,
            orig_addr=self.addr, orig_seq=self.own_seq, flag_g=self.config.gratuitous_rrep,
        )
        self.rreq_cache[(self.addr, rid)] = now + self.config.path_discovery_time
        return [Broadcast(self._seal(body), origin=True)]

    def _start_discovery(self, dest: int, now: int) -> list[ProtocolAction]:
        self.pending[dest] = 0
        return self.originate_rreq(dest, now) + [Schedule(self.config.rreq_timeout, ("rreq", dest, 0))]

    def _discovery_timeout(self, dest: int, attempt: int, now: int) -> list[ProtocolAction]:
        if self.pending.get(dest) != attempt:
            return []
        if self.route_to(dest, now) is not None:
            return self._flush(dest, now)
        if attempt < self.config.rreq_retries:
            self.pending[dest] = attempt + 1
            return self.originate_rreq(dest, now) + [Schedule(self.config.rreq_timeout, ("rreq", dest, attempt + 1))]
        del self.pending[dest]
        return [Drop("no-route", pkt) for pkt in self.buffer.pop(dest, [])]

    def _flush(self, dest: int, now: int) -> list[ProtocolAction]:
        r = self.route_to(dest, now)
        if r is None:
            return []
        self.pending.pop(dest, None)
        packets = self.buffer.pop(dest, [])
        if packets:
            self._refresh(dest, now)
        return [Unicast(r.next_hop, pkt, origin=True) for pkt in packets]

    # -- data plane ---------------------------------------------------------

    def send_data(self, pkt: DataPacket, now: int) -> list[ProtocolAction]:
        """Transmit an application packet originated here, discovering a route if needed."""
        r = self.route_to(pkt.dst, now)
        if r is not None:
            self._refresh(pkt.dst, now)
            return [Unicast(r.next_hop, pkt, origin=True)]
        queue = self.buffer.setdefault(pkt.dst, [])
        if len(queue) >= self.config.buffer_limit:
            return [Drop("buffer-full", pkt)]
        queue.append(pkt)
        if pkt.dst in self.pending:
            return []
        return self._start_discovery(pkt.dst, now)

    def receive_data(self, pkt: DataPacket, sender: int, now: int) -> list[ProtocolAction]:
        if sender in self.blacklist:
            return [Drop("blacklisted", pkt)]
        self._heard(sender, now)
        if pkt.dst == self.addr:
            self._refresh(pkt.src, now)
            return [DeliverUp(pkt)]
        if adv.drops_data(self.behavior):
            return [Drop("adversary-drop", pkt)]
        r = self.route_to(pkt.dst, now)
        if r is None:
            known = self.routes.get(pkt.dst)
            seq = known.dest_seq if known else 0
            rerr = RerrMessage(((pkt.dst, seq),))
            return [Drop("no-route", pkt), Broadcast(self._seal(rerr), origin=True)]
        self._refresh(pkt.dst, now)
        self._refresh(pkt.src, now)
        return [Unicast(r.next_hop, pkt, origin=False)]

    # -- timers -------------------------------------------------------------

    def on_timer(self, timer: Hashable, now: int) -> list[ProtocolAction]:
        if timer == HELLO_TIMER:
            return self.timer_tick(now)
        if timer == INJECT_TIMER:
            return self._inject(now)
        if isinstance(timer, tuple) and timer and timer[0] == "rreq":
            return self._discovery_timeout(timer[1], timer[2], now)
        raise ValueError(f"unknown timer {timer!r}")

    def timer_tick(self, now: int) -> list[ProtocolAction]:
        """Periodic HELLO, neighbor-loss detection and table housekeeping."""
        cfg = self.config
        actions: list[ProtocolAction] = []
        if cfg.hello_enabled:
            lifetime = cfg.allowed_hello_loss * cfg.hello_interval // US_PER_MS
            actions.append(Broadcast(self._seal(make_hello(self.addr, self.own_seq, max(1, lifetime))), origin=True))
        silence = cfg.allowed_hello_loss * cfg.hello_interval
        lost = sorted(n for n, heard in self.neighbors.items() if now - heard > silence)
        broken: list[tuple[int, int]] = []
        for n in lost:
            del self.neighbors[n]
            broken += self._invalidate_via(n)
        if broken:
            actions.append(Broadcast(self._seal(RerrMessage(tuple(broken[:U8]))), origin=True))
        for e in self.routes.values():
            if e.valid and now >= e.expiry:
                e.valid = False
        self.rreq_cache = {k: t for k, t in self.rreq_cache.items() if t > now}
        actions.append(Schedule(cfg.hello_interval, HELLO_TIMER))
        return actions

    def _inject(self, now: int) -> list[ProtocolAction]:
        envs = adv.inject(
            self.behavior, now, self_addr=self.addr, targets=sorted(self.neighbors),
            rreq_id=self.next_rreq_id, rng=self.forge_rng, secured=self.secured,
            lifetime_ms=self.config.active_route_timeout // US_PER_MS,
        )
        actions: list[ProtocolAction] = []
        for env in envs:
            if isinstance(env.body, RrepMessage):
                actions.append(Unicast(env.body.orig_addr, env, origin=True, forged=True))
            else:
                self.next_rreq_id += 1
                actions.append(Broadcast(env, origin=True, forged=True))
        actions.append(Schedule(self.config.inject_interval, INJECT_TIMER))
        return actions
