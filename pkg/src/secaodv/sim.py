"""Deterministic discrete-event simulation of a static ad-hoc network.

Events are ordered by ``(time_us, seq)`` where ``seq`` is assigned in
scheduling order, so a run is a pure function of its scenario and seed.
Links have a fixed latency plus a small seeded jitter; the jitter bound is
kept below ``latency / 10`` so a k-hop flood always beats a (k+1)-hop one
on networks up to ten hops wide.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

from .adversary import Honest, injects
from .digest import RoundRobinSelector, fixed_selector
from .node import (
    HELLO_TIMER,
    INJECT_TIMER,
    AodvNode,
    Broadcast,
    DataPacket,
    DeliverUp,
    Detect,
    Drop,
    NodeConfig,
    Schedule,
    Unicast,
    was_accepted,
)
from .units import US_PER_MS, US_PER_S, format_joules, format_seconds
from .wire import SecureEnvelope, encode, render

BASE_ADDR = 0x0A00_0001  # node 0 is 10.0.0.1


def address_of(node_id: int) -> int:
    return BASE_ADDR + node_id


def node_id_of(addr: int) -> int:
    return addr - BASE_ADDR


class AuditMismatch(AssertionError):
    """The energy ledger disagrees with the transmission/reception counts."""


# -- network model ----------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    positions: dict[int, tuple[float, float]]
    radio_range: float = 250.0
    # When given, exactly these undirected links exist and positions are ignored.
    links: frozenset[tuple[int, int]] | None = None

    @property
    def node_ids(self) -> list[int]:
        return sorted(self.positions)

    @cached_property
    def adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, set[int]] = {i: set() for i in self.positions}
        if self.links is not None:
            for a, b in self.links:
                if a != b:
                    adj[a].add(b)
                    adj[b].add(a)
        else:
            for a, b in itertools.combinations(self.node_ids, 2):
                if math.dist(self.positions[a], self.positions[b]) <= self.radio_range:
                    adj[a].add(b)
                    adj[b].add(a)
        return {i: tuple(sorted(n)) for i, n in adj.items()}

    def linked(self, a: int, b: int) -> bool:
        return b in self.adjacency.get(a, ())


def deliver(topology: Topology, sender: int, target: int | None, alive: Callable[[int], bool]) -> list[int]:
    """Recipients of one transmission; ``target=None`` is a broadcast."""
    if not alive(sender):
        return []
    if target is None:
        return [n for n in topology.adjacency[sender] if alive(n)]
    if topology.linked(sender, target) and alive(target):
        return [target]
    return []


@dataclass(frozen=True)
class TrafficFlow:
    src: int
    dst: int
    packet_size: int = 512
    interval: int = 50 * US_PER_MS
    start: int = 1 * US_PER_S
    stop: int = 149 * US_PER_S
    # Stop-and-wait: the next packet leaves one interval after the ACK,
    # or as soon as the ACK timeout expires.
    reliable: bool = True


@dataclass(frozen=True)
class EnergyParams:
    enabled: bool = False
    initial_uj: int = 10_000_000
    tx_cost_uj: int = 200_000
    rx_cost_uj: int = 100_000


@dataclass
class EnergyState:
    initial_uj: int | None
    tx_cost_uj: int
    rx_cost_uj: int
    consumed_uj: int = 0
    depleted: bool = False

    @property
    def remaining_uj(self) -> int | None:
        return None if self.initial_uj is None else self.initial_uj - self.consumed_uj

    def spend(self, cost: int) -> bool:
        """Charge one operation. An unaffordable one fails; the node dies only at exactly 0 J."""
        if self.depleted:
            return False
        if self.initial_uj is not None and self.remaining_uj < cost:
            return False
        self.consumed_uj += cost
        if self.remaining_uj == 0:
            self.depleted = True
        return True


@dataclass
class NodeMetrics:
    generated: int = 0
    sent: int = 0
    forwarded: int = 0
    received: int = 0
    drops_by_reason: Counter = field(default_factory=Counter)
    forwarded_by_source: Counter = field(default_factory=Counter)
    accepted_tampered: int = 0
    accepted_forged: int = 0
    energy_consumed_uj: int = 0

    @property
    def tx_events(self) -> int:
        return self.sent + self.forwarded

    @property
    def rx_events(self) -> int:
        return self.received

    def counts(self) -> tuple[int, int, int, int]:
        return self.generated, self.sent, self.forwarded, self.received


def account(metrics: dict[int, NodeMetrics], node: int, kind: str) -> None:
    m = metrics[node]
    if kind not in ("generated", "sent", "forwarded", "received"):
        raise ValueError(f"unknown counter {kind!r}")
    setattr(m, kind, getattr(m, kind) + 1)


def energy_audit(metrics: dict[int, NodeMetrics], energy: dict[int, EnergyState]) -> dict[int, str]:
    """Check consumed energy equals the per-packet ledger exactly; return joules per node."""
    report = {}
    for nid in sorted(metrics):
        m, e = metrics[nid], energy[nid]
        expected = m.tx_events * e.tx_cost_uj + m.rx_events * e.rx_cost_uj
        if e.consumed_uj != expected or m.energy_consumed_uj != expected:
            raise AuditMismatch(f"node {nid}: consumed {e.consumed_uj} uJ, ledger says {expected} uJ")
        report[nid] = format_joules(e.consumed_uj)
    return report


@dataclass
class FlowState:
    flow: TrafficFlow
    next_seq: int = 1
    outstanding: int | None = None
    generated: int = 0
    acked: int = 0
    delivered: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class Frame:
    payload: bytes | DataPacket
    text: str
    source: int  # node id that created the packet
    tampered: bool = False
    forged: bool = False


@dataclass(frozen=True)
class DetectionRecord:
    time: int
    detector: int
    offender: int
    reason: str


@dataclass
class SimResult:
    seed: int
    duration: int
    metrics: dict[int, NodeMetrics]
    energy: dict[int, EnergyState]
    trace: list[str]
    detections: list[DetectionRecord]
    flows: list[FlowState]
    nodes: dict[int, AodvNode]


# -- engine -----------------------------------------------------------------

_DELIVER, _TIMER, _TRAFFIC, _ACK_TIMEOUT = range(4)


class Simulator:
    """Event loop for one scenario run.

    ``observer`` is called with the simulator after every processed event;
    tests use it to check invariants continuously.
    """

    def __init__(self, scenario, seed: int | None = None, observer: Callable[["Simulator"], None] | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.duration = scenario.duration
        self.topology: Topology = scenario.topology
        self.observer = observer
        self.rng = random.Random(self.seed)
        self.now = 0
        self.trace: list[str] = []
        self.detections: list[DetectionRecord] = []
        self._queue: list = []
        self._counter = itertools.count()

        cfg: NodeConfig = scenario.node_config
        secured = scenario.protocol == "secured"
        ep: EnergyParams = scenario.energy
        self.nodes: dict[int, AodvNode] = {}
        self.metrics: dict[int, NodeMetrics] = {}
        self.energy: dict[int, EnergyState] = {}
        for nid in self.topology.node_ids:
            addr = address_of(nid)
            behavior = scenario.malicious.get(nid, Honest())
            honest = isinstance(behavior, Honest)
            self.nodes[nid] = AodvNode(
                addr,
                secured=secured,
                key=scenario.secret_key if (secured and honest) else None,
                config=cfg,
                hash_selector=self._selector(addr),
                behavior=behavior,
                forge_rng=random.Random(f"forge:{self.seed}:{nid}"),
            )
            self.metrics[nid] = NodeMetrics()
            self.energy[nid] = EnergyState(
                ep.initial_uj if ep.enabled else None, ep.tx_cost_uj, ep.rx_cost_uj,
            )
        self.flows = [FlowState(f) for f in scenario.flows]

        for nid in self.topology.node_ids:
            if cfg.hello_enabled:
                self._push(self.rng.randrange(cfg.hello_interval), _TIMER, (nid, HELLO_TIMER))
            if injects(self.nodes[nid].behavior):
                self._push(cfg.inject_interval // 2, _TIMER, (nid, INJECT_TIMER))
        for idx, f in enumerate(self.flows):
            self._push(f.flow.start, _TRAFFIC, idx)

    def _selector(self, addr: int):
        policy = self.scenario.hash_policy
        if policy == "round-robin":
            return RoundRobinSelector(self.seed, addr)
        return fixed_selector(int(policy.split(":", 1)[1]))

    # -- queue --------------------------------------------------------------

    def _push(self, time: int, kind: int, data) -> None:
        heapq.heappush(self._queue, (time, next(self._counter), kind, data))

    def alive(self, nid: int) -> bool:
        return not self.energy[nid].depleted

    def step(self, limit: int | None = None) -> bool:
        """Process one event strictly before ``limit`` (default: the run duration)."""
        end = self.duration if limit is None else min(limit, self.duration)
        if not self._queue or self._queue[0][0] >= end:
            return False
        time, _, kind, data = heapq.heappop(self._queue)
        self.now = time
        if kind == _DELIVER:
            self._on_deliver(*data)
        elif kind == _TIMER:
            nid, timer = data
            if self.alive(nid):
                self._execute(nid, self.nodes[nid].on_timer(timer, time), nid)
        elif kind == _TRAFFIC:
            self._on_traffic(data)
        else:
            self._on_ack_timeout(*data)
        if self.observer is not None:
            self.observer(self)
        return True

    def run_until(self, limit: int) -> None:
        while self.step(limit):
            pass
        self.now = max(self.now, min(limit, self.duration))

    def run(self) -> SimResult:
        while self.step():
            pass
        self.now = self.duration
        return self.result()

    def result(self) -> SimResult:
        return SimResult(
            seed=self.seed, duration=self.duration, metrics=self.metrics, energy=self.energy,
            trace=self.trace, detections=self.detections, flows=self.flows, nodes=self.nodes,
        )

    # -- tracing ------------------------------------------------------------

    def _log(self, nid: int, ev: str, text: str, reason: str = "-") -> None:
        self.trace.append(f"t={format_seconds(self.now)} node={nid} ev={ev} msg={text} reason={reason}")

    # -- transmission and reception ----------------------------------------

    def _spend(self, nid: int, cost: int) -> bool:
        if self.energy[nid].spend(cost):
            self.metrics[nid].energy_consumed_uj += cost
            return True
        return False

    def _transmit(self, nid: int, action: Broadcast | Unicast, source: int) -> None:
        m = self.metrics[nid]
        payload = action.payload
        is_data = isinstance(payload, DataPacket)
        text = payload.render() if is_data else render(payload)
        if action.origin and not is_data:
            # Data is counted when the application creates it; control when the node creates it.
            account(self.metrics, nid, "generated")
        if not self._spend(nid, self.energy[nid].tx_cost_uj):
            m.drops_by_reason["energy"] += 1
            self._log(nid, "drop", text, "energy")
            return
        if is_data:
            source = node_id_of(payload.src)
            wire = payload
        else:
            wire = encode(payload)
        if action.origin:
            if not is_data:
                source = nid
            account(self.metrics, nid, "sent")
            self._log(nid, "send", text)
        else:
            account(self.metrics, nid, "forwarded")
            m.forwarded_by_source[source] += 1
            self._log(nid, "fwd", text)
        frame = Frame(wire, text, source, action.tampered, action.forged)
        target = node_id_of(action.next_hop) if isinstance(action, Unicast) else None
        recipients = deliver(self.topology, nid, target, self.alive)
        if target is not None and not recipients:
            m.drops_by_reason["out-of-range"] += 1
        sc = self.scenario
        for r in recipients:
            delay = sc.latency + (self.rng.randrange(sc.jitter) if sc.jitter > 0 else 0)
            self._push(self.now + delay, _DELIVER, (nid, r, frame))

    def _on_deliver(self, sender: int, receiver: int, frame: Frame) -> None:
        if not self.alive(receiver) or not self._spend(receiver, self.energy[receiver].rx_cost_uj):
            return
        m = self.metrics[receiver]
        account(self.metrics, receiver, "received")
        self._log(receiver, "recv", frame.text)
        node = self.nodes[receiver]
        if isinstance(frame.payload, DataPacket):
            actions = node.receive_data(frame.payload, address_of(sender), self.now)
        else:
            actions = node.receive_pipeline(frame.payload, address_of(sender), self.now)
        if (frame.tampered or frame.forged) and was_accepted(actions):
            if frame.tampered:
                m.accepted_tampered += 1
            if frame.forged:
                m.accepted_forged += 1
        self._execute(receiver, actions, frame.source)

    def _execute(self, nid: int, actions, source: int) -> None:
        for a in actions:
            if isinstance(a, (Broadcast, Unicast)):
                self._transmit(nid, a, source)
            elif isinstance(a, DeliverUp):
                self._app_deliver(nid, a.packet)
            elif isinstance(a, Detect):
                offender = node_id_of(a.offender)
                self.detections.append(DetectionRecord(self.now, nid, offender, a.reason))
                self._log(nid, "detect", f"offender={offender}", a.reason)
            elif isinstance(a, Drop):
                self.metrics[nid].drops_by_reason[a.reason] += 1
                text = "-"
                if isinstance(a.payload, DataPacket):
                    text = a.payload.render()
                elif isinstance(a.payload, SecureEnvelope):
                    text = render(a.payload)
                self._log(nid, "drop", text, a.reason)
            elif isinstance(a, Schedule):
                self._push(self.now + a.delay, _TIMER, (nid, a.timer))

    # -- traffic ------------------------------------------------------------

    def _on_traffic(self, idx: int) -> None:
        fs = self.flows[idx]
        f = fs.flow
        if self.now >= f.stop or not self.alive(f.src):
            return
        seq = fs.next_seq
        fs.next_seq += 1
        fs.generated += 1
        pkt = DataPacket(idx, seq, address_of(f.src), address_of(f.dst), f.packet_size)
        account(self.metrics, f.src, "generated")
        if f.reliable:
            fs.outstanding = seq
            self._push(self.now + self.scenario.ack_timeout, _ACK_TIMEOUT, (idx, seq))
        else:
            self._push(self.now + f.interval, _TRAFFIC, idx)
        self._execute(f.src, self.nodes[f.src].send_data(pkt, self.now), f.src)

    def _on_ack_timeout(self, idx: int, seq: int) -> None:
        fs = self.flows[idx]
        if fs.outstanding == seq:
            fs.outstanding = None
            self._push(self.now, _TRAFFIC, idx)

    def _app_deliver(self, nid: int, pkt: DataPacket) -> None:
        fs = self.flows[pkt.flow_id]
        if not pkt.is_ack:
            fs.delivered.add(pkt.seq)
            if fs.flow.reliable:
                ack = DataPacket(pkt.flow_id, pkt.seq, pkt.dst, pkt.src, 40, is_ack=True)
                account(self.metrics, nid, "generated")
                self._execute(nid, self.nodes[nid].send_data(ack, self.now), nid)
        elif fs.outstanding == pkt.seq:
            fs.outstanding = None
            fs.acked += 1
            self._push(self.now + fs.flow.interval, _TRAFFIC, pkt.flow_id)


def run(scenario, seed: int | None = None) -> SimResult:
    return Simulator(scenario, seed).run()
