"""Scenario files: a flat, line-oriented ``key = value`` grammar.

::

    # comment (also allowed after a value)
    name        = t2-plain
    protocol    = plain | secured
    duration    = 150                  # seconds
    seed        = 1
    secret_key  = hex:00112233 | text:group-key
    hash_policy = round-robin | fixed:1 | fixed:2
    radio_range = 250                  # meters
    node        = <id> <x> <y>         # repeated
    link        = <id> <id>            # repeated; replaces range-based links
    flow        = <src> <dst> [size=512] [interval=0.05] [start=1] [stop=149] [reliable=yes]
    malicious   = <id>:<behavior>[:<params>]

Behaviors: ``honest``, ``tamper-hop[:set_to]``, ``tamper-seq[:delta]``,
``drop-all``, ``drop-routing``, ``fabricate-rrep:<dest>[,seq[,hops[,victim]]]``,
``spoof-originator:<as>``. Parameters are positional or ``name=value``;
node references are node ids.

Timing and model keys (seconds unless noted): ``latency``, ``jitter``,
``ack_timeout``, ``hello_interval``, ``allowed_hello_loss`` (count),
``active_route_timeout``, ``path_discovery_time``, ``rreq_timeout``,
``rreq_retries`` (count), ``net_diameter`` (hops), ``blacklist_threshold``
(count), ``gratuitous_rrep`` (yes/no), ``hello`` (on/off),
``inject_interval``, ``energy_model`` (on/off), ``energy_initial``,
``energy_tx``, ``energy_rx`` (joules).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import adversary as adv
from .digest import SecretKey
from .node import NodeConfig
from .sim import EnergyParams, Topology, TrafficFlow, address_of, node_id_of
from .units import US_PER_MS, US_PER_S, format_joules, format_seconds, from_seconds, joules_to_uj

BUNDLED_DIR = Path(__file__).with_name("scenarios")


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, line: int, message: str, source: str = "<scenario>"):
        self.line = line
        self.message = message
        super().__init__(f"{source}:{line}: {message}")


class ValidationError(ScenarioError):
    pass


@dataclass
class Scenario:
    name: str = "unnamed"
    protocol: str = "plain"
    duration: int = 150 * US_PER_S
    seed: int = 1
    secret_key: SecretKey | None = None
    hash_policy: str = "round-robin"
    topology: Topology = field(default_factory=lambda: Topology({}))
    flows: list[TrafficFlow] = field(default_factory=list)
    malicious: dict[int, adv.AdversaryBehavior] = field(default_factory=dict)
    energy: EnergyParams = field(default_factory=EnergyParams)
    node_config: NodeConfig = field(default_factory=NodeConfig)
    latency: int = 1 * US_PER_MS
    jitter: int = 100
    ack_timeout: int = 1 * US_PER_S

    def validate(self) -> "Scenario":
        if self.protocol not in ("plain", "secured"):
            raise ValidationError(f"protocol must be plain or secured, got {self.protocol!r}")
        if self.protocol == "secured" and self.secret_key is None:
            raise ValidationError("secured protocol requires secret_key")
        if self.hash_policy not in ("round-robin", "fixed:1", "fixed:2"):
            raise ValidationError(f"hash_policy must be round-robin, fixed:1 or fixed:2, got {self.hash_policy!r}")
        if self.duration < 0:
            raise ValidationError("duration must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        ids = set(self.topology.positions)
        if not ids:
            raise ValidationError("scenario defines no nodes")
        if not (math.isfinite(self.topology.radio_range) and self.topology.radio_range > 0):
            raise ValidationError("radio_range must be a positive finite distance")
        if not all(math.isfinite(c) for pos in self.topology.positions.values() for c in pos):
            raise ValidationError("node positions must be finite")
        ep = self.energy
        if ep.initial_uj <= 0 or ep.tx_cost_uj < 0 or ep.rx_cost_uj < 0:
            raise ValidationError("energy_initial must be positive and per-packet costs non-negative")
        if self.topology.links is not None:
            for a, b in self.topology.links:
                if a not in ids or b not in ids:
                    raise ValidationError(f"link {a}-{b} names an unknown node")
        for nid, behavior in self.malicious.items():
            if nid not in ids:
                raise ValidationError(f"malicious node {nid} is not in the topology")
            for ref in _behavior_node_refs(behavior):
                if node_id_of(ref) not in ids:
                    raise ValidationError(f"behavior of node {nid} references unknown node {node_id_of(ref)}")
        for f in self.flows:
            if f.src not in ids or f.dst not in ids:
                raise ValidationError(f"flow {f.src}->{f.dst} names an unknown node")
            if f.src == f.dst:
                raise ValidationError(f"flow {f.src}->{f.dst} has identical endpoints")
            if not f.start < f.stop <= self.duration:
                raise ValidationError(f"flow {f.src}->{f.dst} violates start < stop <= duration")
            if f.interval <= 0 or f.packet_size <= 0:
                raise ValidationError(f"flow {f.src}->{f.dst} needs positive interval and size")
        cfg = self.node_config
        if cfg.hello_interval <= 0 or cfg.blacklist_threshold < 1 or cfg.allowed_hello_loss < 1:
            raise ValidationError("hello_interval > 0, allowed_hello_loss >= 1 and blacklist_threshold >= 1 required")
        if cfg.inject_interval <= 0 or cfg.rreq_timeout <= 0 or cfg.active_route_timeout <= 0:
            raise ValidationError("timer values must be positive")
        if self.latency <= 0 or self.jitter < 0 or self.ack_timeout <= 0:
            raise ValidationError("latency and ack_timeout must be positive, jitter non-negative")
        return self

    def with_duration(self, duration: int) -> "Scenario":
        """Shorten or extend the run, clipping flows to fit."""
        flows = [replace(f, stop=min(f.stop, duration)) for f in self.flows if f.start < duration]
        return replace(self, duration=duration, flows=flows)

    def header(self) -> list[str]:
        """Every effective setting, defaults included, as ``key = value`` lines."""
        cfg = self.node_config
        s = format_seconds
        lines = [
            f"name = {self.name}",
            f"protocol = {self.protocol}",
            f"duration = {s(self.duration)}",
            f"seed = {self.seed}",
            f"secret_key = {'<redacted %d octets>' % len(self.secret_key.material) if self.secret_key else '<none>'}",
            f"hash_policy = {self.hash_policy}",
            f"radio_range = {self.topology.radio_range:g}",
            f"latency = {s(self.latency)}",
            f"jitter = {s(self.jitter)}",
            f"ack_timeout = {s(self.ack_timeout)}",
            f"hello = {'on' if cfg.hello_enabled else 'off'}",
            f"hello_interval = {s(cfg.hello_interval)}",
            f"allowed_hello_loss = {cfg.allowed_hello_loss}",
            f"active_route_timeout = {s(cfg.active_route_timeout)}",
            f"path_discovery_time = {s(cfg.path_discovery_time)}",
            f"rreq_timeout = {s(cfg.rreq_timeout)}",
            f"rreq_retries = {cfg.rreq_retries}",
            f"net_diameter = {cfg.net_diameter}",
            f"blacklist_threshold = {cfg.blacklist_threshold}",
            f"gratuitous_rrep = {'yes' if cfg.gratuitous_rrep else 'no'}",
            f"inject_interval = {s(cfg.inject_interval)}",
            f"energy_model = {'on' if self.energy.enabled else 'off'}",
            f"energy_initial = {format_joules(self.energy.initial_uj)}",
            f"energy_tx = {format_joules(self.energy.tx_cost_uj)}",
            f"energy_rx = {format_joules(self.energy.rx_cost_uj)}",
        ]
        for nid in self.topology.node_ids:
            x, y = self.topology.positions[nid]
            lines.append(f"node = {nid} {x:g} {y:g}")
        if self.topology.links is not None:
            for a, b in sorted(self.topology.links):
                lines.append(f"link = {a} {b}")
        for f in self.flows:
            lines.append(
                f"flow = {f.src} {f.dst} size={f.packet_size} interval={s(f.interval)} "
                f"start={s(f.start)} stop={s(f.stop)} reliable={'yes' if f.reliable else 'no'}"
            )
        for nid in sorted(self.malicious):
            lines.append(f"malicious = {nid}:{format_behavior(self.malicious[nid])}")
        return lines


def _behavior_node_refs(behavior) -> list[int]:
    if isinstance(behavior, adv.FabricateRrep):
        return [behavior.advertised_dest] + ([behavior.victim] if behavior.victim is not None else [])
    if isinstance(behavior, adv.SpoofOriginator):
        return [behavior.as_addr]
    return []


_ADDRESS_PARAMS = {"advertised_dest", "victim", "as_addr"}


def format_behavior(behavior) -> str:
    name = adv.behavior_name(behavior)
    _, params = adv.BEHAVIOR_NAMES[name]
    parts = []
    for p in params:
        value = getattr(behavior, p)
        if value is None:
            continue
        if p in _ADDRESS_PARAMS:
            value = node_id_of(value)
        parts.append(f"{p}={value}")
    return name + (":" + ",".join(parts) if parts else "")


def parse_behavior(text: str) -> adv.AdversaryBehavior:
    """Parse ``<behavior>[:<params>]``; raises ValueError on unknown names or bad params."""
    name, _, params = text.strip().partition(":")
    name = name.strip()
    if name not in adv.BEHAVIOR_NAMES:
        raise ValueError(f"unknown behavior {name!r} (known: {', '.join(adv.BEHAVIOR_NAMES)})")
    cls, order = adv.BEHAVIOR_NAMES[name]
    kwargs: dict[str, int] = {}
    if params.strip():
        for i, item in enumerate(p.strip() for p in params.split(",")):
            if "=" in item:
                key, _, value = item.partition("=")
                key = key.strip()
            else:
                if i >= len(order):
                    raise ValueError(f"too many parameters for {name}")
                key, value = order[i], item
            if key not in order:
                raise ValueError(f"{name} has no parameter {key!r}")
            try:
                number = int(value.strip())
            except ValueError:
                raise ValueError(f"parameter {key} of {name} must be an integer, got {value.strip()!r}") from None
            if key in _ADDRESS_PARAMS:
                if number < 0:
                    raise ValueError(f"node id must be non-negative, got {number}")
                number = address_of(number)
            kwargs[key] = number
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None


def _parse_key(raw: str) -> SecretKey:
    if raw.startswith("hex:"):
        material = bytes.fromhex(raw[4:])
    elif raw.startswith("text:"):
        material = raw[5:].encode()
    else:
        material = raw.encode()
    return SecretKey(material)


_YES = {"yes": True, "on": True, "true": True, "1": True, "no": False, "off": False, "false": False, "0": False}

_SECONDS_KEYS = {
    "hello_interval", "active_route_timeout", "path_discovery_time", "rreq_timeout", "inject_interval",
}
_COUNT_KEYS = {"allowed_hello_loss", "rreq_retries", "net_diameter", "blacklist_threshold"}
_REPEATED = {"node", "link", "flow", "malicious"}
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    sc = Scenario()
    cfg: dict = {}
    energy: dict = {}
    positions: dict[int, tuple[float, float]] = {}
    links: set[tuple[int, int]] = set()
    flows: list[tuple[int, dict]] = []
    malicious: dict[int, adv.AdversaryBehavior] = {}
    radio_range = 250.0
    seen: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _KEY_RE.match(line)
        if m is None:
            raise ParseError(lineno, f"expected 'key = value', got {line!r}", source)
        key, value = m.group(1), m.group(2).strip()

        def fail(msg: str):
            raise ParseError(lineno, f"{key}: {msg}", source)

        if key not in _REPEATED:
            if key in seen:
                fail("duplicate key")
            seen.add(key)
        if not value:
            fail("missing value")
        try:
            if key == "name":
                sc.name = value
            elif key == "protocol":
                sc.protocol = value
            elif key == "duration":
                sc.duration = from_seconds(value)
            elif key == "seed":
                sc.seed = int(value)
            elif key == "secret_key":
                sc.secret_key = _parse_key(value)
            elif key == "hash_policy":
                sc.hash_policy = value
            elif key == "radio_range":
                radio_range = float(value)
            elif key == "latency":
                sc.latency = from_seconds(value)
            elif key == "jitter":
                sc.jitter = from_seconds(value)
            elif key == "ack_timeout":
                sc.ack_timeout = from_seconds(value)
            elif key in _SECONDS_KEYS:
                cfg[key] = from_seconds(value)
            elif key in _COUNT_KEYS:
                cfg[key] = int(value)
            elif key == "gratuitous_rrep":
                cfg["gratuitous_rrep"] = _YES[value.lower()]
            elif key == "hello":
                cfg["hello_enabled"] = _YES[value.lower()]
            elif key == "energy_model":
                energy["enabled"] = _YES[value.lower()]
            elif key in ("energy_initial", "energy_tx", "energy_rx"):
                energy[{"energy_initial": "initial_uj", "energy_tx": "tx_cost_uj", "energy_rx": "rx_cost_uj"}[key]] = joules_to_uj(value)
            elif key == "node":
                parts = value.split()
                if len(parts) != 3:
                    fail("expected '<id> <x> <y>'")
                nid = int(parts[0])
                if nid < 0:
                    fail("node id must be non-negative")
                if nid in positions:
                    fail(f"node {nid} defined twice")
                positions[nid] = (float(parts[1]), float(parts[2]))
            elif key == "link":
                parts = value.split()
                if len(parts) != 2:
                    fail("expected '<id> <id>'")
                a, b = sorted(int(p) for p in parts)
                links.add((a, b))
            elif key == "flow":
                parts = value.replace("->", " ").split()
                if len(parts) < 2:
                    fail("expected '<src> <dst> [options]'")
                opts = {}
                for opt in parts[2:]:
                    k, eq, v = opt.partition("=")
                    if not eq or k not in ("size", "interval", "start", "stop", "reliable"):
                        fail(f"unknown flow option {opt!r}")
                    opts[k] = v
                flows.append((lineno, {"src": int(parts[0]), "dst": int(parts[1]), **opts}))
            elif key == "malicious":
                nid_text, sep, behavior = value.partition(":")
                if not sep:
                    fail("expected '<node>:<behavior>[:params]'")
                nid = int(nid_text)
                if nid in malicious:
                    fail(f"node {nid} already has a behavior")
                try:
                    malicious[nid] = parse_behavior(behavior)
                except ValueError as exc:
                    raise ValidationError(f"{source}:{lineno}: malicious: {exc}") from None
            else:
                fail("unknown key")
        except ParseError:
            raise
        except ValidationError:
            raise
        except (ValueError, KeyError) as exc:
            fail(f"invalid value {value!r} ({exc})")

    sc.topology = Topology(positions, radio_range, frozenset(links) if links else None)
    sc.malicious = malicious
    sc.node_config = replace(NodeConfig(), **cfg)
    sc.energy = replace(EnergyParams(), **energy)
    for lineno, opts in flows:
        try:
            sc.flows.append(TrafficFlow(
                src=opts["src"], dst=opts["dst"],
                packet_size=int(opts.get("size", 512)),
                interval=from_seconds(opts.get("interval", "0.05")),
                start=from_seconds(opts.get("start", "1")),
                stop=from_seconds(opts["stop"]) if "stop" in opts else sc.duration,
                reliable=_YES[opts.get("reliable", "yes").lower()],
            ))
        except (ValueError, KeyError) as exc:
            raise ParseError(lineno, f"flow: invalid option value ({exc})", source) from None
    return sc


def resolve_path(path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    bundled = BUNDLED_DIR / p.name
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"scenario not found: {path}")


def load_scenario(path: str | Path) -> Scenario:
    p = resolve_path(path)
    sc = parse_scenario(p.read_text(), str(p))
    try:
        return sc.validate()
    except ValidationError as exc:
        raise ValidationError(f"{p}: {exc}") from None


def bundled_scenarios() -> list[Path]:
    return sorted(BUNDLED_DIR.glob("*.scn"))

