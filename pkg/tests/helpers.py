from collections import deque
from dataclasses import replace

from secaodv.digest import SecretKey
from secaodv.scenario import Scenario
from secaodv.sim import Topology, TrafficFlow, address_of, node_id_of
from secaodv.units import US_PER_S

A0, A1, A2, A3 = (address_of(i) for i in range(4))
KEY = SecretKey(b"manet-group-key")

CHAIN = Topology({0: (0.0, 0.0), 1: (400.0, 0.0), 2: (200.0, 0.0)})
TRIANGLE = Topology({0: (0.0, 0.0), 1: (200.0, 0.0), 2: (100.0, 150.0)})


def flow(src=0, dst=1, *, start=1.0, stop=20.0, interval=0.05, reliable=True):
    return TrafficFlow(src, dst, interval=int(interval * US_PER_S), start=int(start * US_PER_S),
                       stop=int(stop * US_PER_S), reliable=reliable)


def scenario(topology=CHAIN, *, protocol="plain", duration=20.0, flows=None, malicious=None, seed=1, **kw):
    sc = Scenario(
        name="test",
        protocol=protocol,
        duration=int(duration * US_PER_S),
        seed=seed,
        secret_key=KEY if protocol == "secured" else None,
        topology=topology,
        flows=[flow(stop=min(duration, 20.0) - 1.0)] if flows is None else flows,
        malicious=malicious or {},
    )
    return replace(sc, **kw).validate()


def link_topology(n, edges):
    return Topology({i: (0.0, 0.0) for i in range(n)}, links=frozenset(tuple(sorted(e)) for e in edges))


def bfs_distances(n, edges, src, no_relay=()):
    """Brute-force hop distances used as an oracle for discovered routes.

    Nodes in ``no_relay`` can be reached but paths do not continue through them.
    """
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        if u != src and u in no_relay:
            continue
        for v in sorted(adj[u]):
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def find_loop(sim):
    """Return (start, dest) for the first next-hop cycle found, else None."""
    now = sim.now
    ids = list(sim.nodes)
    for dest in ids:
        daddr = address_of(dest)
        for start in ids:
            seen = {start}
            cur = start
            while cur != dest:
                hop = sim.nodes[cur].next_hop(daddr, now)
                if hop is None:
                    break
                cur = node_id_of(hop)
                if cur in seen:
                    return start, dest
                seen.add(cur)
    return None
