"""Text and structured renderings of a finished run."""

from __future__ import annotations

import json

from .sim import SimResult, energy_audit
from .units import format_seconds

COLUMNS = ("Node", "Generated", "Sent", "Forwarded", "Received")


def _protocol_title(protocol: str) -> str:
    return "AODV with message digest" if protocol == "secured" else "AODV"


def detection_lines(result: SimResult) -> list[str]:
    return [
        f"t={format_seconds(d.time)} detector={d.detector} offender={d.offender} reason={d.reason}"
        for d in result.detections
    ]


def table(result: SimResult, scenario) -> str:
    energy = energy_audit(result.metrics, result.energy)
    rows = [COLUMNS] + [
        (f"Node {nid}", *(str(c) for c in result.metrics[nid].counts()))
        for nid in sorted(result.metrics)
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]

    def fmt(row):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        return " | ".join(cells)

    out = [f"# {line}" for line in scenario.header()]
    out.append(f"# run seed = {result.seed}")
    out += [
        "",
        f"Routing Protocol: {_protocol_title(scenario.protocol)}",
        f"Case: {scenario.name}",
        fmt(rows[0]),
        "-+-".join("-" * w for w in widths),
    ]
    out += [fmt(r) for r in rows[1:]]
    out += ["", "Energy consumed (J)"]
    out += [f"Node {nid} | {energy[nid]}" for nid in sorted(energy)]
    for f in result.flows:
        flow = f.flow
        out.append(f"Flow {flow.src}->{flow.dst} | generated {f.generated} | delivered {len(f.delivered)} | acked {f.acked}")
    out += ["", "Detections"]
    out += detection_lines(result) or ["(none)"]
    return "\n".join(out) + "\n"


def structured(result: SimResult, scenario) -> str:
    """Stable JSON: sorted keys, no floats, identical runs give identical bytes."""
    energy = energy_audit(result.metrics, result.energy)
    doc = {
        "scenario": scenario.header(),
        "seed": result.seed,
        "nodes": [
            {
                "node": nid,
                "generated": m.generated,
                "sent": m.sent,
                "forwarded": m.forwarded,
                "received": m.received,
                "energy_consumed_j": energy[nid],
                "drops_by_reason": dict(sorted(m.drops_by_reason.items())),
                "accepted_tampered": m.accepted_tampered,
                "accepted_forged": m.accepted_forged,
            }
            for nid, m in sorted(result.metrics.items())
        ],
        "flows": [
            {
                "src": f.flow.src,
                "dst": f.flow.dst,
                "generated": f.generated,
                "delivered": len(f.delivered),
                "acked": f.acked,
            }
            for f in result.flows
        ],
        "detections": [
            {"time": format_seconds(d.time), "detector": d.detector, "offender": d.offender, "reason": d.reason}
            for d in result.detections
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report(result: SimResult, scenario, fmt: str = "table") -> str:
    if fmt == "table":
        return table(result, scenario)
    if fmt == "structured":
        return structured(result, scenario)
    raise ValueError(f"unknown report format {fmt!r}")
