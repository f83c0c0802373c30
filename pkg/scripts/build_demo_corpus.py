#!/usr/bin/env python3
"""Populate fixtures/corpus with a small expert-annotated knowledge corpus.

Each record pairs an atom-style key text (component attributes plus the
attack method wording) with a scored sub-tree annotation. Re-running the
script is a no-op: record ids are content-addressed.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from autotara.knowledge import KnowledgeStore
from autotara.risk import FeasibilityVector, ImpactSeverity, ImpactVector
from autotara.xsam import KnowledgeAnnotation, Provenance

# (key text, method description, category, scores, impact or None)
ENTRIES = [
    (
        "Gateway ECU with JTAG debug header and OpenSSL 1.1.0a",
        "Access the gateway via JTAG to corrupt its firmware",
        "interface_access",
        (4, 6, 7, 4, 7),
        ("Major", "Moderate", "Major", "Negligible"),
    ),
    (
        "IVI head unit running Linux with bluetooth and USB",
        "Exploit a kernel vulnerability in the IVI Linux image",
        "local_exploit",
        (1, 3, 0, 0, 0),
        None,
    ),
    (
        "CAN bus segment between gateway and body controller",
        "Replay malicious CAN bus signals to the body controller",
        "channel_propagation",
        (1, 3, 3, 1, 4),
        None,
    ),
    (
        "OBD-II diagnostic port behind the dashboard",
        "Connect a rogue diagnostic dongle to the OBD port and inject crafted frames",
        "interface_access",
        (1, 3, 3, 4, 7),
        ("Moderate", "Moderate", "Major", "Negligible"),
    ),
    (
        "Telematics control unit with cellular modem",
        "Compromise the TCU over the cellular interface using a rogue base station",
        "interface_access",
        (10, 6, 7, 4, 7),
        ("Severe", "Major", "Major", "Major"),
    ),
    (
        "ABS ECU on the chassis CAN with UDS services enabled",
        "Abuse UDS routine control to disable the ABS actuator",
        "local_exploit",
        (4, 6, 7, 1, 4),
        ("Severe", "Moderate", "Major", "Negligible"),
    ),
    (
        "Body control module driving door locks over LIN",
        "Spoof LIN frames to actuate the door lock motors",
        "channel_propagation",
        (1, 3, 3, 4, 4),
        ("Major", "Major", "Moderate", "Negligible"),
    ),
    (
        "Firmware update service accepting unsigned images",
        "Flash a tampered firmware image through the unauthenticated updater",
        "local_exploit",
        (4, 3, 3, 1, 0),
        None,
    ),
    (
        "Wireless key fob using rolling code entry",
        "Record and replay key fob frames with an SDR to unlock the vehicle",
        "interface_access",
        (4, 3, 3, 4, 7),
        ("Moderate", "Major", "Negligible", "Moderate"),
    ),
    (
        "Ethernet backbone switch with unauthenticated SOME/IP",
        "Inject forged SOME/IP service offers on the backbone",
        "channel_propagation",
        (4, 6, 3, 1, 4),
        None,
    ),
    (
        "Charging port with powerline communication",
        "Exploit the PLC stack from a malicious charging station",
        "interface_access",
        (10, 6, 7, 4, 7),
        ("Major", "Major", "Major", "Negligible"),
    ),
]


def annotation_for(method: str, category: str, scores, impact) -> KnowledgeAnnotation:
    channel = ' channel="x"' if category == "channel_propagation" else ""
    sub_tree = f'<Method id="m1" category="{category}" description="{method}"{channel} />'
    vector = FeasibilityVector(*scores)
    impact_vector = None
    if impact:
        impact_vector = ImpactVector(*(ImpactSeverity(v) for v in impact))
    return KnowledgeAnnotation(
        sub_tree=sub_tree,
        step_feasibility=(("m1", vector),),
        impact=impact_vector,
        provenance=Provenance.EXPERT_CURATED,
        timestamp="2026-01-15T00:00:00Z",
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=Path(__file__).resolve().parent.parent / "fixtures" / "corpus")
    args = parser.parse_args()
    store = KnowledgeStore(args.out)
    for key, method, category, scores, impact in ENTRIES:
        record_id = store.ingest(f"{key}: {method}", annotation_for(method, category, scores, impact))
        print(record_id, key)
    print(f"{len(store)} records in {args.out}")


if __name__ == "__main__":
    main()
