"""Agent roles: sub-tree construction, coherence validation, risk assessment.

Every operation sends a structured task envelope to the backend, parses
the JSON reply against a published schema (assets/schemas/) and retries
up to MAX_RETRIES times on malformed output before giving up.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import jsonschema

from .backends import AgentBackend
from .errors import MalformedAgentOutput
from .risk import DIMENSIONS, FeasibilityVector, ImpactVector, RiskConfig, DEFAULT_CONFIG
from .topology import Atom
from .tree import (
    AttackMethod,
    AttackObjective,
    LogicKind,
    LogicNode,
    SubTree,
    TreeNode,
)
from .xsam import ThreatScenario

MAX_RETRIES = 3


@dataclass(frozen=True)
class AttackSurface:
    name: str
    source: str  # hardware | software | interface | channel
    attribute: str


@dataclass
class AgentWarnings:
    """Collects non-fatal findings (dropped surfaces, snapped scores)."""

    messages: list[str] = field(default_factory=list)

    def add(self, message: str) -> None:
        self.messages.append(message)


def _load_asset(kind: str, name: str) -> str:
    return resources.files("autotara.assets").joinpath(kind, name).read_text(encoding="utf-8")


def _schema(name: str) -> dict:
    return json.loads(_load_asset("schemas", name))


def _prompt(name: str) -> str:
    return _load_asset("prompts", name)


def _atom_payload(atom: Atom) -> dict:
    def chan_payload(ref) -> dict:
        return {
            "id": ref.channel.id,
            "medium": ref.channel.medium,
            "neighbor": ref.neighbor,
        }

    exit_payload = None
    if atom.exit is not None:
        exit_payload = chan_payload(atom.exit)
    return {
        "component": atom.component.id,
        "name": atom.component.name,
        "hardware": list(atom.component.hardware),
        "software": list(atom.component.software),
        "interfaces": [{"id": i.id, "kind": i.kind} for i in atom.component.interfaces],
        "incoming_channels": sorted((chan_payload(r) for r in atom.incoming), key=lambda c: c["id"]),
        "exit_channel": exit_payload,
    }


def _call(backend: AgentBackend, prompt_name: str, task: dict, schema_name: str, postprocess=None):
    """One logical request: at most MAX_RETRIES backend calls, schema plus
    semantic validation per attempt."""
    schema = _schema(schema_name)
    messages = [
        {"role": "system", "content": _prompt(prompt_name)},
        {"role": "user", "content": json.dumps(task, sort_keys=True)},
    ]
    last_error = None
    for _attempt in range(MAX_RETRIES):
        reply = backend.complete(messages)
        try:
            payload = json.loads(reply)
            jsonschema.validate(payload, schema)
            return postprocess(payload) if postprocess is not None else payload
        except (json.JSONDecodeError, jsonschema.ValidationError, MalformedAgentOutput) as exc:
            last_error = exc
            messages = messages + [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": f"Reply rejected ({exc}); answer again with valid JSON only."},
            ]
    raise MalformedAgentOutput(f"backend reply failed validation after {MAX_RETRIES} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Sub-Tree Constructor

def infer_attack_surfaces(
    atom: Atom, backend: AgentBackend, warnings: AgentWarnings | None = None
) -> list[AttackSurface]:
    """Attack surfaces grounded in the atom's attributes; ungrounded ones are dropped."""
    payload = _call(
        backend,
        "constructor_surfaces.md",
        {"task": "infer_surfaces", "atom": _atom_payload(atom)},
        "surfaces.json",
    )
    valid_attrs = {
        "hardware": set(atom.component.hardware),
        "software": set(atom.component.software),
        "interface": {i.id for i in atom.component.interfaces},
        "channel": {r.channel.id for r in atom.incoming}
        | ({atom.exit.channel.id} if atom.exit is not None else set()),
    }
    surfaces: list[AttackSurface] = []
    seen: set[tuple[str, str]] = set()
    for entry in payload["surfaces"]:
        surface = AttackSurface(name=entry["name"], source=entry["source"], attribute=entry["attribute"])
        if surface.attribute not in valid_attrs.get(surface.source, set()):
            if warnings:
                warnings.add(
                    f"dropped surface '{surface.name}': {surface.source} attribute "
                    f"'{surface.attribute}' not present on atom {atom.id}"
                )
            continue
        key = (surface.name, surface.source)
        if key in seen:
            continue
        seen.add(key)
        surfaces.append(surface)
    return surfaces


def derive_local_objective(atom: Atom, scenario: ThreatScenario, backend: AgentBackend) -> str:
    """The endpoint atom's objective is the scenario objective verbatim."""
    if atom.is_endpoint:
        return scenario.objective
    payload = _call(
        backend,
        "constructor_objective.md",
        {
            "task": "derive_objective",
            "atom": _atom_payload(atom),
            "scenario": {"id": scenario.id, "objective": scenario.objective},
        },
        "objective.json",
    )
    text = payload["objective"].strip()
    if not text:
        raise MalformedAgentOutput("backend returned an empty local objective")
    return text


def _reply_node_to_tree(node: dict, atom: Atom, counter: list[int]) -> TreeNode:
    if "method" in node:
        spec = node["method"]
        counter[0] += 1
        category = spec["category"]
        channel = spec.get("channel")
        if category == "channel_propagation":
            atom_channels = {r.channel.id for r in atom.incoming}
            if atom.exit is not None:
                atom_channels.add(atom.exit.channel.id)
            if channel not in atom_channels:
                raise MalformedAgentOutput(
                    f"method cites channel '{channel}' absent from atom {atom.id}"
                )
        else:
            channel = None
        from .tree import MethodCategory

        return AttackMethod(
            id=f"AM-{counter[0]}",
            description=spec["description"].strip(),
            category=MethodCategory(category),
            related_channel=channel,
        )
    kind = LogicKind(node["kind"])
    children = tuple(_reply_node_to_tree(c, atom, counter) for c in node["children"])
    if len(children) < 2:
        raise MalformedAgentOutput(f"{kind.value} node has fewer than 2 children")
    counter[0] += 1
    return LogicNode(id=f"L-{counter[0]}", kind=kind, children=children)


def construct_subtree(
    atom: Atom,
    scenario: ThreatScenario,
    surfaces: Sequence[AttackSurface],
    objective: str,
    backend: AgentBackend,
    knowledge_hints: Sequence[dict] = (),
    regeneration_context: dict | None = None,
) -> SubTree:
    """Three-step chain-of-thought construction collapsed into one structured call."""
    task = {
        "task": "construct_subtree",
        "atom": _atom_payload(atom),
        "scenario": {"id": scenario.id, "objective": scenario.objective},
        "surfaces": [{"name": s.name, "source": s.source, "attribute": s.attribute} for s in surfaces],
        "objective": objective,
        "hints": list(knowledge_hints),
    }
    if regeneration_context:
        task["regeneration"] = regeneration_context

    def build(payload: dict) -> SubTree:
        counter = [0]
        root = _reply_node_to_tree(payload["root"], atom, counter)
        objective_node = AttackObjective(
            id="AO-0",
            text=payload["objective"].strip() or objective,
            component=atom.component.id,
            child=root,
        )
        return SubTree(atom_id=atom.id, objective=objective_node)

    return _call(backend, "constructor_subtree.md", task, "subtree.json", postprocess=build)


# ---------------------------------------------------------------------------
# Attack-Tree Assembler

def validate_coherence(upstream: SubTree, downstream_method: AttackMethod, backend: AgentBackend) -> bool:
    payload = _call(
        backend,
        "assembler_coherence.md",
        {
            "task": "validate_coherence",
            "upstream_objective": upstream.objective.text,
            "method_text": downstream_method.description,
            "channel": downstream_method.related_channel,
        },
        "coherence.json",
    )
    return payload["verdict"] == "coherent"


# ---------------------------------------------------------------------------
# Risk Assessor

def score_step_feasibility(
    method: AttackMethod,
    atom_context: dict,
    rag_examples: Sequence[dict],
    backend: AgentBackend,
    config: RiskConfig = DEFAULT_CONFIG,
    warnings: AgentWarnings | None = None,
) -> tuple[FeasibilityVector, str]:
    payload = _call(
        backend,
        "assessor_step.md",
        {
            "task": "score_step",
            "method": method.description,
            "category": method.category.value,
            "context": atom_context,
            "value_sets": {d: list(config.value_sets[d]) for d in DIMENSIONS},
            "examples": list(rag_examples),
        },
        "step_scores.json",
    )
    scores = {}
    for d in DIMENSIONS:
        value, snapped = config.snap(d, int(payload["scores"][d]))
        if snapped and warnings:
            warnings.add(
                f"score {d}={payload['scores'][d]} for '{method.description}' "
                f"snapped to {value}"
            )
        scores[d] = value
    rationale = payload["rationale"].strip()
    if not rationale:
        raise MalformedAgentOutput("empty scoring rationale")
    return FeasibilityVector(**scores), rationale


def score_impact(
    scenario: ThreatScenario,
    backend: AgentBackend,
    rag_examples: Sequence[dict] = (),
) -> tuple[ImpactVector, str]:
    payload = _call(
        backend,
        "assessor_impact.md",
        {
            "task": "score_impact",
            "objective": scenario.objective,
            "examples": list(rag_examples),
        },
        "impact.json",
    )
    return ImpactVector.from_dict(payload["impact"]), payload["rationale"]
