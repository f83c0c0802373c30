"""Conversational backends: a pure fixture backend and an HTTP chat backend.

Agent requests are message lists; the final user message carries a JSON
task envelope ({"task": ..., ...payload}) and replies are JSON documents
validated against the schemas in assets/schemas/.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Mapping, Protocol

from .errors import BackendFailure


class AgentBackend(Protocol):
    name: str
    model: str

    def complete(self, messages: list[dict]) -> str: ...


def prompt_hash(messages: list[dict]) -> str:
    canonical = json.dumps(messages, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _task(messages: list[dict]) -> dict:
    """Most recent user message carrying a JSON task envelope.

    Retry nudges appended by the agent layer are plain text and are skipped.
    """
    for message in reversed(messages):
        if message.get("role") != "user":
            continue
        try:
            payload = json.loads(message.get("content", ""))
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict) and "task" in payload:
            return payload
    raise BackendFailure("fixture backend found no JSON task envelope in the prompt")


# Step-feasibility table keyed by description keywords; first match wins.
_STEP_RULES: tuple[tuple[str, dict], ...] = (
    ("jtag", {"ET": 4, "SE": 6, "KoIC": 7, "WoO": 4, "Eq": 7}),
    ("replay", {"ET": 1, "SE": 3, "KoIC": 3, "WoO": 1, "Eq": 4}),
    ("flood", {"ET": 1, "SE": 3, "KoIC": 3, "WoO": 1, "Eq": 4}),
    ("obtain", {"ET": 1, "SE": 0, "KoIC": 3, "WoO": 0, "Eq": 0}),
    ("reverse-engineer", {"ET": 4, "SE": 3, "KoIC": 3, "WoO": 0, "Eq": 0}),
    ("cve", {"ET": 1, "SE": 3, "KoIC": 0, "WoO": 0, "Eq": 0}),
    ("dongle", {"ET": 1, "SE": 3, "KoIC": 3, "WoO": 4, "Eq": 7}),
)
_STEP_DEFAULT = {"ET": 4, "SE": 3, "KoIC": 3, "WoO": 1, "Eq": 4}

_IMPACT_RULES: tuple[tuple[str, dict], ...] = (
    ("availability", {"safety": "Major", "financial": "Moderate", "operational": "Major", "privacy": "Negligible"}),
    ("unlock", {"safety": "Severe", "financial": "Major", "operational": "Moderate", "privacy": "Moderate"}),
    ("privacy", {"safety": "Negligible", "financial": "Moderate", "operational": "Negligible", "privacy": "Major"}),
    ("cosmetic", {"safety": "Negligible", "financial": "Negligible", "operational": "Negligible", "privacy": "Negligible"}),
)
_IMPACT_DEFAULT = {"safety": "Moderate", "financial": "Moderate", "operational": "Moderate", "privacy": "Negligible"}


@dataclass
class FixtureBackend:
    """Deterministic table-driven stand-in for a language model.

    Replies are synthesized by pure rules over the task envelope; the
    ``overrides`` table maps a prompt hash to a canned reply and takes
    precedence, which keeps recorded transcripts replayable.
    """

    name: str = "fixture"
    model: str = "fixture-v1"
    overrides: Mapping[str, str] = field(default_factory=dict)
    calls: int = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        digest = prompt_hash(messages)
        if digest in self.overrides:
            return self.overrides[digest]
        task = _task(messages)
        handler = getattr(self, "_" + task.get("task", "unknown"), None)
        if handler is None:
            raise BackendFailure(f"fixture backend has no handler for task '{task.get('task')}'")
        return json.dumps(handler(task), indent=2, sort_keys=True)

    # -- task handlers -----------------------------------------------------

    def _infer_surfaces(self, task: dict) -> dict:
        atom = task["atom"]
        surfaces: list[dict] = []

        def add(name: str, source: str, attribute: str) -> None:
            entry = {"name": name, "source": source, "attribute": attribute}
            if entry not in surfaces:
                surfaces.append(entry)

        for attr in atom.get("hardware", []):
            if "jtag" in attr.lower():
                add("JTAG interface", "hardware", attr)
            else:
                add(f"{attr.split()[0]} module", "hardware", attr)
        for attr in atom.get("software", []):
            add(f"{attr.split()[0]} service", "software", attr)
        for iface in atom.get("interfaces", []):
            add(f"{iface['kind']} interface", "interface", iface["id"])
        for chan in atom.get("incoming_channels", []) + ([task["atom"]["exit_channel"]] if atom.get("exit_channel") else []):
            medium = chan.get("medium", "bus")
            add(f"{medium.split()[0]} channel", "channel", chan["id"])
        return {"surfaces": surfaces}

    def _derive_objective(self, task: dict) -> dict:
        atom = task["atom"]
        if atom.get("exit_channel") is None:
            return {"objective": task["scenario"]["objective"]}
        exit_chan = atom["exit_channel"]
        name = atom.get("name") or atom["component"]
        neighbor = exit_chan.get("neighbor_name") or exit_chan["neighbor"]
        if "ivi" in name.lower():
            text = f"Make {name} send erroneous lighting commands to the {neighbor} over channel {exit_chan['id']}"
        else:
            text = f"Make {name} send incorrect data to the {neighbor} over channel {exit_chan['id']}"
        return {"objective": text}

    def _construct_subtree(self, task: dict) -> dict:
        atom = task["atom"]
        name = atom.get("name") or atom["component"]
        nodes: list[dict] = []
        for attr in atom.get("hardware", []):
            if "jtag" in attr.lower():
                nodes.append(
                    {
                        "method": {
                            "description": f"Access the {name} via JTAG to corrupt its firmware",
                            "category": "interface_access",
                        }
                    }
                )
        for attr in atom.get("software", []):
            if "linux" in attr.lower():
                nodes.append(
                    {
                        "kind": "AND",
                        "children": [
                            {"method": {"description": f"Obtain the {attr} firmware image from the {name}", "category": "local_exploit"}},
                            {"method": {"description": "Reverse-engineer the firmware to identify a kernel vulnerability", "category": "local_exploit"}},
                            {"method": {"description": f"Exploit CVE-2023-0179 in {attr} to gain control of the {name}", "category": "local_exploit"}},
                        ],
                    }
                )
        for iface in atom.get("interfaces", []):
            if "obd" in iface["kind"].lower():
                nodes.append(
                    {
                        "method": {
                            "description": f"Connect a rogue diagnostic dongle to the {iface['kind']} port and inject crafted frames",
                            "category": "interface_access",
                        }
                    }
                )
        for chan in atom.get("incoming_channels", []):
            medium = chan.get("medium", "bus").split()[0]
            nodes.append(
                {
                    "method": {
                        "description": f"Replay malicious {medium} bus signals over channel {chan['id']} to the {name}",
                        "category": "channel_propagation",
                        "channel": chan["id"],
                    }
                }
            )
        if not nodes and atom.get("exit_channel"):
            chan = atom["exit_channel"]
            nodes.append(
                {
                    "method": {
                        "description": f"Inject malicious traffic into channel {chan['id']} toward the {chan.get('neighbor_name') or chan['neighbor']}",
                        "category": "local_exploit",
                    }
                }
            )
        if atom.get("exit_channel") is None and atom.get("incoming_channels"):
            # endpoint atom: the attack lands over its incoming channels
            chan = atom["incoming_channels"][0]
            medium = chan.get("medium", "bus").split()[0]
            nodes = [
                {
                    "method": {
                        "description": f"Flood the {name} with malicious {medium} frames over channel {chan['id']}",
                        "category": "channel_propagation",
                        "channel": chan["id"],
                    }
                }
            ]
        if len(nodes) == 1:
            root = nodes[0]
        else:
            root = {"kind": "OR", "children": nodes}
        return {"objective": task["objective"], "root": root}

    def _validate_coherence(self, task: dict) -> dict:
        if "incoherent" in task.get("method_text", "").lower():
            return {"verdict": "regenerate", "reason": "junction marked incoherent"}
        return {"verdict": "coherent", "reason": "upstream objective feeds the junction method"}

    def _score_step(self, task: dict) -> dict:
        description = task.get("method", "")
        for example in task.get("examples", []):
            if example.get("method") == description and example.get("scores"):
                return {"scores": example["scores"], "rationale": "matched an expert-scored identical method"}
        lowered = description.lower()
        for keyword, scores in _STEP_RULES:
            if keyword in lowered:
                return {"scores": dict(scores), "rationale": f"rated by the '{keyword}' profile"}
        return {"scores": dict(_STEP_DEFAULT), "rationale": "default profile"}

    def _score_impact(self, task: dict) -> dict:
        objective = task.get("objective", "").lower()
        for keyword, impact in _IMPACT_RULES:
            if keyword in objective:
                return {"impact": dict(impact), "rationale": f"matched the '{keyword}' scenario profile"}
        return {"impact": dict(_IMPACT_DEFAULT), "rationale": "default scenario profile"}


@dataclass
class HttpChatBackend:
    """OpenAI-style chat-completion endpoint; credentials come from the environment."""

    base_url: str
    model: str
    name: str = "http"
    api_key_env: str = "AUTOTARA_API_KEY"
    timeout: float = 60.0
    calls: int = 0

    def __post_init__(self):
        self._lock = threading.Lock()

    def complete(self, messages: list[dict]) -> str:
        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise BackendFailure(f"environment variable {self.api_key_env} is not set")
        with self._lock:
            self.calls += 1
        try:
            response = requests.post(
                self.base_url.rstrip("/") + "/chat/completions",
                headers={"Authorization": f"Bearer {key}"},
                json={"model": self.model, "messages": messages, "temperature": 0},
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except Exception as exc:
            raise BackendFailure(f"chat completion failed: {exc}") from exc
