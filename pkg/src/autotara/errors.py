"""Error types shared across the engine."""
from __future__ import annotations


class TaraError(Exception):
    """Base class for all engine errors."""


class MalformedXml(TaraError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line

    def __str__(self) -> str:
        base = super().__str__()
        return f"{base} (line {self.line})" if self.line else base


class SchemaViolation(TaraError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        super().__init__(message)
        self.path = path
        self.line = line

    def __str__(self) -> str:
        base = super().__str__()
        if self.path:
            base = f"{base} at {self.path}"
        if self.line:
            base = f"{base} (line {self.line})"
        return base


class NoPathFound(TaraError):
    """No route from any entry point to the scenario endpoint."""


class PathBudgetExceeded(TaraError):
    """Simple-path enumeration hit the configured cap."""


class MixedEndpoints(TaraError):
    """Paths handed to merge do not agree on the endpoint."""


class MissingChannelMethod(TaraError):
    """A sub-tree lacks a propagation method for an incoming channel."""

    def __init__(self, atom_id: str, channel_id: str):
        super().__init__(f"sub-tree for {atom_id} has no method for channel {channel_id}")
        self.atom_id = atom_id
        self.channel_id = channel_id


class EmptyTree(TaraError):
    """Constraint filtering removed every path to the root."""


class UnknownNode(TaraError):
    """Edit targeted a node id that does not exist in the tree."""


class InvariantBreach(TaraError):
    """An edit would leave the tree structurally invalid."""


class MissingStepFeasibility(TaraError):
    def __init__(self, node_id: str):
        super().__init__(f"method {node_id} carries no step-feasibility vector")
        self.node_id = node_id


class BackendFailure(TaraError):
    """Transport-level failure talking to the agent backend."""


class MalformedAgentOutput(TaraError):
    """Backend reply failed schema validation after all retries."""


class InvalidAnnotation(TaraError):
    """Knowledge annotation violates its invariants."""


class UnknownFormat(TaraError):
    """Unsupported report rendering format."""
