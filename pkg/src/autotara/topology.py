"""Connectivity graph, logical-path extraction, path merging and atom construction."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import MixedEndpoints, NoPathFound, PathBudgetExceeded
from .xsam import Channel, Component, Directionality, SystemModel, ThreatScenario

DEFAULT_PATH_BUDGET = 10_000


@dataclass(frozen=True)
class Graph:
    """Directed graph over component ids; arcs carry their channel id."""

    nodes: frozenset[str]
    # node -> ((channel id, neighbor), ...) sorted by channel id for
    # deterministic DFS child ordering.
    adjacency: dict[str, tuple[tuple[str, str], ...]]

    def arcs(self) -> list[tuple[str, str, str]]:
        return [(chan, src, dst) for src, out in self.adjacency.items() for chan, dst in out]


def build_graph(model: SystemModel) -> Graph:
    """Bidirectional channels yield two opposing arcs, directional ones a single arc."""
    adjacency: dict[str, list[tuple[str, str]]] = {c.id: [] for c in model.components}
    for chan in model.channels:
        if chan.directionality in (Directionality.BIDIRECTIONAL, Directionality.A_TO_B):
            adjacency[chan.endpoint_a].append((chan.id, chan.endpoint_b))
        if chan.directionality in (Directionality.BIDIRECTIONAL, Directionality.B_TO_A):
            adjacency[chan.endpoint_b].append((chan.id, chan.endpoint_a))
    return Graph(
        nodes=frozenset(adjacency),
        adjacency={node: tuple(sorted(out)) for node, out in adjacency.items()},
    )


@dataclass(frozen=True)
class LogicalPath:
    nodes: tuple[str, ...]  # entry first, endpoint last
    hops: tuple[str, ...]  # channel ids, len(hops) == len(nodes) - 1


def extract_logical_paths(
    graph: Graph,
    scenario: ThreatScenario,
    budget: int = DEFAULT_PATH_BUDGET,
) -> list[LogicalPath]:
    """All simple paths from any entry point to the endpoint, in lexicographic order.

    Raises NoPathFound when the scenario is disconnected and
    PathBudgetExceeded when enumeration would exceed ``budget`` paths.
    """
    endpoint = scenario.endpoint
    paths: list[LogicalPath] = []

    def dfs(node: str, visited: set[str], nodes: list[str], hops: list[str]) -> None:
        if node == endpoint:
            if len(paths) >= budget:
                raise PathBudgetExceeded(f"more than {budget} paths for scenario '{scenario.id}'")
            paths.append(LogicalPath(tuple(nodes), tuple(hops)))
            return
        for chan, neighbor in graph.adjacency.get(node, ()):
            if neighbor in visited:
                continue
            visited.add(neighbor)
            nodes.append(neighbor)
            hops.append(chan)
            dfs(neighbor, visited, nodes, hops)
            hops.pop()
            nodes.pop()
            visited.remove(neighbor)

    for entry in scenario.entry_points:
        if entry in graph.nodes:
            dfs(entry, {entry}, [entry], [])
    if not paths:
        raise NoPathFound(f"no path from any entry point to '{endpoint}' for scenario '{scenario.id}'")
    paths.sort(key=lambda p: p.nodes)
    return paths


@dataclass(frozen=True)
class PathDag:
    nodes: frozenset[str]
    arcs: frozenset[tuple[str, str, str]]  # (channel id, from, to)
    entry_set: frozenset[str]
    endpoint: str

    def incoming(self, node: str) -> list[tuple[str, str, str]]:
        return sorted(a for a in self.arcs if a[2] == node)

    def outgoing(self, node: str) -> list[tuple[str, str, str]]:
        return sorted(a for a in self.arcs if a[1] == node)


def merge_paths(paths: list[LogicalPath]) -> PathDag:
    """Union the paths, collapsing shared segments into a single dag."""
    if not paths:
        raise NoPathFound("cannot merge an empty path set")
    endpoints = {p.nodes[-1] for p in paths}
    if len(endpoints) > 1:
        raise MixedEndpoints(f"paths disagree on the endpoint: {sorted(endpoints)}")
    arcs: set[tuple[str, str, str]] = set()
    nodes: set[str] = set()
    entries: set[str] = set()
    for path in paths:
        nodes.update(path.nodes)
        entries.add(path.nodes[0])
        for i, chan in enumerate(path.hops):
            arcs.add((chan, path.nodes[i], path.nodes[i + 1]))
    return PathDag(
        nodes=frozenset(nodes),
        arcs=frozenset(arcs),
        entry_set=frozenset(entries),
        endpoint=paths[0].nodes[-1],
    )


@dataclass(frozen=True)
class ChannelRef:
    channel: Channel
    neighbor: str  # component on the far side


@dataclass(frozen=True)
class Atom:
    """One component plus its incident channels, with exactly one exit.

    The endpoint yields a single terminal atom whose ``exit`` is None and
    whose local objective is the scenario objective itself.
    """

    component: Component
    incoming: tuple[ChannelRef, ...]
    exit: ChannelRef | None

    @property
    def id(self) -> str:
        suffix = self.exit.channel.id if self.exit is not None else "objective"
        return f"{self.component.id}:{suffix}"

    @property
    def is_endpoint(self) -> bool:
        return self.exit is None


def construct_atoms(dag: PathDag, model: SystemModel) -> list[Atom]:
    """Split every dag node into one atom per exit channel.

    Exits of a node are its outgoing dag arcs plus any other outward
    channel of the component not used as a dag-incoming channel; nodes on
    a path keep their full channel neighborhood even when a neighbor sits
    on no path. The endpoint contributes exactly one terminal atom.
    """
    if not dag.nodes:
        raise NoPathFound("empty dag")
    graph = build_graph(model)
    atoms: list[Atom] = []
    for node in sorted(dag.nodes):
        component = model.component(node)
        incoming_arcs = dag.incoming(node)
        incoming = tuple(
            ChannelRef(channel=model.channel(chan), neighbor=src) for chan, src, _dst in incoming_arcs
        )
        if node == dag.endpoint:
            atoms.append(Atom(component=component, incoming=incoming, exit=None))
            continue
        incoming_channels = {chan for chan, _src, _dst in incoming_arcs}
        exits: dict[str, str] = {chan: dst for chan, _src, dst in dag.outgoing(node)}
        for chan, neighbor in graph.adjacency.get(node, ()):
            if chan not in incoming_channels and chan not in exits:
                exits[chan] = neighbor
        for chan in sorted(exits):
            atoms.append(
                Atom(
                    component=component,
                    incoming=incoming,
                    exit=ChannelRef(channel=model.channel(chan), neighbor=exits[chan]),
                )
            )
    atoms.sort(key=lambda a: a.id)
    return atoms


def dag_to_dot(dag: PathDag) -> str:
    """DOT export of a merged path dag."""
    lines = ["digraph path_dag {", "  rankdir=LR;"]
    for node in sorted(dag.nodes):
        shape = "doublecircle" if node == dag.endpoint else ("box" if node in dag.entry_set else "ellipse")
        lines.append(f'  "{node}" [shape={shape}];')
    for chan, src, dst in sorted(dag.arcs):
        lines.append(f'  "{src}" -> "{dst}" [label="{chan}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
