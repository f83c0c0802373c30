"""Attack-tree data model: assembly, constraint filtering, editing, portable documents."""
from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterator, Mapping, Union

from .errors import EmptyTree, InvariantBreach, MissingChannelMethod, SchemaViolation, UnknownNode
from .risk import DIMENSIONS, FeasibilityVector
from .topology import Atom, PathDag
from .xsam import ConstraintRule

__all__ = [
    "AttackMethod",
    "AttackObjective",
    "AttackTree",
    "ConstraintRule",
    "LogicKind",
    "LogicNode",
    "MethodCategory",
    "SubTree",
    "assemble",
    "edit_node",
    "filter_constraints",
    "from_portable",
    "to_portable",
    "tree_to_dot",
]


class MethodCategory(Enum):
    CHANNEL_PROPAGATION = "channel_propagation"
    LOCAL_EXPLOIT = "local_exploit"
    INTERFACE_ACCESS = "interface_access"
    OTHER = "other"


class LogicKind(Enum):
    AND = "AND"
    OR = "OR"


@dataclass(frozen=True)
class AttackMethod:
    """Single-operation leaf; may carry an upstream prerequisite objective."""

    id: str
    description: str
    category: MethodCategory
    related_channel: str | None = None
    step_feasibility: FeasibilityVector | None = None
    rationale: str | None = None
    child: "AttackObjective | None" = None

    def __post_init__(self):
        if (self.category is MethodCategory.CHANNEL_PROPAGATION) != (self.related_channel is not None):
            raise InvariantBreach(
                f"method '{self.id}': related_channel must be set iff category is channel_propagation"
            )


@dataclass(frozen=True)
class LogicNode:
    id: str
    kind: LogicKind
    children: tuple["TreeNode", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise InvariantBreach(f"logic node '{self.id}' has fewer than 2 children")


@dataclass(frozen=True)
class AttackObjective:
    id: str
    text: str
    component: str
    child: "TreeNode"


TreeNode = Union[AttackMethod, LogicNode, AttackObjective]


@dataclass(frozen=True)
class AttackTree:
    scenario_id: str
    objective: str
    root: AttackObjective


@dataclass(frozen=True)
class SubTree:
    """Sub-tree for one atom: its local objective over method leaves."""

    atom_id: str
    objective: AttackObjective

    def methods(self) -> list[AttackMethod]:
        return [n for n in iter_nodes(self.objective) if isinstance(n, AttackMethod)]

    def entry_methods(self, atom: Atom) -> list[AttackMethod]:
        incoming = {ref.channel.id for ref in atom.incoming}
        return [
            m
            for m in self.methods()
            if m.category is MethodCategory.CHANNEL_PROPAGATION and m.related_channel in incoming
        ]


def iter_nodes(node: TreeNode) -> Iterator[TreeNode]:
    """Depth-first preorder traversal."""
    yield node
    if isinstance(node, AttackObjective):
        yield from iter_nodes(node.child)
    elif isinstance(node, LogicNode):
        for child in node.children:
            yield from iter_nodes(child)
    elif node.child is not None:
        yield from iter_nodes(node.child)


def find_node(tree: AttackTree, node_id: str) -> TreeNode:
    for node in iter_nodes(tree.root):
        if node.id == node_id:
            return node
    raise UnknownNode(f"no node '{node_id}' in tree for scenario '{tree.scenario_id}'")


# ---------------------------------------------------------------------------
# Constraint filtering

_TOKEN = re.compile(r"[a-z0-9]+")


def default_matcher(rule: ConstraintRule, method: AttackMethod) -> bool:
    """Case-insensitive substring/category match with crude token stemming."""
    pattern = rule.pattern.lower().strip()
    description = method.description.lower()
    if not pattern:
        return False
    normalized = pattern.replace(" ", "_")
    if normalized in {c.value for c in MethodCategory}:
        # a pattern naming a category is a category rule, not a text rule
        return method.category.value == normalized
    if pattern in description:
        return True
    desc_tokens = _TOKEN.findall(description)
    for token in _TOKEN.findall(pattern):
        if len(token) < 6:
            continue
        stem = token[:6]
        if any(d[:6] == stem for d in desc_tokens):
            return True
    return False


Matcher = Callable[[ConstraintRule, AttackMethod], bool]


def filter_constraints(
    tree: AttackTree,
    constraints: tuple[ConstraintRule, ...],
    matcher: Matcher = default_matcher,
) -> tuple[AttackTree, list[str]]:
    """Remove matching methods and prune bottom-up.

    An OR left with one child collapses to that child; an AND losing any
    child loses the whole branch. Returns the filtered tree plus removed
    method ids. Raises EmptyTree when nothing reaches the root.
    """
    if not constraints:
        return tree, []
    removed: list[str] = []

    def prune(node: TreeNode) -> TreeNode | None:
        if isinstance(node, AttackMethod):
            if any(matcher(rule, node) for rule in constraints):
                removed.append(node.id)
                return None
            if node.child is not None:
                child = prune(node.child)
                if child is None:
                    # prerequisite compromise is impossible, so the method is too
                    removed.append(node.id)
                    return None
                return replace(node, child=child)
            return node
        if isinstance(node, LogicNode):
            kept = [c for c in (prune(c) for c in node.children) if c is not None]
            if node.kind is LogicKind.AND and len(kept) < len(node.children):
                return None
            if not kept:
                return None
            if len(kept) == 1:
                return kept[0]
            return replace(node, children=tuple(kept))
        child = prune(node.child)
        if child is None:
            return None
        return replace(node, child=child)

    root = prune(tree.root)
    if root is None:
        raise EmptyTree(f"constraints removed every path to the root for scenario '{tree.scenario_id}'")
    if not isinstance(root, AttackObjective):
        # the root objective itself is never a method, so this cannot trigger
        raise EmptyTree("root collapsed to a non-objective node")
    return replace(tree, root=root), removed


# ---------------------------------------------------------------------------
# Assembly

@dataclass(frozen=True)
class RegenerationRequest:
    """Incoherent junction flagged during assembly."""

    upstream_atom: str
    downstream_atom: str
    channel: str
    upstream_objective: str
    downstream_objective: str
    method_text: str


CoherenceCheck = Callable[[SubTree, AttackMethod], bool]


def assemble(
    subtrees: list[tuple[Atom, SubTree]],
    dag: PathDag,
    constraints: tuple[ConstraintRule, ...] = (),
    coherence: CoherenceCheck | None = None,
    scenario_id: str = "",
    matcher: Matcher = default_matcher,
) -> tuple[AttackTree, list[RegenerationRequest]]:
    """Attach each upstream sub-tree under the downstream propagation method.

    For every dag arc (channel c, u -> v), the sub-tree of u's atom with
    exit channel c becomes the child of the method in v's sub-tree whose
    related_channel is c. The endpoint objective becomes the root. After
    attachment, constraint filtering and pruning run, then node ids are
    relabeled in preorder.
    """
    by_exit: dict[str, tuple[Atom, SubTree]] = {}
    endpoint_pair: tuple[Atom, SubTree] | None = None
    for atom, subtree in subtrees:
        if atom.is_endpoint:
            endpoint_pair = (atom, subtree)
        else:
            by_exit[atom.exit.channel.id] = (atom, subtree)
    if endpoint_pair is None:
        raise MissingChannelMethod("<endpoint>", "<none>")

    requests: list[RegenerationRequest] = []

    def attach(atom: Atom, subtree: SubTree, chain: frozenset[str]) -> AttackObjective:
        incoming_by_channel = {
            chan: src for chan, src, _dst in dag.incoming(atom.component.id)
        }

        def rec(node: TreeNode) -> TreeNode:
            if isinstance(node, AttackMethod):
                chan = node.related_channel
                if chan is not None and chan in incoming_by_channel:
                    upstream = by_exit.get(chan)
                    if upstream is None:
                        raise MissingChannelMethod(atom.id, chan)
                    up_atom, up_subtree = upstream
                    if up_atom.component.id in chain:
                        # merged paths may close a directed cycle; never re-attach
                        return node
                    if coherence is not None and not coherence(up_subtree, node):
                        requests.append(
                            RegenerationRequest(
                                upstream_atom=up_atom.id,
                                downstream_atom=atom.id,
                                channel=chan,
                                upstream_objective=up_subtree.objective.text,
                                downstream_objective=subtree.objective.text,
                                method_text=node.description,
                            )
                        )
                    return replace(
                        node,
                        child=attach(up_atom, up_subtree, chain | {atom.component.id}),
                    )
                return node
            if isinstance(node, LogicNode):
                return replace(node, children=tuple(rec(c) for c in node.children))
            return replace(node, child=rec(node.child))

        # every incoming dag channel must have a propagation method to hook into
        present = {
            m.related_channel
            for m in subtree.methods()
            if m.category is MethodCategory.CHANNEL_PROPAGATION
        }
        for chan in incoming_by_channel:
            if chan not in present:
                raise MissingChannelMethod(atom.id, chan)
        return rec(subtree.objective)  # type: ignore[return-value]

    endpoint_atom, endpoint_subtree = endpoint_pair
    root = attach(endpoint_atom, endpoint_subtree, frozenset())
    tree = AttackTree(scenario_id=scenario_id, objective=root.text, root=root)
    if constraints:
        tree, _removed = filter_constraints(tree, constraints, matcher)
    return relabel(tree), requests


def relabel(tree: AttackTree) -> AttackTree:
    """Assign AO-n / AM-n / L-n ids in preorder, deterministically."""
    counters = {"AO": 0, "AM": 0, "L": 0}

    def rec(node: TreeNode) -> TreeNode:
        if isinstance(node, AttackObjective):
            counters["AO"] += 1
            return replace(node, id=f"AO-{counters['AO']}", child=rec(node.child))
        if isinstance(node, AttackMethod):
            counters["AM"] += 1
            node_id = f"AM-{counters['AM']}"
            child = rec(node.child) if node.child is not None else None
            return replace(node, id=node_id, child=child)
        counters["L"] += 1
        node_id = f"L-{counters['L']}"
        return LogicNode(id=node_id, kind=node.kind, children=tuple(rec(c) for c in node.children))

    return replace(tree, root=rec(tree.root))


# ---------------------------------------------------------------------------
# Editing

@dataclass(frozen=True)
class EditResult:
    tree: AttackTree
    warnings: tuple[str, ...] = ()


def edit_node(tree: AttackTree, node_id: str, edit: Mapping) -> EditResult:
    """Apply one edit and return a new tree; the original is untouched.

    Supported ops: replace_method, set_logic_kind, remove_node,
    set_step_feasibility. A logic node left with a single child after
    remove_node auto-collapses, reported as a warning.
    """
    find_node(tree, node_id)  # raises UnknownNode
    op = edit.get("op")
    warnings: list[str] = []

    def rec(node: TreeNode) -> TreeNode | None:
        if node.id == node_id:
            if op == "remove_node":
                return None
            if op == "set_step_feasibility":
                if not isinstance(node, AttackMethod):
                    raise InvariantBreach(f"node '{node_id}' is not a method")
                vector = FeasibilityVector.from_dict(edit["scores"])
                return replace(node, step_feasibility=vector, rationale=edit.get("rationale", node.rationale))
            if op == "set_logic_kind":
                if not isinstance(node, LogicNode):
                    raise InvariantBreach(f"node '{node_id}' is not a logic node")
                return replace(node, kind=LogicKind(edit["kind"]))
            if op == "replace_method":
                if not isinstance(node, AttackMethod):
                    raise InvariantBreach(f"node '{node_id}' is not a method")
                category = MethodCategory(edit.get("category", node.category.value))
                related = edit.get("related_channel", node.related_channel)
                if category is not MethodCategory.CHANNEL_PROPAGATION:
                    related = None
                return replace(
                    node,
                    description=edit.get("description", node.description),
                    category=category,
                    related_channel=related,
                )
            raise InvariantBreach(f"unknown edit op '{op}'")
        if isinstance(node, AttackObjective):
            child = rec(node.child)
            if child is None:
                raise InvariantBreach(f"removing '{node_id}' would empty objective '{node.id}'")
            return replace(node, child=child)
        if isinstance(node, LogicNode):
            kept = [c for c in (rec(c) for c in node.children) if c is not None]
            if len(kept) == len(node.children):
                return replace(node, children=tuple(kept))
            if not kept:
                raise InvariantBreach(f"removing '{node_id}' would empty logic node '{node.id}'")
            if len(kept) == 1:
                warnings.append(f"logic node '{node.id}' collapsed to its remaining child")
                return kept[0]
            return replace(node, children=tuple(kept))
        if node.child is not None:
            child = rec(node.child)
            if child is None:
                raise InvariantBreach(f"removing '{node_id}' would orphan method '{node.id}'")
            return replace(node, child=child)
        return node

    root = rec(tree.root)
    if root is None or not isinstance(root, AttackObjective):
        raise InvariantBreach("edit would remove the tree root")
    return EditResult(tree=replace(tree, root=root), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Portable documents (XML, shared namespace with the system-model format)

def _vector_element(tag: str, vector: FeasibilityVector) -> ET.Element:
    elem = ET.Element(tag)
    for d in DIMENSIONS:
        elem.set(d, str(getattr(vector, d)))
    return elem


def node_to_element(node: TreeNode, cumulative: Mapping[str, FeasibilityVector] | None = None) -> ET.Element:
    if isinstance(node, AttackObjective):
        elem = ET.Element("Objective", id=node.id, component=node.component, text=node.text)
        elem.append(node_to_element(node.child, cumulative))
    elif isinstance(node, LogicNode):
        elem = ET.Element("Logic", id=node.id, kind=node.kind.value)
        for child in node.children:
            elem.append(node_to_element(child, cumulative))
    else:
        elem = ET.Element("Method", id=node.id, category=node.category.value, description=node.description)
        if node.related_channel is not None:
            elem.set("channel", node.related_channel)
        if node.step_feasibility is not None:
            elem.append(_vector_element("StepFeasibility", node.step_feasibility))
        if node.rationale:
            rat = ET.SubElement(elem, "Rationale")
            rat.text = node.rationale
        if node.child is not None:
            elem.append(node_to_element(node.child, cumulative))
    if cumulative is not None and node.id in cumulative:
        elem.append(_vector_element("Cumulative", cumulative[node.id]))
    return elem


def to_portable(tree: AttackTree, cumulative: Mapping[str, FeasibilityVector] | None = None) -> bytes:
    root = ET.Element("AttackTree", scenario=tree.scenario_id, objective=tree.objective)
    root.append(node_to_element(tree.root, cumulative))
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


def _vector_from_element(elem: ET.Element, path: str) -> FeasibilityVector:
    try:
        return FeasibilityVector(**{d: int(elem.get(d)) for d in DIMENSIONS})
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"bad feasibility vector: {exc}", path)


def node_from_element(elem: ET.Element, path: str = "") -> TreeNode:
    path = f"{path}/{elem.tag}[{elem.get('id', '?')}]"
    if elem.tag == "Objective":
        children = [c for c in elem if c.tag in ("Objective", "Logic", "Method")]
        if len(children) != 1:
            raise SchemaViolation("Objective must have exactly one child node", path)
        return AttackObjective(
            id=elem.get("id", ""),
            text=elem.get("text", ""),
            component=elem.get("component", ""),
            child=node_from_element(children[0], path),
        )
    if elem.tag == "Logic":
        kind_raw = elem.get("kind", "")
        try:
            kind = LogicKind(kind_raw)
        except ValueError:
            raise SchemaViolation(f"unknown logic kind '{kind_raw}'", path)
        children = tuple(
            node_from_element(c, path) for c in elem if c.tag in ("Objective", "Logic", "Method")
        )
        try:
            return LogicNode(id=elem.get("id", ""), kind=kind, children=children)
        except InvariantBreach as exc:
            raise SchemaViolation(str(exc), path)
    if elem.tag == "Method":
        category_raw = elem.get("category", "")
        try:
            category = MethodCategory(category_raw)
        except ValueError:
            raise SchemaViolation(f"unknown method category '{category_raw}'", path)
        step = None
        rationale = None
        child = None
        for sub in elem:
            if sub.tag == "StepFeasibility":
                step = _vector_from_element(sub, path)
            elif sub.tag == "Rationale":
                rationale = (sub.text or "").strip()
            elif sub.tag == "Objective":
                child_node = node_from_element(sub, path)
                assert isinstance(child_node, AttackObjective)
                child = child_node
            elif sub.tag == "Cumulative":
                continue
            else:
                raise SchemaViolation(f"unknown element '{sub.tag}'", path)
        try:
            return AttackMethod(
                id=elem.get("id", ""),
                description=elem.get("description", ""),
                category=category,
                related_channel=elem.get("channel"),
                step_feasibility=step,
                rationale=rationale,
                child=child,
            )
        except InvariantBreach as exc:
            raise SchemaViolation(str(exc), path)
    raise SchemaViolation(f"unknown element '{elem.tag}'", path)


def from_portable(document: bytes) -> AttackTree:
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise SchemaViolation(f"not well-formed XML: {exc}", "/")
    if root.tag != "AttackTree":
        raise SchemaViolation(f"unknown root element '{root.tag}'", "/")
    children = list(root)
    if len(children) != 1 or children[0].tag != "Objective":
        raise SchemaViolation("AttackTree must wrap exactly one Objective", "/AttackTree")
    objective = node_from_element(children[0], "/AttackTree")
    assert isinstance(objective, AttackObjective)
    return AttackTree(
        scenario_id=root.get("scenario", ""),
        objective=root.get("objective", objective.text),
        root=objective,
    )


def cumulative_from_portable(document: bytes) -> dict[str, FeasibilityVector]:
    """Recover embedded Cumulative_F annotations keyed by node id."""
    root = ET.fromstring(document)
    out: dict[str, FeasibilityVector] = {}
    for elem in root.iter():
        for sub in elem:
            if sub.tag == "Cumulative" and elem.get("id"):
                out[elem.get("id")] = _vector_from_element(sub, elem.get("id", ""))
    return out


# ---------------------------------------------------------------------------
# DOT export

def tree_to_dot(
    tree: AttackTree,
    highlight: frozenset[str] = frozenset(),
    cumulative: Mapping[str, FeasibilityVector] | None = None,
) -> str:
    """DOT export; nodes on the most-feasible path carry the red highlight flag."""
    lines = ["digraph attack_tree {", "  node [fontsize=10];"]

    def label(node: TreeNode) -> str:
        if isinstance(node, AttackObjective):
            text = f"{node.id}\\n{node.text}"
        elif isinstance(node, LogicNode):
            text = node.kind.value
        else:
            text = f"{node.id}\\n{node.description}"
            if node.step_feasibility is not None:
                text += f"\\nStep_F={node.step_feasibility.overall()}"
        if cumulative is not None and node.id in cumulative:
            text += f"\\nCumulative_F={cumulative[node.id].overall()}"
        return text.replace('"', "'")

    def rec(node: TreeNode) -> None:
        shape = "box" if isinstance(node, AttackMethod) else ("diamond" if isinstance(node, LogicNode) else "ellipse")
        color = ' color=red penwidth=2' if node.id in highlight else ""
        lines.append(f'  "{node.id}" [shape={shape} label="{label(node)}"{color}];')
        children: tuple[TreeNode, ...] = ()
        if isinstance(node, AttackObjective):
            children = (node.child,)
        elif isinstance(node, LogicNode):
            children = node.children
        elif node.child is not None:
            children = (node.child,)
        for child in children:
            style = " [color=red penwidth=2]" if node.id in highlight and child.id in highlight else ""
            lines.append(f'  "{node.id}" -> "{child.id}"{style};')
            rec(child)

    rec(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
