"""OpenXSAM++ system-model documents: types, parsing, validation, serialization.

The schema is documented in docs/openxsam.md. Element names: Model,
Component, Hardware, Software, Interface, Channel, ThreatScenario,
EntryPoint, Endpoint, Constraint, plus the knowledge elements Sub-Tree,
Step-Feasibility and Impact carried inside Annotation. Unknown
vendor-specific XML attributes are preserved as opaque extensions and
round-tripped byte-exactly.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from .errors import MalformedXml, SchemaViolation
from .risk import DIMENSIONS, FeasibilityVector, ImpactVector

_LINE_KEY = "{urn:autotara-internal}line"


class Directionality(Enum):
    BIDIRECTIONAL = "bidirectional"
    A_TO_B = "a_to_b"
    B_TO_A = "b_to_a"


class Provenance(Enum):
    EXPERT_CURATED = "expert_curated"
    ENTERPRISE_CORRECTION = "enterprise_correction"


Extensions = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Interface:
    id: str
    kind: str
    description: str = ""


@dataclass(frozen=True)
class KnowledgeAnnotation:
    """Expert or enterprise annotation attached to a component.

    ``sub_tree`` holds a portable attack-subtree document (XML text);
    ``step_feasibility`` maps method ids occurring in that document to
    their expert vectors.
    """

    sub_tree: str
    step_feasibility: tuple[tuple[str, FeasibilityVector], ...] = ()
    impact: ImpactVector | None = None
    provenance: Provenance = Provenance.EXPERT_CURATED
    timestamp: str = ""


@dataclass(frozen=True)
class Component:
    id: str
    name: str = ""
    hardware: tuple[str, ...] = ()
    software: tuple[str, ...] = ()
    interfaces: tuple[Interface, ...] = ()
    annotation: KnowledgeAnnotation | None = None
    extensions: Extensions = ()


@dataclass(frozen=True)
class Channel:
    id: str
    medium: str
    endpoint_a: str
    endpoint_b: str
    directionality: Directionality = Directionality.BIDIRECTIONAL
    extensions: Extensions = ()


@dataclass(frozen=True)
class ConstraintRule:
    """Free-text exclusion pattern over attack-method descriptions/categories."""

    pattern: str


@dataclass(frozen=True)
class ThreatScenario:
    id: str
    objective: str
    endpoint: str
    entry_points: tuple[str, ...]
    constraints: tuple[ConstraintRule, ...] = ()


@dataclass(frozen=True)
class SystemModel:
    model_id: str
    name: str = ""
    components: tuple[Component, ...] = ()
    channels: tuple[Channel, ...] = ()
    scenarios: tuple[ThreatScenario, ...] = ()
    extensions: Extensions = ()

    def component(self, component_id: str) -> Component:
        for comp in self.components:
            if comp.id == component_id:
                return comp
        raise KeyError(component_id)

    def channel(self, channel_id: str) -> Channel:
        for chan in self.channels:
            if chan.id == channel_id:
                return chan
        raise KeyError(channel_id)

    def scenario(self, scenario_id: str) -> ThreatScenario:
        for scen in self.scenarios:
            if scen.id == scenario_id:
                return scen
        raise KeyError(scenario_id)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    subject: str  # offending id
    message: str


# ---------------------------------------------------------------------------
# Parsing

def _element_lines(data: bytes) -> list[int]:
    """Start-tag line numbers in document order, via a second expat pass."""
    import xml.parsers.expat as expat

    parser = expat.ParserCreate()
    lines: list[int] = []
    parser.StartElementHandler = lambda name, attrs: lines.append(parser.CurrentLineNumber)
    parser.Parse(data, True)
    return lines


def _line(elem: ET.Element) -> int | None:
    raw = elem.get(_LINE_KEY)
    return int(raw) if raw else None


_KNOWN_ATTRS = {
    "Model": {"id", "name"},
    "Component": {"id", "name"},
    "Channel": {"id", "medium", "from", "to", "direction"},
    "Interface": {"id", "kind"},
    "ThreatScenario": {"id", "objective"},
    "Endpoint": {"ref"},
    "EntryPoint": {"ref"},
    "Annotation": {"provenance", "timestamp"},
    "Step-Feasibility": {"method", *DIMENSIONS},
    "Impact": {"safety", "financial", "operational", "privacy"},
}


def _require(elem: ET.Element, attr: str, path: str) -> str:
    value = elem.get(attr)
    if value is None:
        raise SchemaViolation(f"missing required attribute '{attr}'", path, _line(elem))
    return value


def _extensions(elem: ET.Element) -> Extensions:
    known = _KNOWN_ATTRS.get(elem.tag, set())
    return tuple(
        (k, v) for k, v in elem.attrib.items() if k not in known and k != _LINE_KEY
    )


def parse(data: bytes) -> SystemModel:
    """Parse an OpenXSAM++ document. Raises MalformedXml or SchemaViolation."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise MalformedXml(f"not well-formed XML: {exc}", line) from exc
    try:
        for elem, line in zip(root.iter(), _element_lines(data)):
            elem.set(_LINE_KEY, str(line))
    except Exception:  # line info is best-effort only
        pass
    if root.tag != "Model":
        raise SchemaViolation(f"unknown root element '{root.tag}'", "/", _line(root))

    components: list[Component] = []
    channels: list[Channel] = []
    scenarios: list[ThreatScenario] = []
    for child in root:
        path = f"/Model/{child.tag}"
        if child.tag == "Component":
            components.append(_parse_component(child, path))
        elif child.tag == "Channel":
            channels.append(_parse_channel(child, path))
        elif child.tag == "ThreatScenario":
            scenarios.append(_parse_scenario(child, path))
        else:
            raise SchemaViolation(f"unknown element '{child.tag}'", path, _line(child))

    model = SystemModel(
        model_id=_require(root, "id", "/Model"),
        name=root.get("name", ""),
        components=tuple(components),
        channels=tuple(channels),
        scenarios=tuple(scenarios),
        extensions=_extensions(root),
    )
    _check_references(model, root)
    return model


def _parse_component(elem: ET.Element, path: str) -> Component:
    comp_id = _require(elem, "id", path)
    path = f"{path}[{comp_id}]"
    hardware: list[str] = []
    software: list[str] = []
    interfaces: list[Interface] = []
    annotation = None
    for child in elem:
        if child.tag == "Hardware":
            hardware.append((child.text or "").strip())
        elif child.tag == "Software":
            software.append((child.text or "").strip())
        elif child.tag == "Interface":
            interfaces.append(
                Interface(
                    id=_require(child, "id", f"{path}/Interface"),
                    kind=child.get("kind", ""),
                    description=(child.text or "").strip(),
                )
            )
        elif child.tag == "Annotation":
            annotation = annotation_from_element(child, f"{path}/Annotation")
        else:
            raise SchemaViolation(f"unknown element '{child.tag}'", f"{path}/{child.tag}", _line(child))
    return Component(
        id=comp_id,
        name=elem.get("name", ""),
        hardware=tuple(hardware),
        software=tuple(software),
        interfaces=tuple(interfaces),
        annotation=annotation,
        extensions=_extensions(elem),
    )


def _parse_channel(elem: ET.Element, path: str) -> Channel:
    chan_id = _require(elem, "id", path)
    direction = elem.get("direction", "bidirectional")
    try:
        directionality = Directionality(direction)
    except ValueError:
        raise SchemaViolation(f"unknown direction '{direction}'", f"{path}[{chan_id}]", _line(elem))
    return Channel(
        id=chan_id,
        medium=elem.get("medium", ""),
        endpoint_a=_require(elem, "from", f"{path}[{chan_id}]"),
        endpoint_b=_require(elem, "to", f"{path}[{chan_id}]"),
        directionality=directionality,
        extensions=_extensions(elem),
    )


def _parse_scenario(elem: ET.Element, path: str) -> ThreatScenario:
    scen_id = _require(elem, "id", path)
    path = f"{path}[{scen_id}]"
    endpoint = None
    entry_points: list[str] = []
    constraints: list[ConstraintRule] = []
    for child in elem:
        if child.tag == "Endpoint":
            if endpoint is not None:
                raise SchemaViolation("more than one Endpoint", path, _line(child))
            endpoint = _require(child, "ref", f"{path}/Endpoint")
        elif child.tag == "EntryPoint":
            entry_points.append(_require(child, "ref", f"{path}/EntryPoint"))
        elif child.tag == "Constraint":
            constraints.append(ConstraintRule((child.text or "").strip()))
        else:
            raise SchemaViolation(f"unknown element '{child.tag}'", f"{path}/{child.tag}", _line(child))
    if endpoint is None:
        raise SchemaViolation("missing Endpoint", path, _line(elem))
    if not entry_points:
        raise SchemaViolation("missing EntryPoint", path, _line(elem))
    return ThreatScenario(
        id=scen_id,
        objective=_require(elem, "objective", path),
        endpoint=endpoint,
        entry_points=tuple(entry_points),
        constraints=tuple(constraints),
    )


def annotation_from_element(elem: ET.Element, path: str) -> KnowledgeAnnotation:
    sub_tree = ""
    steps: list[tuple[str, FeasibilityVector]] = []
    impact = None
    for child in elem:
        if child.tag == "Sub-Tree":
            inner = list(child)
            if len(inner) != 1:
                raise SchemaViolation("Sub-Tree must wrap exactly one element", f"{path}/Sub-Tree", _line(child))
            sub_tree = ET.tostring(_canonical(_strip_lines(inner[0])), encoding="unicode")
        elif child.tag == "Step-Feasibility":
            method = _require(child, "method", f"{path}/Step-Feasibility")
            try:
                vector = FeasibilityVector(**{d: int(_require(child, d, path)) for d in DIMENSIONS})
            except ValueError as exc:
                raise SchemaViolation(f"non-integer score: {exc}", f"{path}/Step-Feasibility", _line(child))
            steps.append((method, vector))
        elif child.tag == "Impact":
            try:
                impact = ImpactVector.from_dict(
                    {d: _require(child, d, f"{path}/Impact") for d in ("safety", "financial", "operational", "privacy")}
                )
            except ValueError as exc:
                raise SchemaViolation(f"unknown impact severity: {exc}", f"{path}/Impact", _line(child))
        else:
            raise SchemaViolation(f"unknown element '{child.tag}'", f"{path}/{child.tag}", _line(child))
    provenance = elem.get("provenance", "expert_curated")
    try:
        prov = Provenance(provenance)
    except ValueError:
        raise SchemaViolation(f"unknown provenance '{provenance}'", path, _line(elem))
    return KnowledgeAnnotation(
        sub_tree=sub_tree,
        step_feasibility=tuple(steps),
        impact=impact,
        provenance=prov,
        timestamp=elem.get("timestamp", ""),
    )


def _canonical(elem: ET.Element) -> ET.Element:
    """Drop whitespace-only text/tails so embedded documents compare stably."""
    if elem.text is not None and not elem.text.strip():
        elem.text = None
    elem.tail = None
    for child in elem:
        _canonical(child)
    return elem


def _strip_lines(elem: ET.Element) -> ET.Element:
    elem.attrib.pop(_LINE_KEY, None)
    for child in elem:
        _strip_lines(child)
    return elem


def _check_references(model: SystemModel, root: ET.Element) -> None:
    component_ids = {c.id for c in model.components}
    for chan in model.channels:
        for ref in (chan.endpoint_a, chan.endpoint_b):
            if ref not in component_ids:
                raise SchemaViolation(
                    f"channel '{chan.id}' references unknown component '{ref}'",
                    f"/Model/Channel[{chan.id}]",
                )
    for scen in model.scenarios:
        for ref in (scen.endpoint, *scen.entry_points):
            if ref not in component_ids:
                raise SchemaViolation(
                    f"scenario '{scen.id}' references unknown component '{ref}'",
                    f"/Model/ThreatScenario[{scen.id}]",
                )


# ---------------------------------------------------------------------------
# Serialization

def _set_extensions(elem: ET.Element, extensions: Extensions) -> None:
    for key, value in extensions:
        elem.set(key, value)


def annotation_to_element(annotation: KnowledgeAnnotation) -> ET.Element:
    elem = ET.Element("Annotation", provenance=annotation.provenance.value)
    if annotation.timestamp:
        elem.set("timestamp", annotation.timestamp)
    if annotation.sub_tree:
        wrapper = ET.SubElement(elem, "Sub-Tree")
        wrapper.append(ET.fromstring(annotation.sub_tree))
    for method, vector in annotation.step_feasibility:
        step = ET.SubElement(elem, "Step-Feasibility", method=method)
        for d in DIMENSIONS:
            step.set(d, str(getattr(vector, d)))
    if annotation.impact is not None:
        ET.SubElement(elem, "Impact", **annotation.impact.as_dict())
    return elem


def to_element(model: SystemModel) -> ET.Element:
    root = ET.Element("Model", id=model.model_id)
    if model.name:
        root.set("name", model.name)
    _set_extensions(root, model.extensions)
    for comp in model.components:
        c = ET.SubElement(root, "Component", id=comp.id)
        if comp.name:
            c.set("name", comp.name)
        _set_extensions(c, comp.extensions)
        for hw in comp.hardware:
            ET.SubElement(c, "Hardware").text = hw
        for sw in comp.software:
            ET.SubElement(c, "Software").text = sw
        for iface in comp.interfaces:
            i = ET.SubElement(c, "Interface", id=iface.id, kind=iface.kind)
            if iface.description:
                i.text = iface.description
        if comp.annotation is not None:
            c.append(annotation_to_element(comp.annotation))
    for chan in model.channels:
        ch = ET.SubElement(root, "Channel", id=chan.id, medium=chan.medium)
        ch.set("from", chan.endpoint_a)
        ch.set("to", chan.endpoint_b)
        if chan.directionality is not Directionality.BIDIRECTIONAL:
            ch.set("direction", chan.directionality.value)
        _set_extensions(ch, chan.extensions)
    for scen in model.scenarios:
        s = ET.SubElement(root, "ThreatScenario", id=scen.id, objective=scen.objective)
        ET.SubElement(s, "Endpoint", ref=scen.endpoint)
        for entry in scen.entry_points:
            ET.SubElement(s, "EntryPoint", ref=entry)
        for rule in scen.constraints:
            ET.SubElement(s, "Constraint").text = rule.pattern
    return root


def serialize(model: SystemModel) -> bytes:
    """Deterministic byte serialization: document order, declared attribute order."""
    root = to_element(model)
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# Validation

def validate(model: SystemModel) -> list[Diagnostic]:
    """Check all type invariants. Empty list means the model is clean."""
    diags: list[Diagnostic] = []

    def error(code: str, subject: str, message: str) -> None:
        diags.append(Diagnostic("error", code, subject, message))

    seen: set[str] = set()
    for comp in model.components:
        if not comp.id.strip():
            error("empty-id", comp.id, "component id is empty")
        if comp.id in seen:
            error("duplicate-id", comp.id, f"duplicate component id '{comp.id}'")
        seen.add(comp.id)
        for attr in (*comp.hardware, *comp.software):
            if not attr.strip():
                error("empty-attribute", comp.id, f"component '{comp.id}' has a blank attribute")
        iface_ids = [i.id for i in comp.interfaces]
        for iface_id in set(iface_ids):
            if iface_ids.count(iface_id) > 1:
                error("duplicate-id", comp.id, f"duplicate interface id '{iface_id}' on component '{comp.id}'")
        if comp.annotation is not None:
            diags.extend(_validate_annotation(comp.id, comp.annotation))

    component_ids = {c.id for c in model.components}
    chan_seen: set[str] = set()
    for chan in model.channels:
        if chan.id in chan_seen:
            error("duplicate-id", chan.id, f"duplicate channel id '{chan.id}'")
        chan_seen.add(chan.id)
        for ref in (chan.endpoint_a, chan.endpoint_b):
            if ref not in component_ids:
                error("dangling-ref", chan.id, f"channel '{chan.id}' references unknown component '{ref}'")
        if chan.endpoint_a == chan.endpoint_b:
            error("self-loop", chan.id, f"self-loop channel '{chan.id}' on component '{chan.endpoint_a}'")

    scen_seen: set[str] = set()
    for scen in model.scenarios:
        if scen.id in scen_seen:
            error("duplicate-id", scen.id, f"duplicate scenario id '{scen.id}'")
        scen_seen.add(scen.id)
        for ref in (scen.endpoint, *scen.entry_points):
            if ref not in component_ids:
                error("dangling-ref", scen.id, f"scenario '{scen.id}' references unknown component '{ref}'")
        if not scen.entry_points:
            error("no-entry", scen.id, f"scenario '{scen.id}' has no entry points")
        if scen.endpoint in scen.entry_points:
            error("entry-is-endpoint", scen.id, f"scenario '{scen.id}' lists its endpoint as an entry point")
        for rule in scen.constraints:
            if not rule.pattern.strip():
                error("empty-attribute", scen.id, f"scenario '{scen.id}' has a blank constraint")
    return diags


def _validate_annotation(subject: str, annotation: KnowledgeAnnotation) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    method_ids: set[str] = set()
    if annotation.sub_tree:
        try:
            root = ET.fromstring(annotation.sub_tree)
        except ET.ParseError:
            return [Diagnostic("error", "bad-subtree", subject, "annotation sub-tree is not well-formed XML")]
        for elem in root.iter("Method"):
            if elem.get("id"):
                method_ids.add(elem.get("id"))
        if root.tag == "Method" and root.get("id"):
            method_ids.add(root.get("id"))
    for method, _vector in annotation.step_feasibility:
        if method not in method_ids:
            diags.append(
                Diagnostic(
                    "error",
                    "dangling-method",
                    subject,
                    f"annotation step-feasibility names unknown method '{method}'",
                )
            )
    return diags
