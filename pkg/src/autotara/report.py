"""Per-scenario results aggregated into a TARA report."""
from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping

from .errors import SchemaViolation, UnknownFormat
from .risk import (
    DIMENSIONS,
    FeasibilityLevel,
    FeasibilityVector,
    INSPECTION_THRESHOLD,
    ImpactLevel,
    risk_level,
)
from .tree import AttackTree, tree_to_dot

FEASIBILITY_ORDER = (
    FeasibilityLevel.HIGH,
    FeasibilityLevel.MEDIUM,
    FeasibilityLevel.LOW,
    FeasibilityLevel.VERY_LOW,
)
IMPACT_ORDER = (
    ImpactLevel.SERIOUS,
    ImpactLevel.MAJOR,
    ImpactLevel.MODERATE,
    ImpactLevel.NEGLIGIBLE,
)


@dataclass(frozen=True)
class ScenarioResult:
    scenario_id: str
    attack_tree: AttackTree | None = None
    cumulative: Mapping[str, FeasibilityVector] = field(default_factory=dict)
    root_vector: FeasibilityVector | None = None
    feasibility: FeasibilityLevel | None = None
    impact: ImpactLevel | None = None
    risk: int | None = None
    most_feasible_path: frozenset[str] = frozenset()
    diagnostics: tuple[str, ...] = ()

    @property
    def fatal(self) -> bool:
        return self.risk is None


@dataclass(frozen=True)
class TaraReport:
    model_id: str
    results: tuple[ScenarioResult, ...]
    distribution: Mapping[tuple[FeasibilityLevel, ImpactLevel], int]
    inspection_candidates: tuple[str, ...]


def build_report(model_id: str, results: list[ScenarioResult]) -> TaraReport:
    distribution: dict[tuple[FeasibilityLevel, ImpactLevel], int] = {
        (f, i): 0 for f in FEASIBILITY_ORDER for i in IMPACT_ORDER
    }
    candidates: list[tuple[int, str]] = []
    for result in results:
        if result.fatal:
            continue
        assert result.risk == risk_level(result.feasibility, result.impact)
        distribution[(result.feasibility, result.impact)] += 1
        if result.risk >= INSPECTION_THRESHOLD:
            candidates.append((-result.risk, result.scenario_id))
    candidates.sort()
    return TaraReport(
        model_id=model_id,
        results=tuple(results),
        distribution=distribution,
        inspection_candidates=tuple(scenario for _neg, scenario in candidates),
    )


def render(report: TaraReport, fmt: str, highlight_dot: bool = True) -> dict[str, bytes]:
    """Render as {filename: content}. Formats: xml, text, dot."""
    if fmt == "xml":
        return {"report.xml": render_xml(report)}
    if fmt == "text":
        return {"report.txt": render_text(report)}
    if fmt == "dot":
        bundle: dict[str, bytes] = {}
        for result in report.results:
            if result.attack_tree is None:
                continue
            highlight = result.most_feasible_path if highlight_dot else frozenset()
            dot = tree_to_dot(result.attack_tree, highlight=highlight, cumulative=result.cumulative)
            bundle[f"{result.scenario_id}.dot"] = dot.encode("utf-8")
        return bundle
    raise UnknownFormat(f"unknown report format '{fmt}'")


def render_text(report: TaraReport) -> bytes:
    lines = [f"TARA report for model '{report.model_id}'", ""]
    for result in report.results:
        if result.fatal:
            lines.append(f"scenario {result.scenario_id}: FAILED ({'; '.join(result.diagnostics)})")
            continue
        lines.append(
            f"scenario {result.scenario_id}: risk level {result.risk} "
            f"(feasibility {result.feasibility.value}, overall {result.root_vector.overall()}; "
            f"impact {result.impact.value})"
        )
    lines.append("")
    lines.append("risk distribution (feasibility x impact):")
    header = "              " + "  ".join(f"{i.value:>10}" for i in IMPACT_ORDER)
    lines.append(header)
    for f in FEASIBILITY_ORDER:
        row = "  ".join(f"{report.distribution[(f, i)]:>10}" for i in IMPACT_ORDER)
        lines.append(f"{f.value:>12}  {row}")
    lines.append("")
    if report.inspection_candidates:
        lines.append("inspection candidates (risk >= 3): " + ", ".join(report.inspection_candidates))
    else:
        lines.append("no inspection candidates")
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_xml(report: TaraReport) -> bytes:
    root = ET.Element("TaraReport", model=report.model_id)
    for result in report.results:
        r = ET.SubElement(root, "Result", scenario=result.scenario_id)
        if result.fatal:
            for diag in result.diagnostics:
                d = ET.SubElement(r, "Diagnostic")
                d.text = diag
            continue
        r.set("feasibility", result.feasibility.value)
        r.set("impact", result.impact.value)
        r.set("risk", str(result.risk))
        cumulative = ET.SubElement(r, "RootCumulative")
        for d in DIMENSIONS:
            cumulative.set(d, str(getattr(result.root_vector, d)))
        path = ET.SubElement(r, "MostFeasiblePath")
        path.text = " ".join(sorted(result.most_feasible_path))
        for diag in result.diagnostics:
            de = ET.SubElement(r, "Diagnostic")
            de.text = diag
    dist = ET.SubElement(root, "Distribution")
    for f in FEASIBILITY_ORDER:
        for i in IMPACT_ORDER:
            count = report.distribution[(f, i)]
            if count:
                ET.SubElement(dist, "Cell", feasibility=f.value, impact=i.value, count=str(count))
    candidates = ET.SubElement(root, "InspectionCandidates")
    candidates.text = " ".join(report.inspection_candidates)
    ET.indent(root, space="  ")
    body = ET.tostring(root, encoding="unicode")
    return ('<?xml version="1.0" encoding="UTF-8"?>\n' + body + "\n").encode("utf-8")


def report_from_xml(data: bytes) -> TaraReport:
    """Round-trip parse of the machine-readable report (tree documents travel separately)."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise SchemaViolation(f"not well-formed XML: {exc}", "/")
    if root.tag != "TaraReport":
        raise SchemaViolation(f"unknown root element '{root.tag}'", "/")
    results: list[ScenarioResult] = []
    for r in root.findall("Result"):
        diags = tuple((d.text or "") for d in r.findall("Diagnostic"))
        if r.get("risk") is None:
            results.append(ScenarioResult(scenario_id=r.get("scenario", ""), diagnostics=diags))
            continue
        cum = r.find("RootCumulative")
        vector = FeasibilityVector(**{d: int(cum.get(d)) for d in DIMENSIONS})
        path_text = r.findtext("MostFeasiblePath", default="")
        results.append(
            ScenarioResult(
                scenario_id=r.get("scenario", ""),
                root_vector=vector,
                feasibility=FeasibilityLevel(r.get("feasibility")),
                impact=ImpactLevel(r.get("impact")),
                risk=int(r.get("risk")),
                most_feasible_path=frozenset(path_text.split()),
                diagnostics=diags,
            )
        )
    return build_report(root.get("model", ""), results)
