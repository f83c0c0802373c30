from __future__ import annotations

import pytest

from autotara.errors import UnknownFormat
from autotara.report import (
    ScenarioResult,
    build_report,
    render,
    render_text,
    render_xml,
    report_from_xml,
)
from autotara.risk import FeasibilityLevel, FeasibilityVector, ImpactLevel


def result(scenario_id, feasibility, impact, overall=15):
    from autotara.risk import risk_level

    return ScenarioResult(
        scenario_id=scenario_id,
        root_vector=FeasibilityVector(overall, 0, 0, 0, 0),
        feasibility=feasibility,
        impact=impact,
        risk=risk_level(feasibility, impact),
        most_feasible_path=frozenset({"AO-1", "AM-1"}),
    )


class TestBuildReport:
    def test_distribution_counts(self):
        report = build_report(
            "m",
            [
                result("s1", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR),
                result("s2", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR),
                result("s3", FeasibilityLevel.HIGH, ImpactLevel.SERIOUS),
            ],
        )
        assert report.distribution[(FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR)] == 2
        assert report.distribution[(FeasibilityLevel.HIGH, ImpactLevel.SERIOUS)] == 1
        assert sum(report.distribution.values()) == 3

    def test_inspection_candidates_sorted_by_risk_then_id(self):
        report = build_report(
            "m",
            [
                result("low", FeasibilityLevel.VERY_LOW, ImpactLevel.NEGLIGIBLE),
                result("b", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR),
                result("a", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR),
                result("top", FeasibilityLevel.HIGH, ImpactLevel.SERIOUS),
            ],
        )
        assert report.inspection_candidates == ("top", "a", "b")

    def test_failed_scenarios_excluded_from_distribution(self):
        failed = ScenarioResult(scenario_id="s1", diagnostics=("NoPathFound: x",))
        report = build_report("m", [failed])
        assert failed.fatal
        assert sum(report.distribution.values()) == 0
        assert report.inspection_candidates == ()


class TestRender:
    def test_text_contains_matrix_and_candidates(self):
        report = build_report("m", [result("s1", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR)])
        text = render_text(report).decode()
        assert "risk level 3" in text
        assert "inspection candidates (risk >= 3): s1" in text

    def test_render_formats(self):
        report = build_report("m", [result("s1", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR)])
        assert set(render(report, "xml")) == {"report.xml"}
        assert set(render(report, "text")) == {"report.txt"}
        assert render(report, "dot") == {}  # no trees attached

    def test_unknown_format(self):
        report = build_report("m", [])
        with pytest.raises(UnknownFormat):
            render(report, "pdf")

    def test_xml_round_trip(self):
        report = build_report(
            "m",
            [
                result("s1", FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR),
                ScenarioResult(scenario_id="s2", diagnostics=("NoPathFound: oops",)),
            ],
        )
        recovered = report_from_xml(render_xml(report))
        assert recovered.model_id == "m"
        assert recovered.distribution == report.distribution
        assert recovered.inspection_candidates == report.inspection_candidates
        assert recovered.results[1].fatal

    def test_golden_report_round_trips(self, golden_dir):
        data = (golden_dir / "report.xml").read_bytes()
        recovered = report_from_xml(data)
        assert render_xml(recovered) == data
