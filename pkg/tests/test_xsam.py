from __future__ import annotations

import dataclasses
import re

import pytest
from hypothesis import given, settings, strategies as st

from autotara import xsam
from autotara.errors import MalformedXml, SchemaViolation
from autotara.risk import FeasibilityVector
from autotara.xsam import (
    Channel,
    Component,
    ConstraintRule,
    Directionality,
    Interface,
    SystemModel,
    ThreatScenario,
)


class TestParse:
    def test_fixture_counts(self, fig3):
        assert len(fig3.components) == 6
        assert len(fig3.channels) == 6
        assert len(fig3.scenarios) == 1

    def test_fixture_scenario(self, fig3):
        scenario = fig3.scenario("S1")
        assert scenario.endpoint == "F"
        assert scenario.entry_points == ("A", "D")
        assert scenario.objective == "Disrupt the availability of BCM-MCU"

    def test_component_attributes(self, fig3):
        gateway = fig3.component("C")
        assert gateway.hardware == ("TC397", "JTAG")
        assert gateway.software == ("OpenSSL 1.1.0a",)
        obd = fig3.component("D")
        assert obd.interfaces[0].kind == "OBD"

    def test_unknown_attribute_preserved_as_extension(self):
        doc = (
            b'<Model id="m"><Component id="a" tier="3"/>'
            b'<Component id="b"/>'
            b'<Channel id="1" medium="CAN" from="a" to="b" color="red"/>'
            b'<ThreatScenario id="s" objective="o">'
            b'<Endpoint ref="b"/><EntryPoint ref="a"/></ThreatScenario></Model>'
        )
        model = xsam.parse(doc)
        assert model.component("a").extensions == (("tier", "3"),)
        assert model.channel("1").extensions == (("color", "red"),)
        round_tripped = xsam.parse(xsam.serialize(model))
        assert round_tripped == model

    def test_malformed_xml_reports_line(self):
        with pytest.raises(MalformedXml) as excinfo:
            xsam.parse(b'<Model id="m">\n<Component id="a">\n</Model>')
        assert excinfo.value.line is not None

    def test_unknown_element_rejected(self):
        with pytest.raises(SchemaViolation):
            xsam.parse(b'<Model id="m"><Widget/></Model>')

    def test_missing_required_attribute(self):
        with pytest.raises(SchemaViolation) as excinfo:
            xsam.parse(b'<Model id="m">\n  <Component/>\n</Model>')
        assert "id" in str(excinfo.value)
        assert excinfo.value.line == 2

    def test_dangling_channel_reference(self):
        with pytest.raises(SchemaViolation):
            xsam.parse(
                b'<Model id="m"><Component id="a"/>'
                b'<Channel id="1" medium="CAN" from="a" to="ghost"/></Model>'
            )

    def test_scenario_requires_endpoint_and_entry(self):
        with pytest.raises(SchemaViolation):
            xsam.parse(
                b'<Model id="m"><Component id="a"/>'
                b'<ThreatScenario id="s" objective="o"><EntryPoint ref="a"/></ThreatScenario></Model>'
            )
        with pytest.raises(SchemaViolation):
            xsam.parse(
                b'<Model id="m"><Component id="a"/>'
                b'<ThreatScenario id="s" objective="o"><Endpoint ref="a"/></ThreatScenario></Model>'
            )

    def test_annotation_round_trip(self):
        doc = (
            b'<Model id="m"><Component id="a">'
            b'<Annotation provenance="expert_curated" timestamp="2026-01-01T00:00:00Z">'
            b'<Sub-Tree><Method id="m1" category="local_exploit" description="x"/></Sub-Tree>'
            b'<Step-Feasibility method="m1" ET="1" SE="3" KoIC="3" WoO="1" Eq="4"/>'
            b'<Impact safety="Major" financial="Moderate" operational="Major" privacy="Negligible"/>'
            b"</Annotation></Component></Model>"
        )
        model = xsam.parse(doc)
        ann = model.component("a").annotation
        assert ann.step_feasibility == (("m1", FeasibilityVector(1, 3, 3, 1, 4)),)
        assert ann.impact is not None
        assert xsam.parse(xsam.serialize(model)) == model


class TestValidate:
    def test_clean_fixture(self, fig3):
        assert xsam.validate(fig3) == []

    def test_duplicate_component_id(self, fig3):
        broken = dataclasses.replace(fig3, components=fig3.components + (fig3.components[0],))
        codes = {d.code for d in xsam.validate(broken)}
        assert "duplicate-id" in codes

    def test_self_loop_channel(self, fig3):
        loop = Channel(id="9", medium="CAN", endpoint_a="A", endpoint_b="A")
        broken = dataclasses.replace(fig3, channels=fig3.channels + (loop,))
        diags = [d for d in xsam.validate(broken) if d.code == "self-loop"]
        assert len(diags) == 1
        assert "self-loop channel" in diags[0].message

    def test_entry_point_equal_to_endpoint(self, fig3):
        scen = fig3.scenario("S1")
        broken_scen = dataclasses.replace(scen, entry_points=scen.entry_points + ("F",))
        broken = dataclasses.replace(fig3, scenarios=(broken_scen,))
        diags = [d for d in xsam.validate(broken) if d.code == "entry-is-endpoint"]
        assert len(diags) == 1

    def test_blank_attribute(self, fig3):
        comp = dataclasses.replace(fig3.components[0], software=("",))
        broken = dataclasses.replace(fig3, components=(comp,) + fig3.components[1:])
        assert any(d.code == "empty-attribute" for d in xsam.validate(broken))

    def test_single_field_mutations_each_flagged(self, fig3):
        """Every dangling-reference mutation of the fixture yields >= 1 diagnostic."""
        mutations = []
        for i, chan in enumerate(fig3.channels):
            for field in ("endpoint_a", "endpoint_b"):
                bad = dataclasses.replace(chan, **{field: "ghost"})
                mutations.append(
                    dataclasses.replace(
                        fig3, channels=fig3.channels[:i] + (bad,) + fig3.channels[i + 1:]
                    )
                )
        scen = fig3.scenarios[0]
        mutations.append(dataclasses.replace(fig3, scenarios=(dataclasses.replace(scen, endpoint="ghost"),)))
        mutations.append(
            dataclasses.replace(fig3, scenarios=(dataclasses.replace(scen, entry_points=("ghost", "D")),))
        )
        for broken in mutations:
            assert xsam.validate(broken), broken


# ---------------------------------------------------------------------------
# Fuzzed round-trips

_ids = st.text(alphabet="abcdefghij0123456789", min_size=1, max_size=6)
_names = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), whitelist_characters=" .-"),
    max_size=20,
).map(lambda s: s.strip()).filter(lambda s: not re.fullmatch(r"\s*", s) or s == "")


@st.composite
def models(draw) -> SystemModel:
    comp_ids = draw(st.lists(_ids, min_size=2, max_size=5, unique=True))
    components = tuple(
        Component(
            id=cid,
            name=draw(_names),
            hardware=tuple(draw(st.lists(_names.filter(bool), max_size=2))),
            software=tuple(draw(st.lists(_names.filter(bool), max_size=2))),
            interfaces=tuple(
                Interface(id=f"{cid}-i{k}", kind=draw(st.sampled_from(["OBD", "USB", "ETH"])))
                for k in range(draw(st.integers(0, 2)))
            ),
        )
        for cid in comp_ids
    )
    n_chan = draw(st.integers(0, 5))
    channels = tuple(
        Channel(
            id=f"ch{k}",
            medium=draw(st.sampled_from(["CAN bus", "LIN", "SPI", ""])),
            endpoint_a=draw(st.sampled_from(comp_ids)),
            endpoint_b=draw(st.sampled_from(comp_ids)),
            directionality=draw(st.sampled_from(list(Directionality))),
        )
        for k in range(n_chan)
    )
    scenarios = tuple(
        ThreatScenario(
            id=f"s{k}",
            objective=draw(_names.filter(bool)),
            endpoint=draw(st.sampled_from(comp_ids)),
            entry_points=tuple(draw(st.lists(st.sampled_from(comp_ids), min_size=1, max_size=2, unique=True))),
            constraints=tuple(ConstraintRule(p) for p in draw(st.lists(_names.filter(bool), max_size=2))),
        )
        for k in range(draw(st.integers(0, 2)))
    )
    return SystemModel(
        model_id=draw(_ids),
        name=draw(_names),
        components=components,
        channels=channels,
        scenarios=scenarios,
    )


class TestRoundTrip:
    def test_fixture_identity(self, fig3):
        assert xsam.parse(xsam.serialize(fig3)) == fig3

    def test_serialization_is_deterministic(self, fig3):
        assert xsam.serialize(fig3) == xsam.serialize(xsam.parse(xsam.serialize(fig3)))

    @settings(max_examples=200, deadline=None)
    @given(models())
    def test_fuzzed_models_round_trip(self, model):
        data = xsam.serialize(model)
        assert xsam.parse(data) == model
        assert xsam.serialize(xsam.parse(data)) == data
