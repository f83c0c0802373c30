"""Acceptance gate: every headline criterion, one pass/fail line each.

Each test prints ``ACCEPTANCE <name>: PASS (<elapsed>s)`` on success; a
failure shows up as a normal pytest failure for that criterion.
"""
from __future__ import annotations

import itertools
import json
import random
import time

import conftest

from autotara import pipeline, risk, topology, tree as tree_mod, xsam
from autotara.backends import FixtureBackend
from autotara.errors import NoPathFound
from autotara.knowledge import KnowledgeStore
from autotara.report import render_text, render_xml
from autotara.risk import (
    DEFAULT_VALUE_SETS,
    DIMENSIONS,
    FeasibilityLevel,
    FeasibilityVector,
    ImpactLevel,
)
from autotara.tree import (
    AttackMethod,
    AttackObjective,
    AttackTree,
    ConstraintRule,
    LogicKind,
    LogicNode,
    MethodCategory,
    filter_constraints,
    iter_nodes,
)

from test_topology import graph_from_arcs, oracle_paths, scenario as make_scenario


def report(name: str, started: float) -> None:
    line = f"ACCEPTANCE {name}: PASS ({time.perf_counter() - started:.2f}s)"
    print(line)
    # conftest echoes these in the terminal summary, past output capture
    conftest.ACCEPTANCE_LINES.append(line)


class TestAcceptance:
    def test_fig3_reproduction(self, fig3):
        """Paths {A-C-F, D-C-F}; B and channels 2/4 absent; C splits into exits 6 and 5."""
        started = time.perf_counter()
        graph = topology.build_graph(fig3)
        paths = topology.extract_logical_paths(graph, fig3.scenario("S1"))
        assert [(p.nodes, p.hops) for p in paths] == [
            (("A", "C", "F"), ("1", "6")),
            (("D", "C", "F"), ("3", "6")),
        ]
        assert all("B" not in p.nodes for p in paths)
        assert all(not ({"2", "4"} & set(p.hops)) for p in paths)
        dag = topology.merge_paths(paths)
        atoms = topology.construct_atoms(dag, fig3)
        gateway_exits = sorted(a.exit.channel.id for a in atoms if a.component.id == "C")
        assert gateway_exits == ["5", "6"]
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report("fig3-reproduction", started)

    def test_path_oracle(self):
        """extract_logical_paths equals exhaustive enumeration: all graphs over a
        bounded 12-arc candidate set on 6 nodes, plus 200 random 8-node graphs."""
        started = time.perf_counter()
        nodes6 = ["a", "b", "c", "d", "e", "f"]
        candidate_arcs = [
            ("a", "b"), ("b", "c"), ("c", "f"), ("a", "c"), ("b", "d"),
            ("d", "e"), ("e", "f"), ("c", "e"), ("d", "f"), ("b", "f"),
            ("a", "d"), ("e", "c"),
        ]
        checked = 0
        for mask in range(1 << len(candidate_arcs)):
            chosen = [candidate_arcs[i] for i in range(len(candidate_arcs)) if mask >> i & 1]
            arcs = [(f"c{i}", u, v) for i, (u, v) in enumerate(chosen)]
            graph = graph_from_arcs(arcs + [("pad", "a", "a")][:0]) if arcs else None
            expected = oracle_paths(arcs, ["a"], "f")
            try:
                got = (
                    {p.nodes for p in topology.extract_logical_paths(graph, make_scenario(["a"], "f"))}
                    if graph
                    else set()
                )
            except NoPathFound:
                got = set()
            assert got == expected, arcs
            checked += 1
        assert checked == 1 << 12

        rng = random.Random(7)
        nodes8 = [f"n{i}" for i in range(8)]
        for _trial in range(200):
            arcs = [
                (f"c{i}", u, v)
                for i, (u, v) in enumerate(itertools.permutations(nodes8, 2))
                if rng.random() < 0.15
            ]
            entries = rng.sample(nodes8[:-1], 2)
            graph = graph_from_arcs(arcs) if arcs else None
            expected = oracle_paths(arcs, entries, nodes8[-1])
            try:
                got = (
                    {
                        p.nodes
                        for p in topology.extract_logical_paths(
                            graph, make_scenario(entries, nodes8[-1])
                        )
                    }
                    if graph and nodes8[-1] in graph.nodes
                    else set()
                )
            except NoPathFound:
                got = set()
            assert got == expected
        elapsed = time.perf_counter() - started
        assert elapsed < 60.0
        report("path-oracle", started)

    def test_propagation_oracle(self):
        """500 random trees: AND-only root = per-dimension leaf max, OR-only root
        overall = min leaf overall, both permutation invariant."""
        started = time.perf_counter()
        rng = random.Random(4242)

        def leaf(i, vec):
            return AttackMethod(
                id=f"AM-{i}", description=f"m{i}", category=MethodCategory.OTHER, step_feasibility=vec
            )

        def build(vectors, kind, order):
            leaves = [leaf(i, vectors[j]) for i, j in enumerate(order)]
            while len(leaves) > 1:
                take = min(len(leaves), rng.randint(2, 4))
                group = LogicNode(id=f"L-{len(leaves)}-{take}", kind=kind, children=tuple(leaves[:take]))
                leaves = [group] + leaves[take:]
            root = AttackObjective(id="AO-1", text="t", component="x", child=leaves[0])
            return AttackTree(scenario_id="s", objective="t", root=root)

        for trial in range(500):
            kind = LogicKind.AND if trial % 2 == 0 else LogicKind.OR
            vectors = [
                FeasibilityVector(**{d: rng.choice(DEFAULT_VALUE_SETS[d]) for d in DIMENSIONS})
                for _ in range(rng.randint(2, 15))
            ]
            order = list(range(len(vectors)))
            base = risk.propagate(build(vectors, kind, order)).root
            rng.shuffle(order)
            permuted = risk.propagate(build(vectors, kind, order)).root
            if kind is LogicKind.AND:
                expected = vectors[0]
                for v in vectors[1:]:
                    expected = FeasibilityVector.dimension_max(expected, v)
                assert base == expected
                assert permuted == expected
            else:
                assert base.overall() == min(v.overall() for v in vectors)
                assert permuted.overall() == base.overall()
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0
        report("propagation-oracle", started)

    def test_risk_matrix_anchors(self):
        started = time.perf_counter()
        assert risk.risk_level(FeasibilityLevel.HIGH, ImpactLevel.SERIOUS) == 5
        assert risk.risk_level(FeasibilityLevel.HIGH, ImpactLevel.MAJOR) == 4
        assert risk.risk_level(FeasibilityLevel.MEDIUM, ImpactLevel.SERIOUS) == 4
        assert risk.risk_level(FeasibilityLevel.MEDIUM, ImpactLevel.MAJOR) == 3
        feas = [FeasibilityLevel.VERY_LOW, FeasibilityLevel.LOW, FeasibilityLevel.MEDIUM, FeasibilityLevel.HIGH]
        imp = [ImpactLevel.NEGLIGIBLE, ImpactLevel.MODERATE, ImpactLevel.MAJOR, ImpactLevel.SERIOUS]
        for i, f in enumerate(feas):
            for j, m in enumerate(imp):
                if i + 1 < len(feas):
                    assert risk.risk_level(f, m) <= risk.risk_level(feas[i + 1], m)
                if j + 1 < len(imp):
                    assert risk.risk_level(f, m) <= risk.risk_level(f, imp[j + 1])
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report("risk-matrix-anchors", started)

    def test_golden_pipeline(self, fig3, golden_dir):
        """Three runs byte-identical, golden structure, risk level 3."""
        started = time.perf_counter()
        renders = []
        trees = []
        for _run in range(3):
            rep = pipeline.run_model(fig3, FixtureBackend())
            renders.append(render_xml(rep) + render_text(rep))
            result = rep.results[0]
            trees.append(tree_mod.to_portable(result.attack_tree, result.cumulative))
            assert result.risk == 3
        assert renders[0] == renders[1] == renders[2]
        assert trees[0] == trees[1] == trees[2]
        assert trees[0] == (golden_dir / "S1.tree.xml").read_bytes()

        tree = tree_mod.from_portable(trees[0])
        root = tree.root
        assert isinstance(root, AttackObjective)
        flood = root.child
        assert isinstance(flood, AttackMethod) and flood.related_channel == "6"
        gateway_or = flood.child.child
        assert isinstance(gateway_or, LogicNode) and gateway_or.kind is LogicKind.OR
        assert sum(1 for c in gateway_or.children if isinstance(c, AttackMethod)) >= 2
        replay = next(c for c in gateway_or.children if getattr(c, "related_channel", None) == "1")
        ivi_chain = replay.child.child
        assert isinstance(ivi_chain, LogicNode) and ivi_chain.kind is LogicKind.AND
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0
        report("golden-pipeline", started)

    def test_round_trips(self, fig3, golden_dir, corpus_dir):
        """parse/serialize and to_portable/from_portable identities on fixtures
        plus 200 fuzzed documents."""
        started = time.perf_counter()
        assert xsam.parse(xsam.serialize(fig3)) == fig3
        golden_tree = (golden_dir / "S1.tree.xml").read_bytes()
        tree = tree_mod.from_portable(golden_tree)
        assert tree_mod.to_portable(tree, risk.propagate(tree).cumulative) == golden_tree

        rng = random.Random(11)
        for trial in range(200):
            if trial % 2 == 0:
                model = _random_model(rng)
                assert xsam.parse(xsam.serialize(model)) == model
            else:
                fuzzed = _random_tree(rng)
                assert tree_mod.from_portable(tree_mod.to_portable(fuzzed)) == fuzzed
        elapsed = time.perf_counter() - started
        assert elapsed < 30.0
        report("round-trips", started)

    def test_knowledge(self, corpus_dir, tmp_path):
        """Self-retrieval at score 1.0; export line count equals record count."""
        started = time.perf_counter()
        store = KnowledgeStore(corpus_dir)
        assert len(store) >= 10
        for record in (store.get(rid) for rid in list(store._records)[:3]):
            ranked = store.retrieve(record.key_text, k=1)
            assert ranked[0][1].record_id == record.record_id
            assert ranked[0][0] == 1.0
        lines = list(store.export_training_pairs([xsam.Provenance.EXPERT_CURATED]))
        assert len(lines) == len(store)
        for line in lines:
            payload = json.loads(line)
            assert payload["input"] and payload["output"]
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0
        report("knowledge", started)

    def test_constraint_filtering(self):
        """'physical destruction' removes exactly the 'Physically cut channel 6'
        leaf; filtering is idempotent."""
        started = time.perf_counter()
        root = AttackObjective(
            id="AO-1",
            text="t",
            component="x",
            child=LogicNode(
                id="L-1",
                kind=LogicKind.OR,
                children=(
                    AttackMethod(id="AM-1", description="Physically cut channel 6",
                                 category=MethodCategory.OTHER),
                    AttackMethod(id="AM-2", description="Flood channel 6 with malicious frames",
                                 category=MethodCategory.CHANNEL_PROPAGATION, related_channel="6"),
                    AttackMethod(id="AM-3", description="Access the ECU via JTAG",
                                 category=MethodCategory.INTERFACE_ACCESS),
                ),
            ),
        )
        tree = AttackTree(scenario_id="s", objective="t", root=root)
        rules = (ConstraintRule("physical destruction"),)
        filtered, removed = filter_constraints(tree, rules)
        assert removed == ["AM-1"]
        remaining = [n.id for n in iter_nodes(filtered.root) if isinstance(n, AttackMethod)]
        assert remaining == ["AM-2", "AM-3"]
        again, removed_again = filter_constraints(filtered, rules)
        assert again == filtered
        assert removed_again == []
        elapsed = time.perf_counter() - started
        assert elapsed < 1.0
        report("constraint-filtering", started)


def _random_model(rng: random.Random) -> xsam.SystemModel:
    from autotara.xsam import Channel, Component, Directionality, Interface, SystemModel, ThreatScenario

    comp_ids = [f"c{i}" for i in range(rng.randint(2, 6))]
    components = tuple(
        Component(
            id=cid,
            name=rng.choice(["", "ECU", "Gateway Unit"]),
            hardware=tuple(rng.sample(["TC397", "JTAG", "S32K144"], rng.randint(0, 2))),
            software=tuple(rng.sample(["Linux 6.1", "OpenSSL 1.1.0a"], rng.randint(0, 2))),
            interfaces=tuple(
                Interface(id=f"{cid}-i{k}", kind=rng.choice(["OBD", "USB"]))
                for k in range(rng.randint(0, 2))
            ),
        )
        for cid in comp_ids
    )
    channels = tuple(
        Channel(
            id=f"ch{k}",
            medium=rng.choice(["CAN bus", "LIN", "SPI"]),
            endpoint_a=rng.choice(comp_ids),
            endpoint_b=rng.choice(comp_ids),
            directionality=rng.choice(list(Directionality)),
        )
        for k in range(rng.randint(0, 5))
    )
    scenarios = tuple(
        ThreatScenario(
            id=f"s{k}",
            objective=rng.choice(["Disrupt availability", "Unlock the doors"]),
            endpoint=rng.choice(comp_ids),
            entry_points=tuple(rng.sample(comp_ids, rng.randint(1, min(2, len(comp_ids))))),
        )
        for k in range(rng.randint(0, 2))
    )
    return SystemModel(
        model_id=f"m{rng.randint(0, 999)}",
        components=components,
        channels=channels,
        scenarios=scenarios,
    )


def _random_tree(rng: random.Random) -> AttackTree:
    counter = [0]

    def gen(depth: int):
        counter[0] += 1
        idx = counter[0]
        if depth >= 3 or rng.random() < 0.5:
            channel = rng.choice([None, "1", "6"])
            child = None
            if channel and depth < 3 and rng.random() < 0.4:
                counter[0] += 1
                child = AttackObjective(
                    id=f"AO-{counter[0]}", text="up", component="u", child=gen(depth + 1)
                )
            return AttackMethod(
                id=f"AM-{idx}",
                description=rng.choice(["probe the bus", "exploit the service", "inject frames"]),
                category=MethodCategory.CHANNEL_PROPAGATION if channel else MethodCategory.LOCAL_EXPLOIT,
                related_channel=channel,
                step_feasibility=rng.choice([None, FeasibilityVector(1, 3, 3, 1, 4)]),
                rationale=rng.choice([None, "expert judgement"]),
                child=child,
            )
        return LogicNode(
            id=f"L-{idx}",
            kind=rng.choice(list(LogicKind)),
            children=tuple(gen(depth + 1) for _ in range(rng.randint(2, 3))),
        )

    root = AttackObjective(id="AO-1", text="root objective", component="r", child=gen(1))
    return AttackTree(scenario_id="s", objective="root objective", root=root)
