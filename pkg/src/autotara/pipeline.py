"""End-to-end per-scenario pipeline: paths, atoms, agents, assembly, scoring."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from typing import Sequence

from . import agents, risk
from .backends import AgentBackend
from .errors import (
    EmptyTree,
    MissingChannelMethod,
    NoPathFound,
    PathBudgetExceeded,
)
from .knowledge import KnowledgeStore
from .report import ScenarioResult, TaraReport, build_report
from .risk import RiskConfig
from .topology import (
    Atom,
    PathDag,
    build_graph,
    construct_atoms,
    extract_logical_paths,
    merge_paths,
)
from .tree import (
    AttackMethod,
    AttackTree,
    LogicNode,
    SubTree,
    assemble,
)
from .xsam import SystemModel, ThreatScenario


@dataclass
class PipelineConfig:
    risk: RiskConfig = None  # type: ignore[assignment]
    path_budget: int = 10_000
    parallelism: int = 4
    rag_k: int = 3

    def __post_init__(self):
        if self.risk is None:
            self.risk = RiskConfig()


def assembly_atoms(dag: PathDag, atoms: list[Atom]) -> list[Atom]:
    """Atoms the assembler actually consumes: dag-arc exits plus the endpoint."""
    arc_channels = {chan for chan, _src, _dst in dag.arcs}
    return [
        a
        for a in atoms
        if a.is_endpoint or (a.exit is not None and a.exit.channel.id in arc_channels)
    ]


def run_scenario(
    model: SystemModel,
    scenario: ThreatScenario,
    backend: AgentBackend,
    config: PipelineConfig | None = None,
    store: KnowledgeStore | None = None,
    warnings: agents.AgentWarnings | None = None,
) -> ScenarioResult:
    config = config or PipelineConfig()
    warnings = warnings or agents.AgentWarnings()
    graph = build_graph(model)
    try:
        paths = extract_logical_paths(graph, scenario, budget=config.path_budget)
    except NoPathFound as exc:
        return ScenarioResult(scenario_id=scenario.id, diagnostics=(f"NoPathFound: {exc}",))
    except PathBudgetExceeded as exc:
        return ScenarioResult(scenario_id=scenario.id, diagnostics=(f"PathBudgetExceeded: {exc}",))
    dag = merge_paths(paths)
    atoms = construct_atoms(dag, model)

    subtrees = {
        atom.id: _build_subtree(atom, scenario, backend, warnings)
        for atom in assembly_atoms(dag, atoms)
    }
    atom_by_id = {atom.id: atom for atom in atoms}

    regenerated: set[str] = set()

    def coherence(upstream: SubTree, method: AttackMethod) -> bool:
        junction = (upstream.atom_id, method.related_channel)
        if junction in regenerated:
            # loop guard: at most one regeneration round per junction
            warnings.add(f"junction {junction} still incoherent after one regeneration; forcing coherent")
            return True
        return agents.validate_coherence(upstream, method, backend)

    pairs = [(atom_by_id[aid], st) for aid, st in subtrees.items()]
    try:
        tree, requests = assemble(
            pairs, dag, scenario.constraints, coherence=coherence, scenario_id=scenario.id
        )
        for request in requests:
            regenerated.add((request.upstream_atom, request.channel))
            atom = atom_by_id[request.upstream_atom]
            subtrees[request.upstream_atom] = _build_subtree(
                atom,
                scenario,
                backend,
                warnings,
                regeneration_context={
                    "downstream_objective": request.downstream_objective,
                    "junction_method": request.method_text,
                    "channel": request.channel,
                },
            )
        if requests:
            pairs = [(atom_by_id[aid], st) for aid, st in subtrees.items()]
            tree, _requests = assemble(
                pairs, dag, scenario.constraints, coherence=coherence, scenario_id=scenario.id
            )
    except (MissingChannelMethod, EmptyTree) as exc:
        return ScenarioResult(
            scenario_id=scenario.id, diagnostics=(f"{exc.__class__.__name__}: {exc}",)
        )

    tree = _score_tree(tree, backend, store, config, warnings)
    propagation = risk.propagate(tree, config.risk)
    feasibility = risk.feasibility_level(propagation.root, config.risk)
    impact_vector, _rationale = agents.score_impact(
        scenario, backend, rag_examples=store.rag_examples(scenario.objective, config.rag_k) if store else ()
    )
    impact = risk.impact_level(impact_vector)
    return ScenarioResult(
        scenario_id=scenario.id,
        attack_tree=tree,
        cumulative=propagation.cumulative,
        root_vector=propagation.root,
        feasibility=feasibility,
        impact=impact,
        risk=risk.risk_level(feasibility, impact),
        most_feasible_path=propagation.most_feasible_path,
        diagnostics=tuple(warnings.messages),
    )


def _build_subtree(
    atom: Atom,
    scenario: ThreatScenario,
    backend: AgentBackend,
    warnings: agents.AgentWarnings,
    regeneration_context: dict | None = None,
) -> SubTree:
    surfaces = agents.infer_attack_surfaces(atom, backend, warnings)
    objective = agents.derive_local_objective(atom, scenario, backend)
    return agents.construct_subtree(
        atom,
        scenario,
        surfaces,
        objective,
        backend,
        regeneration_context=regeneration_context,
    )


def _score_tree(
    tree: AttackTree,
    backend: AgentBackend,
    store: KnowledgeStore | None,
    config: PipelineConfig,
    warnings: agents.AgentWarnings,
) -> AttackTree:
    """Attach a step-feasibility vector and rationale to every method."""

    def rec(node):
        if isinstance(node, AttackMethod):
            child = rec(node.child) if node.child is not None else None
            examples = store.rag_examples(node.description, config.rag_k) if store else []
            vector, rationale = agents.score_step_feasibility(
                node,
                {"component": node.related_channel or "", "description": node.description},
                examples,
                backend,
                config.risk,
                warnings,
            )
            return dc_replace(node, step_feasibility=vector, rationale=rationale, child=child)
        if isinstance(node, LogicNode):
            return dc_replace(node, children=tuple(rec(c) for c in node.children))
        return dc_replace(node, child=rec(node.child))

    return dc_replace(tree, root=rec(tree.root))


def run_model(
    model: SystemModel,
    backend: AgentBackend,
    scenario_ids: Sequence[str] | None = None,
    config: PipelineConfig | None = None,
    store: KnowledgeStore | None = None,
) -> TaraReport:
    config = config or PipelineConfig()
    scenarios = [
        s for s in model.scenarios if scenario_ids is None or s.id in scenario_ids
    ]
    if config.parallelism > 1 and len(scenarios) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(
                pool.map(lambda s: run_scenario(model, s, backend, config, store), scenarios)
            )
    else:
        results = [run_scenario(model, s, backend, config, store) for s in scenarios]
    return build_report(model.model_id, results)
