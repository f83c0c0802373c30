"""Command-line front door for the pipeline.

Exit codes: 0 success, 1 diagnostics with errors, 2 fatal errors.
"""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline, report as report_mod, risk, topology, tree as tree_mod, xsam
from .backends import FixtureBackend, HttpChatBackend
from .errors import TaraError
from .knowledge import KnowledgeStore
from .xsam import Provenance

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_FATAL = 2


def _load_model(path: str) -> xsam.SystemModel:
    return xsam.parse(Path(path).read_bytes())


def _backend(name: str, base_url: str | None, model_name: str | None):
    if name == "fixture":
        return FixtureBackend()
    if name == "live":
        if not base_url or not model_name:
            raise click.UsageError("--base-url and --model are required for the live backend")
        return HttpChatBackend(base_url=base_url, model=model_name)
    raise click.UsageError(f"unknown backend '{name}'")


def _fatal(module: str, exc: Exception) -> None:
    click.echo(f"{module}: {exc.__class__.__name__}: {exc}", err=True)
    sys.exit(EXIT_FATAL)


@click.group()
def main() -> None:
    """Function-level TARA: validate models, extract paths, build and assess attack trees."""


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
def validate(model_path: str) -> None:
    """Parse and validate an OpenXSAM++ model."""
    try:
        model = _load_model(model_path)
    except TaraError as exc:
        _fatal("xsam", exc)
    diagnostics = xsam.validate(model)
    for diag in diagnostics:
        click.echo(f"{diag.severity}: [{diag.code}] {diag.message}")
    if any(d.severity == "error" for d in diagnostics):
        sys.exit(EXIT_DIAGNOSTICS)
    click.echo(f"model '{model.model_id}' is valid ({len(model.components)} components, "
               f"{len(model.channels)} channels, {len(model.scenarios)} scenarios)")


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.argument("scenario_id")
@click.option("--dot", "dot_path", type=click.Path(), default=None, help="Write the merged path dag as DOT.")
def paths(model_path: str, scenario_id: str, dot_path: str | None) -> None:
    """List logical paths from the scenario's entry points to its endpoint."""
    try:
        model = _load_model(model_path)
        scenario = model.scenario(scenario_id)
        graph = topology.build_graph(model)
        found = topology.extract_logical_paths(graph, scenario)
    except KeyError:
        _fatal("topology", TaraError(f"unknown scenario '{scenario_id}'"))
    except TaraError as exc:
        _fatal("topology", exc)
    for path in found:
        hops = ",".join(path.hops)
        click.echo(" -> ".join(path.nodes) + f"  (channels {hops})")
    if dot_path:
        dag = topology.merge_paths(found)
        Path(dot_path).write_text(topology.dag_to_dot(dag), encoding="utf-8")


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.argument("scenario_id")
def atoms(model_path: str, scenario_id: str) -> None:
    """List the atoms a scenario decomposes into."""
    try:
        model = _load_model(model_path)
        scenario = model.scenario(scenario_id)
        graph = topology.build_graph(model)
        found = topology.extract_logical_paths(graph, scenario)
        dag = topology.merge_paths(found)
        atom_list = topology.construct_atoms(dag, model)
    except KeyError:
        _fatal("topology", TaraError(f"unknown scenario '{scenario_id}'"))
    except TaraError as exc:
        _fatal("topology", exc)
    for atom in atom_list:
        incoming = ",".join(ref.channel.id for ref in atom.incoming) or "-"
        if atom.exit is None:
            click.echo(f"{atom.id}: terminal (objective), incoming {incoming}")
        else:
            click.echo(f"{atom.id}: exit channel {atom.exit.channel.id} -> {atom.exit.neighbor}, incoming {incoming}")


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--scenario", "scenario_ids", multiple=True, help="Restrict to these scenario ids.")
@click.option("--out", "out_dir", type=click.Path(), default="out", show_default=True)
@click.option("--backend", "backend_name", default="fixture", show_default=True)
@click.option("--base-url", default=None, help="Chat-completion base URL for the live backend.")
@click.option("--model", "model_name", default=None, help="Model name for the live backend.")
@click.option("--risk-config", "risk_config_path", type=click.Path(exists=True), default=None)
@click.option("--knowledge-store", "store_path", type=click.Path(), default=None)
@click.option("--parallelism", default=4, show_default=True)
def run(model_path, scenario_ids, out_dir, backend_name, base_url, model_name,
        risk_config_path, store_path, parallelism) -> None:
    """Run the full pipeline and write a TARA report bundle."""
    try:
        model = _load_model(model_path)
    except TaraError as exc:
        _fatal("xsam", exc)
    diagnostics = xsam.validate(model)
    if any(d.severity == "error" for d in diagnostics):
        for diag in diagnostics:
            click.echo(f"{diag.severity}: [{diag.code}] {diag.message}", err=True)
        sys.exit(EXIT_DIAGNOSTICS)
    backend = _backend(backend_name, base_url, model_name)
    config = pipeline.PipelineConfig(
        risk=risk.RiskConfig.load(risk_config_path) if risk_config_path else risk.RiskConfig(),
        parallelism=parallelism,
    )
    store = KnowledgeStore(store_path) if store_path else None
    try:
        report = pipeline.run_model(
            model, backend, scenario_ids=list(scenario_ids) or None, config=config, store=store
        )
    except TaraError as exc:
        _fatal("pipeline", exc)

    out = Path(out_dir)
    (out / "trees").mkdir(parents=True, exist_ok=True)
    (out / "dot").mkdir(parents=True, exist_ok=True)
    (out / "report.xml").write_bytes(report_mod.render_xml(report))
    (out / "report.txt").write_bytes(report_mod.render_text(report))
    for result in report.results:
        if result.attack_tree is None:
            continue
        (out / "trees" / f"{result.scenario_id}.xml").write_bytes(
            tree_mod.to_portable(result.attack_tree, result.cumulative)
        )
        (out / "dot" / f"{result.scenario_id}.dot").write_text(
            tree_mod.tree_to_dot(result.attack_tree, result.most_feasible_path, result.cumulative),
            encoding="utf-8",
        )
    click.echo(Path(out_dir and out_dir).joinpath("report.txt").read_text(encoding="utf-8"), nl=False)
    if any(result.fatal for result in report.results):
        sys.exit(EXIT_DIAGNOSTICS)


@main.command()
@click.argument("tree_path", type=click.Path(exists=True))
@click.option("--risk-config", "risk_config_path", type=click.Path(exists=True), default=None)
@click.option("--impact", "impact_name", type=click.Choice([lv.value for lv in risk.ImpactLevel]),
              default=None, help="Impact level to cross with the computed feasibility.")
def assess(tree_path, risk_config_path, impact_name) -> None:
    """Recompute cumulative feasibility (and optionally risk) for a tree document."""
    config = risk.RiskConfig.load(risk_config_path) if risk_config_path else risk.RiskConfig()
    try:
        tree = tree_mod.from_portable(Path(tree_path).read_bytes())
        propagation = risk.propagate(tree, config)
    except TaraError as exc:
        _fatal("risk", exc)
    level = risk.feasibility_level(propagation.root, config)
    click.echo(f"root cumulative: {propagation.root.as_dict()} (overall {propagation.root.overall()})")
    click.echo(f"feasibility: {level.value}")
    click.echo("most feasible path: " + " ".join(sorted(propagation.most_feasible_path)))
    if impact_name:
        impact = risk.ImpactLevel(impact_name)
        click.echo(f"risk: {risk.risk_level(level, impact)}")


@main.command("export-training")
@click.argument("store_path", type=click.Path(exists=True))
@click.argument("out_path", type=click.Path())
@click.option("--provenance", "provenances", multiple=True,
              type=click.Choice([p.value for p in Provenance]),
              default=[Provenance.EXPERT_CURATED.value], show_default=True)
def export_training(store_path, out_path, provenances) -> None:
    """Export the fine-tuning dataset as line-delimited JSON."""
    store = KnowledgeStore(store_path)
    wanted = [Provenance(p) for p in provenances]
    lines = list(store.export_training_pairs(wanted))
    Path(out_path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    click.echo(f"wrote {len(lines)} training pairs to {out_path}")


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--state-dir", default="state", show_default=True)
@click.option("--knowledge-store", "store_path", default=None)
def serve(port, host, state_dir, store_path) -> None:
    """Start the analyst-facing HTTP API."""
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=state_dir, store_path=store_path)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
