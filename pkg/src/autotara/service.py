"""HTTP API exposing the pipeline and the analyst correction loop.

Sessions are persisted to the state directory so restarts keep results.
PATCH is the only mutating tree verb; edits are serialized behind a
per-app lock with optimistic version tokens (stale token -> 409).
"""
from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import pipeline, risk, tree as tree_mod, xsam
from .backends import AgentBackend, FixtureBackend, HttpChatBackend
from .errors import (
    BackendFailure,
    InvalidAnnotation,
    InvariantBreach,
    MalformedXml,
    SchemaViolation,
    TaraError,
    UnknownNode,
)
from .knowledge import KnowledgeStore
from .risk import FeasibilityVector, ImpactLevel, ImpactVector, RiskConfig
from .tree import AttackObjective, AttackTree, LogicNode, TreeNode
from .xsam import Provenance


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        self.message = message
        super().__init__(message)


@dataclass
class TreeState:
    tree: AttackTree
    version: int
    impact: ImpactLevel | None


@dataclass
class AnalysisSession:
    session_id: str
    model_id: str
    status: dict[str, str]  # scenario id -> pending|running|done|failed
    results: dict[str, dict] = field(default_factory=dict)
    trees: dict[str, TreeState] = field(default_factory=dict)

    @property
    def running(self) -> bool:
        return any(s in ("pending", "running") for s in self.status.values())


def _tree_to_json(tree: AttackTree, cumulative: dict[str, FeasibilityVector] | None = None) -> dict:
    def node(n: TreeNode) -> dict:
        if isinstance(n, AttackObjective):
            out: dict[str, Any] = {
                "type": "objective",
                "id": n.id,
                "text": n.text,
                "component": n.component,
                "child": node(n.child),
            }
        elif isinstance(n, LogicNode):
            out = {
                "type": "logic",
                "id": n.id,
                "kind": n.kind.value,
                "children": [node(c) for c in n.children],
            }
        else:
            out = {
                "type": "method",
                "id": n.id,
                "description": n.description,
                "category": n.category.value,
            }
            if n.related_channel is not None:
                out["related_channel"] = n.related_channel
            if n.step_feasibility is not None:
                out["step_feasibility"] = n.step_feasibility.as_dict()
            if n.rationale:
                out["rationale"] = n.rationale
            if n.child is not None:
                out["child"] = node(n.child)
        if cumulative and n.id in cumulative:
            out["cumulative"] = cumulative[n.id].as_dict()
        return out

    return {
        "scenario_id": tree.scenario_id,
        "objective": tree.objective,
        "root": node(tree.root),
    }


def _recompute_payload(tree: AttackTree, impact: ImpactLevel | None, config: RiskConfig) -> dict:
    propagation = risk.propagate(tree, config)
    feasibility = risk.feasibility_level(propagation.root, config)
    payload: dict[str, Any] = {
        "cumulative": {nid: v.as_dict() for nid, v in propagation.cumulative.items()},
        "root": propagation.root.as_dict(),
        "overall": propagation.root.overall(),
        "feasibility": feasibility.value,
        "most_feasible_path": sorted(propagation.most_feasible_path),
    }
    if impact is not None:
        payload["impact"] = impact.value
        payload["risk"] = risk.risk_level(feasibility, impact)
    return payload


class ServiceState:
    """All mutable server state, persisted write-through under state_dir."""

    def __init__(self, state_dir: str | Path, store: KnowledgeStore, backend: AgentBackend,
                 config: RiskConfig):
        self.dir = Path(state_dir)
        (self.dir / "models").mkdir(parents=True, exist_ok=True)
        (self.dir / "sessions").mkdir(parents=True, exist_ok=True)
        self.store = store
        self.backend = backend
        self.config = config
        self.lock = threading.Lock()
        self.models: dict[str, xsam.SystemModel] = {}
        self.sessions: dict[str, AnalysisSession] = {}
        self._reload()

    # -- persistence -------------------------------------------------------

    def _reload(self) -> None:
        for path in sorted((self.dir / "models").glob("*.xml")):
            try:
                self.models[path.stem] = xsam.parse(path.read_bytes())
            except TaraError:
                continue
        for meta_path in sorted((self.dir / "sessions").glob("*/meta.json")):
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            session = AnalysisSession(
                session_id=meta["session_id"],
                model_id=meta["model_id"],
                status=meta["status"],
                results=meta.get("results", {}),
            )
            # interrupted runs cannot resume after a restart
            for sid, status in session.status.items():
                if status in ("pending", "running"):
                    session.status[sid] = "failed"
                    session.results.setdefault(sid, {})["diagnostics"] = ["interrupted by restart"]
            for tree_path in sorted(meta_path.parent.glob("trees/*.xml")):
                scenario = tree_path.stem
                tree = tree_mod.from_portable(tree_path.read_bytes())
                impact_name = session.results.get(scenario, {}).get("impact")
                session.trees[scenario] = TreeState(
                    tree=tree,
                    version=meta.get("versions", {}).get(scenario, 1),
                    impact=ImpactLevel(impact_name) if impact_name else None,
                )
            self.sessions[session.session_id] = session

    def persist_session(self, session: AnalysisSession) -> None:
        base = self.dir / "sessions" / session.session_id
        (base / "trees").mkdir(parents=True, exist_ok=True)
        meta = {
            "session_id": session.session_id,
            "model_id": session.model_id,
            "status": session.status,
            "results": session.results,
            "versions": {sid: ts.version for sid, ts in session.trees.items()},
        }
        (base / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
        for scenario, state in session.trees.items():
            (base / "trees" / f"{scenario}.xml").write_bytes(tree_mod.to_portable(state.tree))

    # -- lookups -----------------------------------------------------------

    def model(self, model_id: str) -> xsam.SystemModel:
        try:
            return self.models[model_id]
        except KeyError:
            raise ApiError(404, f"unknown model '{model_id}'")

    def session(self, session_id: str) -> AnalysisSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise ApiError(404, f"unknown analysis session '{session_id}'")

    def tree_state(self, session_id: str, scenario_id: str) -> tuple[AnalysisSession, TreeState]:
        session = self.session(session_id)
        state = session.trees.get(scenario_id)
        if state is None:
            raise ApiError(404, f"no tree for scenario '{scenario_id}' in session '{session_id}'")
        return session, state

    # -- analysis ----------------------------------------------------------

    def run_analysis(self, session: AnalysisSession, scenario_ids: list[str]) -> None:
        model = self.models[session.model_id]
        for scenario_id in scenario_ids:
            with self.lock:
                session.status[scenario_id] = "running"
                self.persist_session(session)
            scenario = model.scenario(scenario_id)
            try:
                result = pipeline.run_scenario(model, scenario, self.backend,
                                               pipeline.PipelineConfig(risk=self.config),
                                               store=self.store)
            except Exception as exc:  # analysis failures must not kill the worker
                with self.lock:
                    session.status[scenario_id] = "failed"
                    session.results[scenario_id] = {"diagnostics": [f"{exc.__class__.__name__}: {exc}"]}
                    self.persist_session(session)
                continue
            with self.lock:
                if result.fatal:
                    session.status[scenario_id] = "failed"
                    session.results[scenario_id] = {"diagnostics": list(result.diagnostics)}
                else:
                    session.status[scenario_id] = "done"
                    session.results[scenario_id] = {
                        "risk": result.risk,
                        "feasibility": result.feasibility.value,
                        "impact": result.impact.value,
                        "overall": result.root_vector.overall(),
                        "most_feasible_path": sorted(result.most_feasible_path),
                        "diagnostics": list(result.diagnostics),
                    }
                    session.trees[scenario_id] = TreeState(
                        tree=result.attack_tree, version=1, impact=result.impact
                    )
                self.persist_session(session)


def create_app(
    state_dir: str | Path = "state",
    store_path: str | Path | None = None,
    backend: AgentBackend | None = None,
    risk_config: RiskConfig | None = None,
    synchronous: bool = False,
) -> FastAPI:
    """Build the API application.

    ``synchronous`` runs analyses inline on the request thread; useful for
    tests that want a completed session right after POST /analyses.
    """
    store = KnowledgeStore(store_path or Path(state_dir) / "knowledge")
    state = ServiceState(state_dir, store, backend or FixtureBackend(), risk_config or RiskConfig())
    app = FastAPI(title="autotara", version="0.1.0")
    app.state.engine = state

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    def _json_body(raw: bytes) -> dict:
        try:
            body = json.loads(raw) if raw else {}
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"request body is not valid JSON: {exc}")
        if not isinstance(body, dict):
            raise ApiError(400, "request body must be a JSON object")
        return body

    # -- models ------------------------------------------------------------

    @app.post("/models", status_code=201)
    async def upload_model(request: Request):
        raw = await request.body()
        try:
            model = xsam.parse(raw)
        except (MalformedXml, SchemaViolation) as exc:
            raise ApiError(400, str(exc))
        diagnostics = xsam.validate(model)
        errors = [d.message for d in diagnostics if d.severity == "error"]
        if errors:
            raise ApiError(400, "; ".join(errors))
        model_id = "m-" + hashlib.sha256(xsam.serialize(model)).hexdigest()[:12]
        with state.lock:
            state.models[model_id] = model
            (state.dir / "models" / f"{model_id}.xml").write_bytes(xsam.serialize(model))
        return {"model_id": model_id}

    @app.get("/models/{model_id}")
    async def get_model(model_id: str):
        model = state.model(model_id)
        return {
            "model_id": model_id,
            "name": model.name,
            "components": [c.id for c in model.components],
            "channels": [c.id for c in model.channels],
            "scenarios": [s.id for s in model.scenarios],
            "document": xsam.serialize(model).decode("utf-8"),
        }

    # -- analyses ----------------------------------------------------------

    @app.post("/analyses", status_code=202)
    async def start_analysis(request: Request):
        body = _json_body(await request.body())
        model_id = body.get("model_id")
        if not model_id:
            raise ApiError(400, "missing 'model_id'")
        model = state.model(model_id)
        known = {s.id for s in model.scenarios}
        scenario_ids = body.get("scenario_ids") or sorted(known)
        unknown = [s for s in scenario_ids if s not in known]
        if unknown:
            raise ApiError(404, f"unknown scenarios: {', '.join(unknown)}")
        backend_name = body.get("backend", "fixture")
        if backend_name == "fixture":
            pass  # the app-level backend already is the fixture unless injected
        elif backend_name == "live":
            base_url, model_name = body.get("base_url"), body.get("model")
            if not base_url or not model_name:
                raise ApiError(400, "live backend requires 'base_url' and 'model'")
            state.backend = HttpChatBackend(base_url=base_url, model=model_name)
        else:
            raise ApiError(400, f"unknown backend '{backend_name}'")
        session = AnalysisSession(
            session_id="a-" + uuid.uuid4().hex[:12],
            model_id=model_id,
            status={sid: "pending" for sid in scenario_ids},
        )
        with state.lock:
            state.sessions[session.session_id] = session
            state.persist_session(session)
        if synchronous:
            state.run_analysis(session, scenario_ids)
        else:
            worker = threading.Thread(
                target=state.run_analysis, args=(session, scenario_ids), daemon=True
            )
            worker.start()
        return {"session_id": session.session_id}

    @app.get("/analyses/{session_id}")
    async def get_analysis(session_id: str):
        session = state.session(session_id)
        with state.lock:
            return {
                "session_id": session.session_id,
                "model_id": session.model_id,
                "status": dict(session.status),
                "results": json.loads(json.dumps(session.results)),
            }

    # -- trees -------------------------------------------------------------

    @app.get("/trees/{session_id}/{scenario_id}")
    async def get_tree(session_id: str, scenario_id: str):
        with state.lock:
            _session, tree_state = state.tree_state(session_id, scenario_id)
            propagation = risk.propagate(tree_state.tree, state.config)
            return {
                "version": tree_state.version,
                "tree": _tree_to_json(tree_state.tree, dict(propagation.cumulative)),
            }

    @app.patch("/trees/{session_id}/{scenario_id}/nodes/{node_id}")
    async def patch_node(session_id: str, scenario_id: str, node_id: str, request: Request):
        body = _json_body(await request.body())
        edit = body.get("edit")
        if not isinstance(edit, dict) or "op" not in edit:
            raise ApiError(400, "missing 'edit' object with an 'op'")
        with state.lock:
            session, tree_state = state.tree_state(session_id, scenario_id)
            if session.running:
                raise ApiError(409, "analysis is still running; retry when it completes")
            if body.get("version") != tree_state.version:
                raise ApiError(409, f"stale version token (current {tree_state.version})")
            try:
                edited = tree_mod.edit_node(tree_state.tree, node_id, edit)
            except UnknownNode as exc:
                raise ApiError(404, str(exc))
            except (InvariantBreach, KeyError, ValueError) as exc:
                raise ApiError(400, f"invalid edit: {exc}")
            tree_state.tree = edited.tree
            tree_state.version += 1
            state.persist_session(session)
            return {
                "version": tree_state.version,
                "warnings": list(edited.warnings),
                "tree": _tree_to_json(tree_state.tree),
            }

    @app.post("/trees/{session_id}/{scenario_id}/recompute")
    async def recompute(session_id: str, scenario_id: str):
        with state.lock:
            _session, tree_state = state.tree_state(session_id, scenario_id)
            try:
                payload = _recompute_payload(tree_state.tree, tree_state.impact, state.config)
            except TaraError as exc:
                raise ApiError(400, str(exc))
            payload["version"] = tree_state.version
            return payload

    # -- knowledge ---------------------------------------------------------

    @app.post("/knowledge/corrections", status_code=201)
    async def submit_correction(request: Request):
        body = _json_body(await request.body())
        key_text = body.get("key_text", "")
        sub_tree = body.get("sub_tree", "")
        steps = body.get("step_feasibility", {})
        if not isinstance(steps, dict):
            raise ApiError(400, "'step_feasibility' must map method ids to score objects")
        try:
            vectors = tuple(
                (method, FeasibilityVector.from_dict(scores))
                for method, scores in sorted(steps.items())
            )
            impact_raw = body.get("impact")
            impact = ImpactVector.from_dict(impact_raw) if impact_raw else None
            annotation = xsam.KnowledgeAnnotation(
                sub_tree=sub_tree,
                step_feasibility=vectors,
                impact=impact,
                provenance=Provenance.ENTERPRISE_CORRECTION,
                timestamp=body.get("timestamp", ""),
            )
            record_id = state.store.ingest(key_text, annotation, source_doc=body.get("source_doc", ""))
        except (InvalidAnnotation, SchemaViolation, KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, f"{exc.__class__.__name__}: {exc}")
        return {"record_id": record_id}

    # -- reports -----------------------------------------------------------

    @app.get("/reports/{session_id}")
    async def get_report(session_id: str):
        session = state.session(session_id)
        with state.lock:
            results = []
            for scenario_id, status in session.status.items():
                entry = {"scenario_id": scenario_id, "status": status}
                entry.update(session.results.get(scenario_id, {}))
                results.append(entry)
            done = [r for r in results if r["status"] == "done"]
            candidates = sorted(
                (r["scenario_id"] for r in done if r.get("risk", 0) >= risk.INSPECTION_THRESHOLD),
                key=lambda sid: (-next(r["risk"] for r in done if r["scenario_id"] == sid), sid),
            )
            return {
                "session_id": session.session_id,
                "model_id": session.model_id,
                "results": results,
                "inspection_candidates": candidates,
            }

    @app.exception_handler(BackendFailure)
    async def _backend_failure(_request: Request, exc: BackendFailure):
        return JSONResponse(
            status_code=502,
            content={"error": str(exc), "retry": True},
        )

    return app
