from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from autotara import risk
from autotara.knowledge import KnowledgeStore
from autotara.risk import RiskConfig
from autotara.service import create_app
from autotara.xsam import Provenance


@pytest.fixture()
def client(tmp_path):
    app = create_app(state_dir=tmp_path / "state", synchronous=True)
    with TestClient(app) as client:
        yield client


@pytest.fixture()
def session(client, fig3_bytes):
    model_id = client.post("/models", content=fig3_bytes).json()["model_id"]
    response = client.post("/analyses", json={"model_id": model_id})
    return model_id, response.json()["session_id"]


class TestModels:
    def test_upload_and_get(self, client, fig3_bytes):
        response = client.post("/models", content=fig3_bytes)
        assert response.status_code == 201
        model_id = response.json()["model_id"]
        echo = client.get(f"/models/{model_id}").json()
        assert len(echo["components"]) == 6
        assert echo["scenarios"] == ["S1"]

    def test_upload_is_content_addressed(self, client, fig3_bytes):
        first = client.post("/models", content=fig3_bytes).json()["model_id"]
        second = client.post("/models", content=fig3_bytes).json()["model_id"]
        assert first == second

    def test_invalid_document_is_400(self, client):
        assert client.post("/models", content=b"<broken").status_code == 400
        assert client.post("/models", content=b"<Model id='m'><Widget/></Model>").status_code == 400

    def test_unknown_model_is_404(self, client):
        assert client.get("/models/m-nope").status_code == 404


class TestAnalyses:
    def test_full_run(self, client, session):
        _model_id, session_id = session
        status = client.get(f"/analyses/{session_id}").json()
        assert status["status"] == {"S1": "done"}
        assert status["results"]["S1"]["risk"] == 3

    def test_unknown_scenario_is_404(self, client, fig3_bytes):
        model_id = client.post("/models", content=fig3_bytes).json()["model_id"]
        response = client.post("/analyses", json={"model_id": model_id, "scenario_ids": ["S9"]})
        assert response.status_code == 404

    def test_missing_model_id_is_400(self, client):
        assert client.post("/analyses", json={}).status_code == 400

    def test_report_endpoint(self, client, session):
        _model_id, session_id = session
        report = client.get(f"/reports/{session_id}").json()
        assert report["inspection_candidates"] == ["S1"]
        assert report["results"][0]["status"] == "done"


class TestTrees:
    def test_get_tree_includes_cumulative(self, client, session):
        _model_id, session_id = session
        body = client.get(f"/trees/{session_id}/S1").json()
        assert body["version"] == 1
        root = body["tree"]["root"]
        assert root["type"] == "objective"
        assert root["cumulative"] == {"ET": 4, "SE": 3, "KoIC": 3, "WoO": 1, "Eq": 4}

    def test_patch_and_recompute_engine_parity(self, client, session):
        """Service recompute must equal propagate + risk_level on the same tree."""
        _model_id, session_id = session
        tree_doc = client.get(f"/trees/{session_id}/S1").json()

        def find_leaf(node):
            if node["type"] == "method" and "child" not in node and node["description"].startswith("Access"):
                return node
            for child in node.get("children", []) or ([node["child"]] if "child" in node else []):
                found = find_leaf(child)
                if found:
                    return found
            return None

        jtag = find_leaf(tree_doc["tree"]["root"])
        assert jtag is not None
        patch = client.patch(
            f"/trees/{session_id}/S1/nodes/{jtag['id']}",
            json={
                "version": 1,
                "edit": {"op": "set_step_feasibility", "scores": {"ET": 0, "SE": 0, "KoIC": 0, "WoO": 0, "Eq": 0}},
            },
        )
        assert patch.status_code == 200
        assert patch.json()["version"] == 2
        recomputed = client.post(f"/trees/{session_id}/S1/recompute").json()
        assert recomputed["overall"] == 12  # flood 12 over a free JTAG branch
        assert recomputed["feasibility"] == "High"
        assert recomputed["risk"] == 4

        # independent engine check on the identical document
        raw = client.get(f"/trees/{session_id}/S1").json()
        tree = _tree_from_json(raw["tree"])
        result = risk.propagate(tree, RiskConfig())
        level = risk.feasibility_level(result.root, RiskConfig())
        assert result.root.as_dict() == recomputed["root"]
        assert level.value == recomputed["feasibility"]

    def test_stale_version_token_is_409(self, client, session):
        _model_id, session_id = session
        edit = {"op": "set_logic_kind", "kind": "AND"}
        logic_id = _first_logic_id(client, session_id)
        ok = client.patch(
            f"/trees/{session_id}/S1/nodes/{logic_id}", json={"version": 1, "edit": edit}
        )
        assert ok.status_code == 200
        stale = client.patch(
            f"/trees/{session_id}/S1/nodes/{logic_id}", json={"version": 1, "edit": edit}
        )
        assert stale.status_code == 409

    def test_unknown_node_is_404(self, client, session):
        _model_id, session_id = session
        response = client.patch(
            f"/trees/{session_id}/S1/nodes/AM-999",
            json={"version": 1, "edit": {"op": "remove_node"}},
        )
        assert response.status_code == 404

    def test_bad_edit_is_400(self, client, session):
        _model_id, session_id = session
        response = client.patch(
            f"/trees/{session_id}/S1/nodes/AO-1",
            json={"version": 1, "edit": {"op": "set_logic_kind", "kind": "AND"}},
        )
        assert response.status_code == 400


class TestCorrections:
    def test_correction_lands_with_enterprise_provenance(self, client, tmp_path, session):
        payload = {
            "key_text": "gateway with JTAG",
            "sub_tree": '<Method id="m1" category="interface_access" description="Access via JTAG" />',
            "step_feasibility": {"m1": {"ET": 4, "SE": 6, "KoIC": 7, "WoO": 4, "Eq": 7}},
        }
        response = client.post("/knowledge/corrections", json=payload)
        assert response.status_code == 201
        record_id = response.json()["record_id"]
        store = KnowledgeStore(tmp_path / "state" / "knowledge")
        assert store.get(record_id).annotation.provenance is Provenance.ENTERPRISE_CORRECTION

    def test_dangling_method_id_is_400(self, client):
        payload = {
            "key_text": "gateway",
            "sub_tree": '<Method id="m1" category="other" description="x" />',
            "step_feasibility": {"ghost": {"ET": 0, "SE": 0, "KoIC": 0, "WoO": 0, "Eq": 0}},
        }
        response = client.post("/knowledge/corrections", json=payload)
        assert response.status_code == 400
        assert "InvalidAnnotation" in response.json()["error"]


class TestPersistence:
    def test_sessions_survive_restart(self, tmp_path, fig3_bytes):
        state_dir = tmp_path / "state"
        with TestClient(create_app(state_dir=state_dir, synchronous=True)) as client:
            model_id = client.post("/models", content=fig3_bytes).json()["model_id"]
            session_id = client.post("/analyses", json={"model_id": model_id}).json()["session_id"]
        with TestClient(create_app(state_dir=state_dir, synchronous=True)) as reborn:
            status = reborn.get(f"/analyses/{session_id}").json()
            assert status["status"] == {"S1": "done"}
            tree = reborn.get(f"/trees/{session_id}/S1").json()
            assert tree["tree"]["root"]["type"] == "objective"


def _first_logic_id(client, session_id) -> str:
    body = client.get(f"/trees/{session_id}/S1").json()

    def walk(node):
        if node["type"] == "logic":
            return node["id"]
        for child in node.get("children", []) or ([node["child"]] if "child" in node else []):
            found = walk(child)
            if found:
                return found
        return None

    return walk(body["tree"]["root"])


def _tree_from_json(doc: dict):
    """Local JSON -> dataclass mirror used only to cross-check engine parity."""
    from autotara.risk import FeasibilityVector
    from autotara.tree import (
        AttackMethod,
        AttackObjective,
        AttackTree,
        LogicKind,
        LogicNode,
        MethodCategory,
    )

    def node(n):
        if n["type"] == "objective":
            return AttackObjective(id=n["id"], text=n["text"], component=n["component"], child=node(n["child"]))
        if n["type"] == "logic":
            return LogicNode(id=n["id"], kind=LogicKind(n["kind"]), children=tuple(node(c) for c in n["children"]))
        vector = FeasibilityVector.from_dict(n["step_feasibility"]) if "step_feasibility" in n else None
        child = node(n["child"]) if "child" in n else None
        return AttackMethod(
            id=n["id"],
            description=n["description"],
            category=MethodCategory(n["category"]),
            related_channel=n.get("related_channel"),
            step_feasibility=vector,
            child=child,
        )

    root = node(doc["root"])
    return AttackTree(scenario_id=doc["scenario_id"], objective=doc["objective"], root=root)
