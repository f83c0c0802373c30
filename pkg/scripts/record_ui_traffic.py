"""Record real service API traffic for the frontend's engine-parity test.

Drives the FastAPI app through a test client, captures every request and
response verbatim, then runs the CLI ``assess`` command on the persisted
(patched) tree document so the frontend test can compare the recomputed
root level against an independent code path.

Usage: python3 scripts/record_ui_traffic.py [--out frontend/test/traffic.json]
"""
from __future__ import annotations

import argparse
import json
import re
import tempfile
from pathlib import Path

from click.testing import CliRunner
from fastapi.testclient import TestClient

from autotara.cli import main as cli_main
from autotara.service import create_app

REPO = Path(__file__).resolve().parent.parent

EDITED_LEAF_PREFIX = "Reverse-engineer"
EDITED_SCORES = {"ET": 1, "SE": 3, "KoIC": 3, "WoO": 0, "Eq": 0}  # lowers ET 4 -> 1

CORRECTION = {
    "key_text": "gateway with JTAG debug port",
    "sub_tree": '<Method id="m1" category="interface_access" description="Access via JTAG" />',
    "step_feasibility": {"m1": {"ET": 4, "SE": 6, "KoIC": 7, "WoO": 4, "Eq": 7}},
}


def _find_method(node: dict, prefix: str) -> dict | None:
    if node["type"] == "method" and node["description"].startswith(prefix):
        return node
    children = node.get("children", []) or ([node["child"]] if node.get("child") else [])
    for child in children:
        found = _find_method(child, prefix)
        if found:
            return found
    return None


def record(out_path: Path) -> None:
    fixture = (REPO / "fixtures" / "fig3.xsam").read_bytes()
    interactions: list[dict] = []

    with tempfile.TemporaryDirectory() as tmp:
        state_dir = Path(tmp) / "state"
        client = TestClient(create_app(state_dir=state_dir, synchronous=True))

        def call(method: str, path: str, *, content: bytes | None = None, body: dict | None = None):
            kwargs = {}
            if content is not None:
                kwargs["content"] = content
            if body is not None:
                kwargs["json"] = body
            response = client.request(method, path, **kwargs)
            interactions.append(
                {
                    "request": {
                        "method": method,
                        "path": path,
                        "body": content.decode("utf-8") if content is not None else body,
                    },
                    "response": {"status": response.status_code, "body": response.json()},
                }
            )
            return response.json()

        model_id = call("POST", "/models", content=fixture)["model_id"]
        call("GET", f"/models/{model_id}")
        session_id = call("POST", "/analyses", body={"model_id": model_id})["session_id"]
        call("GET", f"/analyses/{session_id}")
        call("GET", f"/reports/{session_id}")
        tree = call("GET", f"/trees/{session_id}/S1")
        leaf = _find_method(tree["tree"]["root"], EDITED_LEAF_PREFIX)
        assert leaf is not None, f"no method starting with {EDITED_LEAF_PREFIX!r} in the tree"
        call(
            "PATCH",
            f"/trees/{session_id}/S1/nodes/{leaf['id']}",
            body={
                "version": tree["version"],
                "edit": {"op": "set_step_feasibility", "scores": EDITED_SCORES},
            },
        )
        recomputed = call("POST", f"/trees/{session_id}/S1/recompute")
        call("GET", f"/trees/{session_id}/S1")
        # a stale token must yield the conflict the UI shows as a banner
        call(
            "PATCH",
            f"/trees/{session_id}/S1/nodes/{leaf['id']}",
            body={
                "version": tree["version"],
                "edit": {"op": "set_step_feasibility", "scores": EDITED_SCORES},
            },
        )
        call("POST", "/knowledge/corrections", body=CORRECTION)

        # independent path: CLI `assess` on the identical persisted document
        tree_doc = state_dir / "sessions" / session_id / "trees" / "S1.xml"
        result = CliRunner().invoke(
            cli_main, ["assess", str(tree_doc), "--impact", recomputed["impact"]]
        )
        assert result.exit_code == 0, result.output
        overall = int(re.search(r"overall (\d+)", result.output).group(1))
        feasibility = re.search(r"feasibility: (\w+)", result.output).group(1)
        risk = int(re.search(r"risk: (\d+)", result.output).group(1))

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(
            {
                "model_id": model_id,
                "session_id": session_id,
                "edited_node": leaf["id"],
                "interactions": interactions,
                "cli_assess": {
                    "command": f"autotara assess <session>/trees/S1.xml --impact {recomputed['impact']}",
                    "overall": overall,
                    "feasibility": feasibility,
                    "risk": risk,
                    "output": result.output,
                },
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"recorded {len(interactions)} interactions to {out_path}")
    print(f"cli assess: overall {overall}, feasibility {feasibility}, risk {risk}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=REPO / "frontend" / "test" / "traffic.json")
    record(parser.parse_args().out)
