// Browser bootstrap: wires the API client, view state and renderers onto
// the page. Kept thin and untested; all logic lives in the other modules.

import { ApiClient, ConflictError, type FetchLike } from "./api.js";
import {
  applyConflict,
  applyPatchResponse,
  applyRecompute,
  initialState,
  reloadFromServer,
  rootRiskBadge,
  selectNode,
  stageEdit,
  toggleCollapsed,
  type TreeViewState,
} from "./state.js";
import {
  renderConflictBanner,
  renderMatrixEditor,
  renderOutline,
  renderRiskBadge,
  renderWarnings,
} from "./render.js";
import { findNode, type FeasibilityScores } from "./types.js";

const browserFetch: FetchLike = (url, init) => fetch(url, init);
const client = new ApiClient(window.location.origin, browserFetch);

let state: TreeViewState | null = null;
let session = { id: "", scenario: "" };

function draw(): void {
  if (state === null) return;
  const highlight = new Set(state.lastRecompute?.most_feasible_path ?? []);
  byId("badge").innerHTML = renderRiskBadge(rootRiskBadge(state));
  byId("conflict").innerHTML = renderConflictBanner(state.conflict);
  byId("warnings").innerHTML = renderWarnings(state.warnings);
  byId("tree").innerHTML = renderOutline(state.tree.root, {
    collapsed: state.collapsed,
    selectedId: state.selectedNodeId,
    highlight,
  });
  const selected = state.selectedNodeId ? findNode(state.tree, state.selectedNodeId) : undefined;
  byId("editor").innerHTML =
    selected?.type === "method" && selected.step_feasibility
      ? renderMatrixEditor(selected.id, selected.step_feasibility)
      : "";
}

function byId(id: string): HTMLElement {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing #${id}`);
  return element;
}

async function loadTree(sessionId: string, scenarioId: string): Promise<void> {
  session = { id: sessionId, scenario: scenarioId };
  state = initialState(await client.getTree(sessionId, scenarioId));
  draw();
}

async function saveScores(nodeId: string, scores: FeasibilityScores): Promise<void> {
  if (state === null) return;
  const edit = { op: "set_step_feasibility" as const, scores };
  state = stageEdit(state, nodeId, edit);
  try {
    const patched = await client.patchNode(session.id, session.scenario, nodeId, state.version, edit);
    state = applyPatchResponse(state, nodeId, patched);
    state = applyRecompute(state, await client.recompute(session.id, session.scenario));
  } catch (error) {
    if (error instanceof ConflictError) state = applyConflict(state, error.message);
    else throw error;
  }
  draw();
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (state === null) return;
  if (target.dataset.toggle) {
    state = toggleCollapsed(state, target.dataset.toggle);
    draw();
  } else if (target.dataset.select) {
    state = selectNode(state, target.dataset.select);
    draw();
  } else if (target.dataset.action === "reload") {
    void client.getTree(session.id, session.scenario).then((response) => {
      state = reloadFromServer(state!, response);
      draw();
    });
  }
});

document.addEventListener("change", (event) => {
  const target = event.target as HTMLSelectElement;
  if (state === null || !target.dataset.node || !target.dataset.dim) return;
  const node = findNode(state.tree, target.dataset.node);
  if (node?.type !== "method" || !node.step_feasibility) return;
  const scores = { ...node.step_feasibility, [target.dataset.dim]: Number(target.value) };
  void saveScores(node.id, scores);
});

const params = new URLSearchParams(window.location.search);
const sessionId = params.get("session");
const scenarioId = params.get("scenario");
if (sessionId && scenarioId) void loadTree(sessionId, scenarioId);

export { loadTree };
