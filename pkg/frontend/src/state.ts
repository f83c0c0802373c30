// Tree-editor view state. Invariant: every displayed vector or level in
// this module is copied from a service response — nothing is computed here.

import type {
  EditOp,
  FeasibilityScores,
  PatchResponse,
  RecomputeResult,
  TreeDocument,
  TreeResponse,
} from "./types.js";

export type RiskBadge = {
  overall: number;
  feasibility: string;
  impact?: string;
  risk?: number;
};

export type TreeViewState = {
  tree: TreeDocument;
  version: number;
  selectedNodeId: string | null;
  dirtyEdits: Map<string, EditOp>;
  lastRecompute: RecomputeResult | null;
  conflict: { banner: string; needsReload: boolean } | null;
  collapsed: Set<string>;
  warnings: string[];
};

export function initialState(response: TreeResponse): TreeViewState {
  return {
    tree: response.tree,
    version: response.version,
    selectedNodeId: null,
    dirtyEdits: new Map(),
    lastRecompute: null,
    conflict: null,
    collapsed: new Set(),
    warnings: [],
  };
}

export function selectNode(state: TreeViewState, nodeId: string | null): TreeViewState {
  return { ...state, selectedNodeId: nodeId };
}

export function toggleCollapsed(state: TreeViewState, nodeId: string): TreeViewState {
  const collapsed = new Set(state.collapsed);
  if (collapsed.has(nodeId)) collapsed.delete(nodeId);
  else collapsed.add(nodeId);
  return { ...state, collapsed };
}

export function stageEdit(state: TreeViewState, nodeId: string, edit: EditOp): TreeViewState {
  const dirtyEdits = new Map(state.dirtyEdits);
  dirtyEdits.set(nodeId, edit);
  return { ...state, dirtyEdits };
}

/** A successful PATCH replaces the tree, bumps the token and clears the
 *  staged edit; the previous recompute is stale until the next one lands. */
export function applyPatchResponse(
  state: TreeViewState,
  nodeId: string,
  response: PatchResponse,
): TreeViewState {
  const dirtyEdits = new Map(state.dirtyEdits);
  dirtyEdits.delete(nodeId);
  return {
    ...state,
    tree: response.tree,
    version: response.version,
    dirtyEdits,
    lastRecompute: null,
    warnings: response.warnings,
    conflict: null,
  };
}

export function applyRecompute(state: TreeViewState, result: RecomputeResult): TreeViewState {
  return { ...state, lastRecompute: result };
}

/** A 409 from the service: show a banner and force a reload before editing. */
export function applyConflict(state: TreeViewState, message: string): TreeViewState {
  return { ...state, conflict: { banner: message, needsReload: true } };
}

export function reloadFromServer(state: TreeViewState, response: TreeResponse): TreeViewState {
  return {
    ...state,
    tree: response.tree,
    version: response.version,
    dirtyEdits: new Map(),
    lastRecompute: null,
    conflict: null,
  };
}

/** The root badge shown next to the scenario title. Sourced exclusively
 *  from the last server recompute; before one exists there is no badge. */
export function rootRiskBadge(state: TreeViewState): RiskBadge | null {
  const last = state.lastRecompute;
  if (last === null) return null;
  return {
    overall: last.overall,
    feasibility: last.feasibility,
    impact: last.impact,
    risk: last.risk,
  };
}

/** Per-node cumulative vector for display: taken from the last recompute
 *  when fresh, otherwise from the annotated tree the server sent. */
export function displayedCumulative(
  state: TreeViewState,
  nodeId: string,
): FeasibilityScores | undefined {
  if (state.lastRecompute) return state.lastRecompute.cumulative[nodeId];
  for (const node of nodesOf(state.tree)) {
    if (node.id === nodeId) return node.cumulative;
  }
  return undefined;
}

function* nodesOf(tree: TreeDocument) {
  const stack = [tree.root];
  while (stack.length > 0) {
    const node = stack.pop()!;
    yield node;
    if (node.type === "logic") stack.push(...node.children);
    else if (node.child) stack.push(node.child);
  }
}
