// Mirrors of the service's JSON payloads. All vectors and levels in these
// shapes originate server-side; the client only displays them.

export type FeasibilityScores = {
  ET: number;
  SE: number;
  KoIC: number;
  WoO: number;
  Eq: number;
};

export type ObjectiveNode = {
  type: "objective";
  id: string;
  text: string;
  component: string;
  child: TreeNode;
  cumulative?: FeasibilityScores;
};

export type LogicNode = {
  type: "logic";
  id: string;
  kind: "AND" | "OR";
  children: TreeNode[];
  cumulative?: FeasibilityScores;
};

export type MethodNode = {
  type: "method";
  id: string;
  description: string;
  category: string;
  related_channel?: string;
  step_feasibility?: FeasibilityScores;
  rationale?: string;
  child?: TreeNode;
  cumulative?: FeasibilityScores;
};

export type TreeNode = ObjectiveNode | LogicNode | MethodNode;

export type TreeDocument = {
  scenario_id: string;
  objective: string;
  root: TreeNode;
};

export type TreeResponse = {
  version: number;
  tree: TreeDocument;
};

export type PatchResponse = {
  version: number;
  warnings: string[];
  tree: TreeDocument;
};

export type RecomputeResult = {
  cumulative: Record<string, FeasibilityScores>;
  root: FeasibilityScores;
  overall: number;
  feasibility: string;
  most_feasible_path: string[];
  impact?: string;
  risk?: number;
  version: number;
};

export type ScenarioResult = {
  scenario_id: string;
  status: string;
  risk?: number;
  feasibility?: string;
  impact?: string;
  overall?: number;
  most_feasible_path?: string[];
  diagnostics?: string[];
};

export type AnalysisStatus = {
  session_id: string;
  model_id: string;
  status: Record<string, string>;
  results: Record<string, Omit<ScenarioResult, "scenario_id" | "status">>;
};

export type ReportResponse = {
  session_id: string;
  model_id: string;
  results: ScenarioResult[];
  inspection_candidates: string[];
};

export type ModelInfo = {
  model_id: string;
  name: string;
  components: string[];
  channels: string[];
  scenarios: string[];
  document: string;
};

export type EditOp =
  | { op: "set_step_feasibility"; scores: FeasibilityScores }
  | { op: "set_logic_kind"; kind: "AND" | "OR" }
  | { op: "set_description"; description: string }
  | { op: "remove_node" };

export type CorrectionPayload = {
  key_text: string;
  sub_tree: string;
  step_feasibility: Record<string, FeasibilityScores>;
  impact?: Record<string, string>;
  source_doc?: string;
};

export function* walk(node: TreeNode): Generator<TreeNode> {
  yield node;
  if (node.type === "logic") {
    for (const child of node.children) yield* walk(child);
  } else if (node.child) {
    yield* walk(node.child);
  }
}

export function findNode(doc: TreeDocument, id: string): TreeNode | undefined {
  for (const node of walk(doc.root)) {
    if (node.id === id) return node;
  }
  return undefined;
}
