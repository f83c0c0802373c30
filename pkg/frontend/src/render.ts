// Pure HTML-string renderers. Keeping these DOM-free makes them testable
// under node without a browser; main.ts injects the strings into the page.
// No vector or level is ever derived here — only formatted.

import type { RiskBadge } from "./state.js";
import type { FeasibilityScores, ScenarioResult, TreeNode } from "./types.js";

export const DIMENSIONS = ["ET", "SE", "KoIC", "WoO", "Eq"] as const;

// Display order for the distribution matrix, hardest first.
export const FEASIBILITY_LEVELS = ["High", "Medium", "Low", "VeryLow"] as const;
export const IMPACT_LEVELS = ["Serious", "Major", "Moderate", "Negligible"] as const;

// Allowed dropdown values per dimension; mirrors the server's default
// value sets (the server snaps anything else anyway).
export const VALUE_SETS: Record<(typeof DIMENSIONS)[number], number[]> = {
  ET: [0, 1, 4, 10, 19],
  SE: [0, 3, 6, 8],
  KoIC: [0, 3, 7, 11],
  WoO: [0, 1, 4, 10],
  Eq: [0, 4, 7, 9],
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function riskColor(risk: number | undefined): string {
  switch (risk) {
    case 5:
      return "#c0392b";
    case 4:
      return "#e74c3c";
    case 3:
      return "#f39c12";
    case 2:
      return "#f1c40f";
    case 1:
      return "#27ae60";
    default:
      return "#888";
  }
}

export function renderRiskBadge(badge: RiskBadge | null): string {
  if (badge === null) {
    return '<span class="risk-badge pending">not yet recomputed</span>';
  }
  const risk = badge.risk !== undefined ? `risk ${badge.risk}` : "risk n/a";
  const impact = badge.impact !== undefined ? `, impact ${escapeHtml(badge.impact)}` : "";
  return (
    `<span class="risk-badge" style="background:${riskColor(badge.risk)}">` +
    `${risk} (${escapeHtml(badge.feasibility)}, overall ${badge.overall}${impact})</span>`
  );
}

export type OutlineOptions = {
  collapsed: Set<string>;
  selectedId: string | null;
  /** node ids on the most feasible path, as reported by the server */
  highlight: Set<string>;
};

function nodeLabel(node: TreeNode): string {
  if (node.type === "objective") {
    return `<b>${escapeHtml(node.component)}</b>: ${escapeHtml(node.text)}`;
  }
  if (node.type === "logic") {
    return `<b class="logic-kind">${node.kind}</b>`;
  }
  const channel = node.related_channel ? ` <i>(channel ${escapeHtml(node.related_channel)})</i>` : "";
  return `${escapeHtml(node.description)}${channel}`;
}

function nodeChildren(node: TreeNode): TreeNode[] {
  if (node.type === "logic") return node.children;
  return node.child ? [node.child] : [];
}

export function renderOutline(root: TreeNode, options: OutlineOptions): string {
  const render = (node: TreeNode): string => {
    const classes = ["node", node.type];
    if (options.highlight.has(node.id)) classes.push("most-feasible");
    if (options.selectedId === node.id) classes.push("selected");
    const children = nodeChildren(node);
    const isCollapsed = options.collapsed.has(node.id);
    const toggle =
      children.length > 0
        ? `<button class="toggle" data-toggle="${node.id}">${isCollapsed ? "+" : "−"}</button>`
        : '<span class="toggle leaf"></span>';
    const body =
      children.length > 0 && !isCollapsed
        ? `<ul>${children.map(render).join("")}</ul>`
        : "";
    return (
      `<li class="${classes.join(" ")}" data-id="${node.id}">` +
      `${toggle}<span class="label" data-select="${node.id}">${nodeLabel(node)}</span>${body}</li>`
    );
  };
  return `<ul class="outline">${render(root)}</ul>`;
}

export function renderMatrixEditor(nodeId: string, scores: FeasibilityScores): string {
  const rows = DIMENSIONS.map((dim) => {
    const options = VALUE_SETS[dim]
      .map(
        (value) =>
          `<option value="${value}"${value === scores[dim] ? " selected" : ""}>${value}</option>`,
      )
      .join("");
    return (
      `<tr><th>${dim}</th>` +
      `<td><select data-node="${nodeId}" data-dim="${dim}">${options}</select></td></tr>`
    );
  });
  return `<table class="matrix-editor">${rows.join("")}</table>`;
}

export function renderCumulative(scores: FeasibilityScores | undefined): string {
  if (!scores) return '<span class="cumulative empty">—</span>';
  const cells = DIMENSIONS.map((dim) => `${dim}=${scores[dim]}`).join(" ");
  return `<span class="cumulative">${cells}</span>`;
}

/** Scenario-count heatmap over feasibility x impact, from server results. */
export function renderDistribution(results: ScenarioResult[]): string {
  const counts = new Map<string, number>();
  for (const result of results) {
    if (result.status !== "done" || !result.feasibility || !result.impact) continue;
    const key = `${result.feasibility}|${result.impact}`;
    counts.set(key, (counts.get(key) ?? 0) + 1);
  }
  const header = IMPACT_LEVELS.map((level) => `<th>${level}</th>`).join("");
  const rows = FEASIBILITY_LEVELS.map((feasibility) => {
    const cells = IMPACT_LEVELS.map((impact) => {
      const count = counts.get(`${feasibility}|${impact}`) ?? 0;
      return `<td class="${count > 0 ? "occupied" : "empty"}">${count}</td>`;
    }).join("");
    return `<tr><th>${feasibility}</th>${cells}</tr>`;
  }).join("");
  return `<table class="distribution"><tr><th></th>${header}</tr>${rows}</table>`;
}

export function renderConflictBanner(conflict: { banner: string } | null): string {
  if (conflict === null) return "";
  return (
    `<div class="conflict-banner">${escapeHtml(conflict.banner)} ` +
    `<button data-action="reload">Reload tree</button></div>`
  );
}

export function renderWarnings(warnings: string[]): string {
  if (warnings.length === 0) return "";
  const items = warnings.map((warning) => `<li>${escapeHtml(warning)}</li>`).join("");
  return `<ul class="warnings">${items}</ul>`;
}
