/** Deterministic left-to-right DAG layout: column = longest path from a root,
 *  row = order within the column. */

import type { GraphWire } from "./api.js";

export interface NodePosition {
  x: number;
  y: number;
  column: number;
  row: number;
}

export const NODE_W = 210;
export const NODE_H = 84;
export const GAP_X = 70;
export const GAP_Y = 28;

export function layoutGraph(graph: GraphWire): Map<string, NodePosition> {
  const order = graph.topo; // already a valid topological order
  const column = new Map<string, number>();
  for (const id of order) column.set(id, 0);
  for (const id of order) {
    for (const e of graph.edges) {
      if (e.from !== id) continue;
      const next = Math.max(column.get(e.to) ?? 0, (column.get(id) ?? 0) + 1);
      column.set(e.to, next);
    }
  }

  const rows = new Map<number, number>();
  const out = new Map<string, NodePosition>();
  for (const id of order) {
    const col = column.get(id) ?? 0;
    const row = rows.get(col) ?? 0;
    rows.set(col, row + 1);
    out.set(id, {
      column: col,
      row,
      x: col * (NODE_W + GAP_X),
      y: row * (NODE_H + GAP_Y),
    });
  }
  return out;
}

export function canvasSize(positions: Map<string, NodePosition>): { width: number; height: number } {
  let width = NODE_W;
  let height = NODE_H;
  for (const p of positions.values()) {
    width = Math.max(width, p.x + NODE_W);
    height = Math.max(height, p.y + NODE_H);
  }
  return { width: width + 20, height: height + 20 };
}
