// Scene construction: turns (view state, layout) into a flat description
// of what should be on screen. Pure data in, pure data out — the DOM layer
// just mirrors the scene, which keeps rendering reproducible from a frame
// log and testable without a browser.

import type { LayoutPoint } from "./layout";
import type { ViewState } from "./store";

export const STATE_COLORS: Record<string, string> = {
  S: "#4a90d9",
  E: "#f0a202",
  I: "#d7263d",
  R: "#3a9d5d",
  V: "#7b5ea7",
  Q: "#6c757d",
};

export const UNKNOWN_COLOR = "#cccccc";

export interface NodeGlyph {
  id: number;
  x: number;
  y: number;
  state: string;
  fill: string;
  quarantined: boolean;
  selected: boolean;
}

export interface EdgeGlyph {
  source: number;
  target: number;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface TimelineCell {
  step: number;
  state: string;
  fill: string;
}

export interface Scene {
  nodes: NodeGlyph[];
  edges: EdgeGlyph[];
  step: number;
  status: string;
  stale: boolean;
  toasts: { id: number; message: string }[];
  timeline: { node: number; cells: TimelineCell[]; infectedAt: number | null; source: number | null } | null;
}

export function buildScene(
  view: ViewState,
  layout: LayoutPoint[],
  edges: [number, number, number][],
): Scene {
  const byId = new Map(layout.map((p) => [p.id, p]));
  const nodes: NodeGlyph[] = layout.map((p) => {
    const state = view.states[p.id] ?? "?";
    return {
      id: p.id,
      x: p.x,
      y: p.y,
      state,
      fill: STATE_COLORS[state] ?? UNKNOWN_COLOR,
      quarantined: state === "Q",
      selected: view.selected === p.id,
    };
  });
  const edgeGlyphs: EdgeGlyph[] = [];
  for (const [u, v] of edges) {
    const a = byId.get(u);
    const b = byId.get(v);
    if (a === undefined || b === undefined) continue;
    edgeGlyphs.push({ source: u, target: v, x1: a.x, y1: a.y, x2: b.x, y2: b.y });
  }
  return {
    nodes,
    edges: edgeGlyphs,
    step: view.step,
    status: view.status,
    stale: view.stale,
    toasts: view.toasts.map((t) => ({ ...t })),
    timeline:
      view.timeline === null
        ? null
        : {
            node: view.timeline.node,
            cells: [...view.timeline.timeline].map((state, step) => ({
              step,
              state,
              fill: STATE_COLORS[state] ?? UNKNOWN_COLOR,
            })),
            infectedAt: view.timeline.infected_at,
            source: view.timeline.source,
          },
  };
}
