// Seeded force-directed layout. Positions are computed once per graph by
// ticking a d3-force simulation synchronously; with the same seed the
// result is identical every time, so reloading a session keeps nodes
// where the user remembers them.

import {
  forceCenter,
  forceCollide,
  forceLink,
  forceManyBody,
  forceSimulation,
  type SimulationLinkDatum,
  type SimulationNodeDatum,
} from "d3-force";

export interface LayoutPoint {
  id: number;
  x: number;
  y: number;
}

interface SimNode extends SimulationNodeDatum {
  id: number;
}

/** Small deterministic PRNG (mulberry32), good enough for jitter. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const TICKS = 300;
const MARGIN = 24;

export function computeLayout(
  nNodes: number,
  edges: [number, number, number][],
  width: number,
  height: number,
  seed = 1,
): LayoutPoint[] {
  const rand = mulberry32(seed);
  const nodes: SimNode[] = Array.from({ length: nNodes }, (_, id) => ({
    id,
    x: rand() * width,
    y: rand() * height,
  }));
  const links: SimulationLinkDatum<SimNode>[] = edges.map(([source, target]) => ({
    source,
    target,
  }));

  const sim = forceSimulation(nodes)
    .randomSource(rand)
    .force("charge", forceManyBody().strength(-60))
    .force(
      "link",
      forceLink<SimNode, SimulationLinkDatum<SimNode>>(links)
        .id((d) => d.id)
        .distance(46),
    )
    .force("center", forceCenter(width / 2, height / 2))
    .force("collide", forceCollide(12))
    .stop();
  for (let i = 0; i < TICKS; i++) sim.tick();

  return fitToBox(nodes, width, height);
}

/** Rescale positions so every node lands inside the viewport margin box. */
function fitToBox(nodes: SimNode[], width: number, height: number): LayoutPoint[] {
  let minX = Infinity;
  let maxX = -Infinity;
  let minY = Infinity;
  let maxY = -Infinity;
  for (const n of nodes) {
    minX = Math.min(minX, n.x!);
    maxX = Math.max(maxX, n.x!);
    minY = Math.min(minY, n.y!);
    maxY = Math.max(maxY, n.y!);
  }
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  return nodes.map((n) => ({
    id: n.id,
    x: MARGIN + ((n.x! - minX) / spanX) * (width - 2 * MARGIN),
    y: MARGIN + ((n.y! - minY) / spanY) * (height - 2 * MARGIN),
  }));
}

/**
 * Layout memo keyed by session id — the graph never changes within a
 * session, so the expensive simulation runs once.
 */
export class LayoutCache {
  private cache = new Map<string, LayoutPoint[]>();

  get(key: string, build: () => LayoutPoint[]): LayoutPoint[] {
    let points = this.cache.get(key);
    if (points === undefined) {
      points = build();
      this.cache.set(key, points);
    }
    return points;
  }
}
