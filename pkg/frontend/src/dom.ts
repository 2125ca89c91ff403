// DOM mirror of a Scene. Imperative but dumb: everything interesting was
// already decided while building the scene.

import type { Scene } from "./render";

const SVG_NS = "http://www.w3.org/2000/svg";
const NODE_RADIUS = 9;

export interface ViewDom {
  root: HTMLElement;
  svg: SVGSVGElement;
  statusBar: HTMLElement;
  toastBox: HTMLElement;
  timelineBox: HTMLElement;
}

export function mountView(root: HTMLElement, width: number, height: number): ViewDom {
  root.innerHTML = "";
  const statusBar = document.createElement("div");
  statusBar.className = "status-bar";
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.setAttribute("class", "graph");
  const toastBox = document.createElement("div");
  toastBox.className = "toasts";
  const timelineBox = document.createElement("div");
  timelineBox.className = "timeline";
  root.append(statusBar, svg, timelineBox, toastBox);
  return { root, svg, statusBar, toastBox, timelineBox };
}

export function applyScene(dom: ViewDom, scene: Scene, onNodeClick: (node: number) => void): void {
  dom.statusBar.textContent =
    `step ${scene.step} — ${scene.status}` + (scene.stale ? "  [stale: reconnecting]" : "");
  dom.statusBar.classList.toggle("stale", scene.stale);

  // edges first so nodes draw on top
  dom.svg.innerHTML = "";
  for (const e of scene.edges) {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", e.x1.toFixed(1));
    line.setAttribute("y1", e.y1.toFixed(1));
    line.setAttribute("x2", e.x2.toFixed(1));
    line.setAttribute("y2", e.y2.toFixed(1));
    line.setAttribute("stroke", "#ddd");
    dom.svg.appendChild(line);
  }
  for (const n of scene.nodes) {
    const g = document.createElementNS(SVG_NS, "g");
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", n.x.toFixed(1));
    circle.setAttribute("cy", n.y.toFixed(1));
    circle.setAttribute("r", String(NODE_RADIUS));
    circle.setAttribute("fill", n.fill);
    if (n.selected) {
      circle.setAttribute("stroke", "#222");
      circle.setAttribute("stroke-width", "3");
    }
    circle.addEventListener("click", () => onNodeClick(n.id));
    g.appendChild(circle);
    if (n.quarantined) {
      const badge = document.createElementNS(SVG_NS, "text");
      badge.textContent = "Q";
      badge.setAttribute("x", n.x.toFixed(1));
      badge.setAttribute("y", (n.y + 4).toFixed(1));
      badge.setAttribute("text-anchor", "middle");
      badge.setAttribute("class", "q-badge");
      g.appendChild(badge);
    }
    dom.svg.appendChild(g);
  }

  dom.timelineBox.innerHTML = "";
  if (scene.timeline !== null) {
    const title = document.createElement("div");
    title.textContent =
      `node ${scene.timeline.node}` +
      (scene.timeline.infectedAt === null
        ? " — never infected"
        : ` — infected at step ${scene.timeline.infectedAt}` +
          (scene.timeline.source === null ? " (seed)" : ` by node ${scene.timeline.source}`));
    dom.timelineBox.appendChild(title);
    const strip = document.createElement("div");
    strip.className = "timeline-strip";
    for (const cell of scene.timeline.cells) {
      const box = document.createElement("span");
      box.className = "timeline-cell";
      box.style.background = cell.fill;
      box.title = `step ${cell.step}: ${cell.state}`;
      strip.appendChild(box);
    }
    dom.timelineBox.appendChild(strip);
  }

  dom.toastBox.innerHTML = "";
  for (const toast of scene.toasts) {
    const el = document.createElement("div");
    el.className = "toast";
    el.textContent = toast.message;
    dom.toastBox.appendChild(el);
  }
}
