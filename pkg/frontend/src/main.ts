// Browser entry point. Creates a demo session against the service (the
// dev server proxies /sessions/* to it) and wires toolbar + graph clicks.

import { ApiClient, type GraphBody, type SessionConfigBody } from "./api";
import { SessionController, type WsLike } from "./app";
import { computeLayout, LayoutCache } from "./layout";
import { buildScene } from "./render";
import { applyScene, mountView } from "./dom";

const WIDTH = 860;
const HEIGHT = 560;
const TOAST_MS = 4000;

// small random-ish contact graph, fixed so reloads look the same
function demoGraph(n = 40): GraphBody {
  const edges: [number, number, number][] = [];
  for (let u = 0; u < n; u++) {
    for (let v = u + 1; v < n; v++) {
      if ((u * 31 + v * 17) % 13 === 0) edges.push([u, v, 1.0]);
    }
  }
  for (let u = 0; u + 1 < n; u += 4) edges.push([u, u + 1, 1.0]); // keep it connected-ish
  return { n_nodes: n, directed: false, edges };
}

const DEMO_CONFIG: SessionConfigBody = {
  beta: 0.6,
  gamma: 0.15,
  dt: 1.0,
  initial_infected: [0, 1],
};

type Mode = "select" | "vaccinate" | "quarantine";

async function boot(): Promise<void> {
  const app = document.getElementById("app")!;
  const toolbar = document.getElementById("toolbar")!;
  const api = new ApiClient(window.location.origin);
  const graph = demoGraph();
  const ctl = await SessionController.create(
    api,
    graph,
    DEMO_CONFIG,
    7,
    (url) => new WebSocket(url) as unknown as WsLike,
  );

  const layouts = new LayoutCache();
  const layout = layouts.get(ctl.id, () => computeLayout(graph.n_nodes, graph.edges, WIDTH, HEIGHT, 7));
  const dom = mountView(app, WIDTH, HEIGHT);

  let mode: Mode = "select";
  const modeSelect = document.getElementById("mode") as HTMLSelectElement;
  modeSelect.addEventListener("change", () => {
    mode = modeSelect.value as Mode;
  });
  document.getElementById("step1")!.addEventListener("click", () => void ctl.step(1));
  document.getElementById("step5")!.addEventListener("click", () => void ctl.step(5));

  const seen = new Set<number>();
  ctl.store.subscribe((view) => {
    applyScene(dom, buildScene(view, layout, graph.edges), (node) => {
      if (mode === "vaccinate") void ctl.vaccinate(node);
      else if (mode === "quarantine") void ctl.quarantine(node);
      else void ctl.select(node);
    });
    const running = view.status === "running";
    for (const el of toolbar.querySelectorAll("button")) el.disabled = !running;
    for (const toast of view.toasts) {
      if (!seen.has(toast.id)) {
        seen.add(toast.id);
        setTimeout(() => ctl.store.dismissToast(toast.id), TOAST_MS);
      }
    }
  });
  await ctl.select(null); // trigger first paint
}

boot().catch((err) => {
  const app = document.getElementById("app")!;
  app.textContent = `failed to start: ${err instanceof Error ? err.message : String(err)}`;
});
