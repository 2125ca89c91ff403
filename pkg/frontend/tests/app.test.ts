import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, type FetchFn, type StateBody } from "../src/api";
import { SessionController, type WsLike } from "../src/app";

// ---- fakes ---------------------------------------------------------------

class FakeWs implements WsLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.();
  }

  emit(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }

  drop(): void {
    this.onclose?.();
  }
}

function wsPool() {
  const sockets: FakeWs[] = [];
  const factory = () => {
    const ws = new FakeWs();
    sockets.push(ws);
    queueMicrotask(() => ws.open());
    return ws;
  };
  return { sockets, factory, last: () => sockets[sockets.length - 1] };
}

type Route = (body: unknown) => Response;

const json = (body: unknown, status = 200): Response =>
  new Response(JSON.stringify(body), { status, headers: { "Content-Type": "application/json" } });

function makeApi(routes: Record<string, Route>) {
  const calls: string[] = [];
  const fetchFn: FetchFn = async (url, init) => {
    const key = `${init?.method ?? "GET"} ${url.replace("http://fake", "")}`;
    calls.push(key);
    const route = routes[key];
    if (route === undefined) {
      return json({ code: "unknown_route", message: `no route for ${key}` }, 404);
    }
    return route(init?.body === undefined ? undefined : JSON.parse(String(init.body)));
  };
  return { api: new ApiClient("http://fake", fetchFn), calls };
}

const state = (states: string, step = 0, seq = 0): StateBody => ({
  id: "s1",
  step,
  seq,
  status: states.includes("I") ? "running" : "finished",
  states,
});

const GRAPH = {
  n_nodes: 3,
  directed: false,
  edges: [
    [0, 1, 1],
    [1, 2, 1],
  ] as [number, number, number][],
};
const CONFIG = { beta: 0.5, gamma: 0.1, dt: 1.0, initial_infected: [0] };

const flush = () => new Promise((r) => setTimeout(r, 0));

// ---- tests ---------------------------------------------------------------

afterEach(() => {
  vi.useRealTimers();
});

describe("SessionController", () => {
  it("renders the created session before any frame arrives", async () => {
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    expect(ctl.store.snapshot().states).toEqual(["I", "S", "S"]);
    expect(ctl.store.snapshot().step).toBe(0);
    ctl.dispose();
  });

  it("moves the counter only when the server's frame lands, never optimistically", async () => {
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "POST /sessions/s1/step": () => json(state("IIS", 1, 1)),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    await flush();

    const ack = await ctl.step(1);
    expect(ack).not.toBeNull();
    // acknowledged, but the authoritative delta has not arrived yet
    expect(ctl.store.snapshot().step).toBe(0);
    expect(ctl.store.snapshot().states).toEqual(["I", "S", "S"]);
    expect(ctl.caughtUpWith(ack!)).toBe(false);

    pool.last().emit({ seq: 1, step: 1, changed_nodes: [{ node: 1, state: "I" }] });
    expect(ctl.store.snapshot().step).toBe(1);
    expect(ctl.store.snapshot().states).toEqual(["I", "I", "S"]);
    expect(ctl.caughtUpWith(ack!)).toBe(true);
    ctl.dispose();
  });

  it("advances the counter by exactly one per acknowledged step", async () => {
    let steps = 0;
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "POST /sessions/s1/step": () => {
        steps++;
        return json(state("ISS", steps, steps));
      },
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    await flush();

    for (let i = 1; i <= 3; i++) {
      await ctl.step(1);
      pool.last().emit({ seq: i, step: i, changed_nodes: [] });
      expect(ctl.store.snapshot().step).toBe(i);
    }
    ctl.dispose();
  });

  it("surfaces a server rejection as a toast and leaves the view untouched", async () => {
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "POST /sessions/s1/intervene": () =>
        json({ code: "conflict", message: "node 0 is I; only susceptible nodes can be vaccinated", field: "node" }, 400),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    const before = ctl.store.snapshot();

    const result = await ctl.vaccinate(0);
    expect(result).toBeNull();
    const after = ctl.store.snapshot();
    expect(after.toasts.map((t) => t.message)).toEqual([
      "node 0 is I; only susceptible nodes can be vaccinated",
    ]);
    expect(after.states).toEqual(before.states);
    expect(after.step).toBe(before.step);
    ctl.dispose();
  });

  it("issues exactly one full-state fetch when the stream skips a seq", async () => {
    const { api, calls } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "GET /sessions/s1/state": () => json(state("IIR", 3, 3)),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    await flush();

    pool.last().emit({ seq: 1, step: 1, changed_nodes: [{ node: 1, state: "I" }] });
    pool.last().emit({ seq: 3, step: 3, changed_nodes: [{ node: 2, state: "R" }] }); // 2 lost
    await flush();

    expect(ctl.resyncs).toBe(1);
    expect(calls.filter((c) => c === "GET /sessions/s1/state")).toHaveLength(1);
    expect(ctl.store.snapshot().states).toEqual(["I", "I", "R"]);
    expect(ctl.store.snapshot().seq).toBe(3);

    // stream continues normally afterwards
    pool.last().emit({ seq: 4, step: 4, changed_nodes: [{ node: 0, state: "R" }] });
    expect(ctl.store.snapshot().states).toEqual(["R", "I", "R"]);
    expect(ctl.resyncs).toBe(1);
    ctl.dispose();
  });

  it("marks the view stale on disconnect and heals it by resync on reconnect", async () => {
    vi.useFakeTimers();
    const { api, calls } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "GET /sessions/s1/state": () => json(state("IRS", 2, 2)),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    await vi.advanceTimersByTimeAsync(0);

    pool.last().drop();
    expect(ctl.store.snapshot().stale).toBe(true);

    await vi.advanceTimersByTimeAsync(500); // reconnect backoff
    expect(pool.sockets).toHaveLength(2);
    await vi.advanceTimersByTimeAsync(0); // open + resync settle

    expect(ctl.store.snapshot().stale).toBe(false);
    expect(ctl.store.snapshot().states).toEqual(["I", "R", "S"]);
    expect(calls.filter((c) => c === "GET /sessions/s1/state")).toHaveLength(1);
    ctl.dispose();
  });

  it("fills the timeline panel for the selected node", async () => {
    const history = { node: 2, timeline: "SSI", infected_at: 2, source: 1 };
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
      "GET /sessions/s1/nodes/2/history": () => json(history),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);

    await ctl.select(2);
    expect(ctl.store.snapshot().selected).toBe(2);
    expect(ctl.store.snapshot().timeline).toEqual(history);

    await ctl.select(null);
    expect(ctl.store.snapshot().timeline).toBeNull();
    ctl.dispose();
  });

  it("attaches to an existing session and ignores replayed history frames", async () => {
    const { api } = makeApi({
      "GET /sessions/s1/log": () =>
        json({ graph: GRAPH, config: CONFIG, seed: 7, events: [{ type: "step", k: 2 }] }),
      "GET /sessions/s1/state": () => json(state("IIS", 2, 2)),
    });
    const pool = wsPool();
    const ctl = await SessionController.attach(api, "s1", pool.factory);
    await flush();
    expect(ctl.graph).toEqual(GRAPH);
    expect(ctl.store.snapshot().states).toEqual(["I", "I", "S"]);

    // the server replays the whole frame log to new subscribers
    pool.last().emit({ seq: 1, step: 1, changed_nodes: [{ node: 1, state: "I" }] });
    pool.last().emit({ seq: 2, step: 2, changed_nodes: [] });
    expect(ctl.store.snapshot().seq).toBe(2);
    pool.last().emit({ seq: 3, step: 3, changed_nodes: [{ node: 2, state: "I" }] });
    expect(ctl.store.snapshot().states).toEqual(["I", "I", "I"]);
    expect(ctl.resyncs).toBe(0);
    ctl.dispose();
  });

  it("shows the stream's error frame as a toast", async () => {
    const { api } = makeApi({
      "POST /sessions": () => json(state("ISS"), 201),
    });
    const pool = wsPool();
    const ctl = await SessionController.create(api, GRAPH, CONFIG, 7, pool.factory);
    await flush();
    pool.last().emit({ code: "unknown_session", message: "unknown session: s1" });
    expect(ctl.store.snapshot().toasts.map((t) => t.message)).toEqual(["unknown session: s1"]);
    ctl.dispose();
  });
});
