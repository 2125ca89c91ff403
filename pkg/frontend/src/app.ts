// Session controller: owns one live session end to end. It subscribes to
// the delta stream, pushes frames through the ordering gate into the
// store, and exposes the user actions (step / vaccinate / quarantine /
// select). There are no optimistic updates anywhere — the view changes
// only on server-acknowledged frames or full states, so what the user
// sees is always something the server actually said.

import { ApiClient, ApiError, type GraphBody, type SessionConfigBody, type StateBody } from "./api";
import { FrameGate, type DeltaFrame } from "./frames";
import { SessionStore } from "./store";

/** Structural slice of a WebSocket; both the browser's and ws's fit. */
export interface WsLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

const RECONNECT_BASE_MS = 500;
const RECONNECT_MAX_MS = 10_000;

export class SessionController {
  readonly store: SessionStore;
  readonly graph: GraphBody;
  readonly id: string;

  private gate: FrameGate;
  private ws: WsLike | null = null;
  private closed = false;
  private reconnectAttempts = 0;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  private constructor(
    private api: ApiClient,
    id: string,
    graph: GraphBody,
    initial: StateBody,
    private wsFactory: WsFactory,
  ) {
    this.id = id;
    this.graph = graph;
    this.store = new SessionStore(id);
    this.store.resetFull(initial);
    this.gate = new FrameGate(
      initial.seq,
      (frame) => this.store.applyFrame(frame),
      () => this.resync(),
    );
  }

  /** Create a fresh session on the server and start streaming it. */
  static async create(
    api: ApiClient,
    graph: GraphBody,
    config: SessionConfigBody,
    seed: number,
    wsFactory: WsFactory,
  ): Promise<SessionController> {
    const initial = await api.createSession(graph, config, seed);
    const ctl = new SessionController(api, initial.id, graph, initial, wsFactory);
    ctl.connect();
    return ctl;
  }

  /** Attach to an existing session (graph recovered from its log). */
  static async attach(api: ApiClient, id: string, wsFactory: WsFactory): Promise<SessionController> {
    const [log, state] = await Promise.all([api.log(id), api.state(id)]);
    const ctl = new SessionController(api, id, log.graph, state, wsFactory);
    ctl.connect();
    return ctl;
  }

  get resyncs(): number {
    return this.gate.resyncs;
  }

  // ---- user actions -----------------------------------------------------

  async step(k = 1): Promise<StateBody | null> {
    return this.command(() => this.api.step(this.id, k));
  }

  async vaccinate(node: number): Promise<StateBody | null> {
    return this.command(() => this.api.intervene(this.id, "vaccinate", node));
  }

  async quarantine(node: number): Promise<StateBody | null> {
    return this.command(() => this.api.intervene(this.id, "quarantine", node));
  }

  /** Select a node and load its timeline panel (null to clear). */
  async select(node: number | null): Promise<void> {
    this.store.select(node);
    if (node === null) return;
    try {
      this.store.setTimeline(await this.api.nodeHistory(this.id, node));
    } catch (err) {
      this.toastError(err);
    }
  }

  private async command(send: () => Promise<StateBody>): Promise<StateBody | null> {
    try {
      return await send();
    } catch (err) {
      this.toastError(err);
      return null;
    }
  }

  private toastError(err: unknown): void {
    if (err instanceof ApiError) {
      this.store.pushToast(err.body.message);
    } else {
      this.store.pushToast("connection error — is the server up?");
    }
  }

  // ---- streaming --------------------------------------------------------

  /**
   * View has caught up with everything the server acknowledged so far
   * (no buffered frames, applied seq matches the given acknowledgment).
   */
  caughtUpWith(ack: StateBody): boolean {
    return this.gate.appliedSeq >= ack.seq && this.gate.pending === 0;
  }

  private connect(): void {
    if (this.closed) return;
    const ws = this.wsFactory(this.api.wsUrl(this.id));
    this.ws = ws;
    ws.onopen = () => {
      this.reconnectAttempts = 0;
      if (!this.store.snapshot().stale) return;
      // missed frames while down; the badge stays until the resync lands
      this.resync()
        .then((seq) => {
          this.gate.reset(Math.max(seq, this.gate.appliedSeq));
          this.store.setStale(false);
        })
        .catch(() => {
          /* still unreachable; the next close/reconnect cycle retries */
        });
    };
    ws.onmessage = (ev) => {
      const frame = JSON.parse(String(ev.data)) as DeltaFrame | { code: string; message: string };
      if ("seq" in frame) {
        this.gate.offer(frame);
      } else {
        this.store.pushToast(frame.message);
      }
    };
    ws.onclose = () => {
      if (this.closed) return;
      this.store.setStale(true);
      this.scheduleReconnect();
    };
    ws.onerror = () => {
      /* onclose follows and handles it */
    };
  }

  private scheduleReconnect(): void {
    const delay = Math.min(RECONNECT_BASE_MS * 2 ** this.reconnectAttempts, RECONNECT_MAX_MS);
    this.reconnectAttempts += 1;
    this.reconnectTimer = setTimeout(() => this.connect(), delay);
  }

  /** Full-state resync; the gate calls this when it sees a seq gap. */
  private async resync(): Promise<number> {
    const state = await this.api.state(this.id);
    this.store.resetFull(state);
    return state.seq;
  }

  dispose(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.ws?.close();
  }
}
