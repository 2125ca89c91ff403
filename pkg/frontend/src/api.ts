// Typed client for the epikit session service (HTTP part).
//
// Wire shapes mirror the server exactly; `states` is one compartment
// letter per node ("S", "E", "I", "R", "V", "Q") joined into a string.

export interface GraphBody {
  n_nodes: number;
  directed: boolean;
  edges: [number, number, number][];
}

export interface SessionConfigBody {
  beta: number;
  gamma: number;
  dt: number;
  initial_infected: number[];
  immune?: number[];
}

export interface StateBody {
  id: string;
  step: number;
  seq: number;
  status: "running" | "finished";
  states: string;
}

export interface InterveneBody extends StateBody {
  changed: boolean;
}

export interface NodeHistoryBody {
  node: number;
  timeline: string; // one letter per recorded step
  infected_at: number | null;
  source: number | null;
}

export interface HistoryBody {
  id: string;
  step: number;
  states: string[];
}

export interface SessionLogBody {
  graph: GraphBody;
  config: SessionConfigBody;
  seed: number;
  events: { type: string; [key: string]: unknown }[];
}

export interface ErrorBody {
  code: string;
  message: string;
  field?: string;
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

/** Raised for any non-2xx response; carries the server's error body. */
export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ErrorBody,
  ) {
    super(body.message);
    this.name = "ApiError";
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let body: ErrorBody;
  try {
    body = (await res.json()) as ErrorBody;
  } catch {
    body = { code: "http_error", message: `HTTP ${res.status}` };
  }
  return new ApiError(res.status, body);
}

export class ApiClient {
  private fetchFn: FetchFn;

  constructor(
    public base: string,
    fetchFn?: FetchFn,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) {
      throw await parseError(res);
    }
    return (await res.json()) as T;
  }

  createSession(graph: GraphBody, config: SessionConfigBody, seed = 0): Promise<StateBody> {
    return this.request("POST", "/sessions", { graph, config, seed });
  }

  step(id: string, k = 1): Promise<StateBody> {
    return this.request("POST", `/sessions/${id}/step`, { k });
  }

  intervene(id: string, action: "vaccinate" | "quarantine", node: number): Promise<InterveneBody> {
    return this.request("POST", `/sessions/${id}/intervene`, { action, node });
  }

  state(id: string): Promise<StateBody> {
    return this.request("GET", `/sessions/${id}/state`);
  }

  nodeHistory(id: string, node: number): Promise<NodeHistoryBody> {
    return this.request("GET", `/sessions/${id}/nodes/${node}/history`);
  }

  history(id: string): Promise<HistoryBody> {
    return this.request("GET", `/sessions/${id}/history`);
  }

  log(id: string): Promise<SessionLogBody> {
    return this.request("GET", `/sessions/${id}/log`);
  }

  /** ws:// URL of the delta-frame stream for a session. */
  wsUrl(id: string): string {
    return this.base.replace(/^http/, "ws") + `/sessions/${id}/stream`;
  }
}
