"""Live-session HTTP service for interactive epidemic simulations.

A session wraps one stochastic network SIR run: create it with a graph,
a config, and a seed; advance it step by step; vaccinate or quarantine
nodes between steps; watch per-node state changes stream out over a
WebSocket. Sessions are in-memory only — the event log endpoint exports
everything needed to reproduce one elsewhere.

Determinism contract: (graph, config, seed, ordered command log) fully
determines the history. Every step consumes the same random draws whether
issued one at a time or in a batch, and interventions consume none, so
replaying a log yields bit-identical states.

Intervention semantics: changes apply to the current frame and therefore
influence dynamics from the next step on. ``vaccinate`` moves a
susceptible node to V (repeat calls are no-ops; infected or recovered
nodes are rejected). ``quarantine`` moves any node to Q, which freezes it
completely: it neither infects, nor gets infected, nor recovers. A
session is finished exactly when no node is in state I — quarantining
the last infected node finishes it immediately. The freeze-everything
reading of quarantine is the simplest deterministic one; a variant where
quarantined infected nodes still recover would finish sessions later.

Wire format: errors are ``{code, message, field?}``. The stream carries
``{seq, step, changed_nodes: [{node, state}]}`` delta frames, sequence-
numbered from 1 with no gaps; a new subscriber first receives every frame
logged so far, so any client can catch up from any point.
"""

from __future__ import annotations

import asyncio
import secrets
import threading

import numpy as np
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from ._validation import ValidationError
from .io_data import DataFormatError, graph_from_obj, graph_to_obj
from .mechanistic import NetworkSirConfig, initial_network_states, network_sir_step
from .types import SeedPolicy, StaticGraph


class ApiError(Exception):
    """An error to report as JSON; carries status, code, and field."""

    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def body(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.field is not None:
            out["field"] = self.field
        return out


_CONFIG_FIELDS = ("beta", "gamma", "dt", "initial_infected", "immune")


def _field_hint(message: str) -> str | None:
    for name in _CONFIG_FIELDS:
        if name in message:
            return name
    return None


class Session:
    """One running simulation; all mutation happens under ``self.lock``."""

    def __init__(self, sid: str, graph: StaticGraph, cfg: NetworkSirConfig, seed: int):
        self.id = sid
        self.graph = graph
        self.cfg = cfg
        self.seed = int(seed)
        self.lock = threading.Lock()
        self._rng = SeedPolicy(self.seed).rng()
        self._weights = graph.weight_matrix()
        states = initial_network_states(graph.n_nodes, cfg)
        self.history: list[np.ndarray] = [states]
        self.frames: list[dict] = []
        self.events: list[dict] = []
        self.infected_at = {v: 0 for v in cfg.initial_infected}
        self.infection_source: dict[int, int] = {}

    # -- invariant helpers (callers hold the lock) --

    @property
    def current_step(self) -> int:
        return len(self.history) - 1

    @property
    def states(self) -> np.ndarray:
        return self.history[-1]

    @property
    def status(self) -> str:
        return "finished" if not np.any(self.states == "I") else "running"

    def _push_frame(self, changed: list[dict]) -> None:
        self.frames.append({
            "seq": len(self.frames) + 1,
            "step": self.current_step,
            "changed_nodes": changed,
        })

    # -- commands --

    def step(self, k: int) -> dict:
        with self.lock:
            for _ in range(k):
                if self.status == "finished":
                    break
                prev = self.states
                nxt, sources = network_sir_step(
                    self._weights, prev, self.cfg.beta, self.cfg.gamma,
                    self.cfg.dt, self._rng, collect_sources=True)
                self.history.append(nxt)
                step = self.current_step
                for v, src in sources.items():
                    self.infected_at[v] = step
                    self.infection_source[v] = src
                changed = [{"node": int(v), "state": str(nxt[v])}
                           for v in np.flatnonzero(nxt != prev)]
                self._push_frame(changed)
            self.events.append({"type": "step", "k": int(k)})
            return self.state_body()

    def intervene(self, action: str, node: int) -> dict:
        with self.lock:
            if not 0 <= node < self.graph.n_nodes:
                raise ApiError(404, "not_found",
                               f"node {node} outside [0, {self.graph.n_nodes})",
                               field="node")
            if self.status == "finished":
                raise ApiError(400, "finished",
                               "session is finished; no more interventions")
            current = str(self.states[node])
            changed = False
            if action == "vaccinate":
                if current == "S":
                    changed = True
                elif current not in ("V", "Q"):
                    raise ApiError(400, "conflict",
                                   f"cannot vaccinate node {node} in state {current}",
                                   field="node")
                target = "V" if current != "Q" else "Q"
            else:
                target = "Q"
                changed = current != "Q"
            if changed:
                updated = self.states.copy()
                updated[node] = target
                self.history[-1] = updated
                self._push_frame([{"node": int(node), "state": target}])
            self.events.append({"type": "intervene", "action": action,
                                "node": int(node)})
            return {**self.state_body(), "changed": changed}

    # -- read views --

    def state_body(self) -> dict:
        return {
            "id": self.id,
            "step": self.current_step,
            "seq": len(self.frames),
            "status": self.status,
            "states": "".join(self.states),
        }

    def snapshot_state(self) -> dict:
        with self.lock:
            return self.state_body()

    def node_history(self, node: int) -> dict:
        with self.lock:
            if not 0 <= node < self.graph.n_nodes:
                raise ApiError(404, "not_found",
                               f"node {node} outside [0, {self.graph.n_nodes})",
                               field="node")
            timeline = "".join(str(row[node]) for row in self.history)
            return {
                "node": node,
                "timeline": timeline,
                "infected_at": self.infected_at.get(node),
                "source": self.infection_source.get(node),
            }

    def full_history(self) -> dict:
        with self.lock:
            return {
                "id": self.id,
                "step": self.current_step,
                "states": ["".join(row) for row in self.history],
            }

    def export_log(self) -> dict:
        with self.lock:
            return {
                "graph": graph_to_obj(self.graph),
                "config": {
                    "beta": self.cfg.beta,
                    "gamma": self.cfg.gamma,
                    "dt": self.cfg.dt,
                    "initial_infected": sorted(self.cfg.initial_infected),
                    "immune": sorted(self.cfg.immune),
                },
                "seed": self.seed,
                "events": [dict(ev) for ev in self.events],
            }

    def frames_since(self, count: int) -> list[dict]:
        with self.lock:
            return [dict(f) for f in self.frames[count:]]


def build_session(graph_obj, config_obj, seed) -> Session:
    """Validate raw JSON payloads and construct a session (unregistered)."""
    try:
        graph = graph_from_obj(graph_obj, "graph")
    except DataFormatError as exc:
        raise ApiError(400, "invalid", str(exc), field="graph") from exc
    if not isinstance(config_obj, dict):
        raise ApiError(400, "invalid", "config must be an object", field="config")
    unknown = sorted(set(config_obj) - set(_CONFIG_FIELDS))
    if unknown:
        raise ApiError(400, "invalid",
                       f"unknown config field {unknown[0]!r}; valid: {list(_CONFIG_FIELDS)}",
                       field=unknown[0])
    try:
        cfg = NetworkSirConfig(
            beta=config_obj.get("beta", 0.1),
            gamma=config_obj.get("gamma", 0.05),
            dt=config_obj.get("dt", 1.0),
            initial_infected=frozenset(config_obj.get("initial_infected", ())),
            immune=frozenset(config_obj.get("immune", ())),
        )
        session = Session(secrets.token_hex(16), graph, cfg, int(seed))
    except (ValidationError, TypeError, ValueError) as exc:
        message = str(exc)
        raise ApiError(400, "invalid", message,
                       field=_field_hint(message)) from exc
    return session


def replay_log(log: dict) -> Session:
    """Rebuild a session by replaying an exported event log.

    Uses the same command methods as the live service, so agreement with
    the original history is structural rather than coincidental.
    """
    session = build_session(log["graph"], log["config"], log["seed"])
    for event in log["events"]:
        if event["type"] == "step":
            session.step(event["k"])
        elif event["type"] == "intervene":
            session.intervene(event["action"], event["node"])
        else:
            raise ValidationError(f"unknown event type {event['type']!r}")
    return session


class _CreateBody(BaseModel):
    graph: dict
    config: dict
    seed: int = 0


class _StepBody(BaseModel):
    k: int = 1


class _InterveneBody(BaseModel):
    action: str
    node: int


def create_app() -> FastAPI:
    """A fresh service instance with its own isolated session registry."""
    app = FastAPI(title="epikit live sessions")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(sid: str) -> Session:
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise ApiError(404, "not_found", f"unknown session {sid!r}", field="id")
        return session

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ()) if part != "body")
        body = {"code": "invalid", "message": first.get("msg", "invalid request")}
        if field:
            body["field"] = field
        return JSONResponse(status_code=400, content=body)

    @app.post("/sessions", status_code=201)
    def create(body: _CreateBody):
        session = build_session(body.graph, body.config, body.seed)
        with registry_lock:
            sessions[session.id] = session
        return session.snapshot_state()

    @app.post("/sessions/{sid}/step")
    def step(sid: str, body: _StepBody):
        if body.k < 1:
            raise ApiError(400, "invalid", f"k must be >= 1, got {body.k}", field="k")
        return get_session(sid).step(body.k)

    @app.post("/sessions/{sid}/intervene")
    def intervene(sid: str, body: _InterveneBody):
        if body.action not in ("vaccinate", "quarantine"):
            raise ApiError(400, "invalid",
                           f"action must be vaccinate or quarantine, got {body.action!r}",
                           field="action")
        return get_session(sid).intervene(body.action, body.node)

    @app.get("/sessions/{sid}/state")
    def state(sid: str):
        return get_session(sid).snapshot_state()

    @app.get("/sessions/{sid}/nodes/{node}/history")
    def history_of(sid: str, node: int):
        return get_session(sid).node_history(node)

    @app.get("/sessions/{sid}/history")
    def history(sid: str):
        return get_session(sid).full_history()

    @app.get("/sessions/{sid}/log")
    def log(sid: str):
        return get_session(sid).export_log()

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            await ws.send_json({"code": "not_found",
                                "message": f"unknown session {sid!r}", "field": "id"})
            await ws.close(code=1008)
            return
        sent = 0
        try:
            while True:
                for frame in session.frames_since(sent):
                    await ws.send_json(frame)
                    sent += 1
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    return app
