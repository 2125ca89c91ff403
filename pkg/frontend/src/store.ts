// View-model store. Everything the UI draws lives here, and the epidemic
// part of it (states / step / seq / status) is a pure function of the last
// full server state plus the delta frames applied since — replayView() is
// that function, and the store's incremental updates agree with it by
// construction. Acknowledgments never touch node states directly; colors
// change only when the authoritative frame (or a full resync) arrives.

import type { NodeHistoryBody, StateBody } from "./api";
import type { DeltaFrame } from "./frames";

export type SessionStatus = "running" | "finished";

export interface Toast {
  id: number;
  message: string;
}

export interface ViewState {
  sessionId: string;
  states: string[]; // compartment letter per node
  step: number;
  seq: number;
  status: SessionStatus;
  selected: number | null;
  timeline: NodeHistoryBody | null;
  stale: boolean;
  toasts: Toast[];
}

export interface EpiView {
  states: string[];
  step: number;
  seq: number;
  status: SessionStatus;
}

function statusOf(states: string[]): SessionStatus {
  return states.includes("I") ? "running" : "finished";
}

/**
 * Replay a frame log over a full state. Frames at or before the base seq
 * are skipped, so feeding an entire session log over a mid-session
 * snapshot is fine.
 */
export function replayView(full: StateBody, frames: Iterable<DeltaFrame>): EpiView {
  const states = full.states.split("");
  let step = full.step;
  let seq = full.seq;
  for (const frame of frames) {
    if (frame.seq <= seq) continue;
    for (const change of frame.changed_nodes) {
      states[change.node] = change.state;
    }
    step = frame.step;
    seq = frame.seq;
  }
  return { states, step, seq, status: statusOf(states) };
}

export type StoreListener = (view: ViewState) => void;

export class SessionStore {
  private view: ViewState;
  private listeners = new Set<StoreListener>();
  private nextToast = 1;

  constructor(sessionId: string) {
    this.view = {
      sessionId,
      states: [],
      step: 0,
      seq: 0,
      status: "running",
      selected: null,
      timeline: null,
      stale: false,
      toasts: [],
    };
  }

  snapshot(): ViewState {
    return { ...this.view, states: [...this.view.states], toasts: [...this.view.toasts] };
  }

  subscribe(listener: StoreListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const l of this.listeners) l(snap);
  }

  /** Adopt a full server state (session creation, resync, reconnect). */
  resetFull(state: StateBody): void {
    this.view.states = state.states.split("");
    this.view.step = state.step;
    this.view.seq = state.seq;
    this.view.status = statusOf(this.view.states);
    this.emit();
  }

  /** Apply one in-order delta frame (the FrameGate guarantees order). */
  applyFrame(frame: DeltaFrame): void {
    for (const change of frame.changed_nodes) {
      this.view.states[change.node] = change.state;
    }
    this.view.step = frame.step;
    this.view.seq = frame.seq;
    this.view.status = statusOf(this.view.states);
    this.emit();
  }

  select(node: number | null): void {
    this.view.selected = node;
    if (node === null || this.view.timeline?.node !== node) {
      this.view.timeline = null;
    }
    this.emit();
  }

  setTimeline(history: NodeHistoryBody): void {
    // a slow response for a node the user already navigated away from
    if (this.view.selected !== history.node) return;
    this.view.timeline = history;
    this.emit();
  }

  setStale(stale: boolean): void {
    if (this.view.stale === stale) return;
    this.view.stale = stale;
    this.emit();
  }

  pushToast(message: string): number {
    const id = this.nextToast++;
    this.view.toasts.push({ id, message });
    this.emit();
    return id;
  }

  dismissToast(id: number): void {
    const n = this.view.toasts.length;
    this.view.toasts = this.view.toasts.filter((t) => t.id !== id);
    if (this.view.toasts.length !== n) this.emit();
  }
}
