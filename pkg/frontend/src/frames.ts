// Ordering gate for the WebSocket delta stream.
//
// The server numbers frames 1, 2, 3, ... with no gaps. The gate applies
// frames to its sink strictly in that order: late duplicates are dropped,
// frames that arrive early are buffered, and the first time a gap is
// detected a single full-state resync is requested. While the resync is
// in flight further early frames keep buffering without issuing another
// request; after the resync lands, everything it covered is discarded and
// buffered frames beyond it drain in order.

export interface ChangedNode {
  node: number;
  state: string;
}

export interface DeltaFrame {
  seq: number;
  step: number;
  changed_nodes: ChangedNode[];
}

/** Resolves with the seq the view was reset to. */
export type ResyncFn = () => Promise<number>;

export class FrameGate {
  private applied: number;
  private buffer = new Map<number, DeltaFrame>();
  private resyncing = false;
  /** Number of resync requests issued so far. */
  public resyncs = 0;

  constructor(
    initialSeq: number,
    private sink: (frame: DeltaFrame) => void,
    private resync: ResyncFn,
  ) {
    this.applied = initialSeq;
  }

  get appliedSeq(): number {
    return this.applied;
  }

  get pending(): number {
    return this.buffer.size;
  }

  /** Forget everything and continue from `seq` (after an external reset). */
  reset(seq: number): void {
    this.applied = seq;
    for (const k of [...this.buffer.keys()]) {
      if (k <= seq) this.buffer.delete(k);
    }
  }

  offer(frame: DeltaFrame): void {
    if (frame.seq <= this.applied) {
      return; // replayed catch-up frame, already seen
    }
    this.buffer.set(frame.seq, frame);
    this.drain();
    if (this.buffer.size > 0 && !this.resyncing) {
      void this.startResync();
    }
  }

  private drain(): void {
    let next = this.buffer.get(this.applied + 1);
    while (next !== undefined) {
      this.buffer.delete(next.seq);
      this.applied = next.seq;
      this.sink(next);
      next = this.buffer.get(this.applied + 1);
    }
  }

  private async startResync(): Promise<void> {
    this.resyncing = true;
    this.resyncs += 1;
    try {
      const seq = await this.resync();
      if (seq > this.applied) {
        this.reset(seq);
      }
      this.drain();
    } finally {
      this.resyncing = false;
    }
    // drain leaves the buffer either empty or still gapped
    if (this.buffer.size > 0) {
      void this.startResync();
    }
  }
}
