"""Core domain types: graphs, feature panels, node states, datasets, seeding.

All containers validate their inputs on construction and are treated as
immutable afterwards: stored arrays are copies with the writeable flag
cleared, so values can be shared across threads without defensive copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import (
    ValidationError,
    as_float_array,
    check_count,
    check_fraction,
)

#: Compartment labels. V marks vaccinated nodes, Q quarantined ones.
COMPARTMENTS = ("S", "E", "I", "R", "V", "Q")

_MAX_SEED = 2**64


@dataclass(frozen=True)
class SeedPolicy:
    """Deterministic randomness policy.

    Identical (master_seed, stream_id) pairs always produce the same
    stream; distinct stream_ids give independent streams derived from the
    master seed by a hash-based split, so parallel replicates can each own
    a stream without coordinating draw order.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < _MAX_SEED:
            raise ValidationError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.stream_id < 0:
            raise ValidationError(f"stream_id must be >= 0, got {self.stream_id}")

    def rng(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=(self.master_seed, self.stream_id))
        return np.random.Generator(np.random.PCG64(seq))


def derive_stream(policy: SeedPolicy, k: int) -> SeedPolicy:
    """Return the policy for stream k of the same master seed."""
    if k < 0:
        raise ValidationError(f"stream index must be >= 0, got {k}")
    return SeedPolicy(policy.master_seed, k)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


class StaticGraph:
    """Weighted contact graph with a fixed node set.

    Undirected by default; each undirected edge is stored once. Self-loops
    are rejected unless ``allow_self_loops`` is set, which only transforms
    that deliberately introduce them (adjacency normalization) should use.
    """

    def __init__(self, n_nodes, edges, directed=False, allow_self_loops=False):
        self.n_nodes = check_count(n_nodes, "n_nodes", minimum=1)
        self.directed = bool(directed)
        seen = set()
        cleaned = []
        for edge in edges:
            if len(edge) == 2:
                u, v = edge
                w = 1.0
            else:
                u, v, w = edge
            u, v = int(u), int(v)
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ValidationError(f"edge ({u},{v}) outside node range [0, {self.n_nodes})")
            if u == v and not allow_self_loops:
                raise ValidationError(f"self-loop on node {u} is not allowed")
            w = float(w)
            if not math.isfinite(w) or w < 0:
                raise ValidationError(f"edge ({u},{v}) has invalid weight {w}")
            key = (u, v) if self.directed or u <= v else (v, u)
            if key in seen:
                raise ValidationError(f"duplicate edge ({u},{v})")
            seen.add(key)
            cleaned.append((key[0], key[1], w) if not self.directed else (u, v, w))
        self.edges = tuple(cleaned)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def weight_matrix(self) -> np.ndarray:
        """Dense n x n weight matrix (symmetric for undirected graphs)."""
        w = np.zeros((self.n_nodes, self.n_nodes))
        for u, v, wt in self.edges:
            w[u, v] = wt
            if not self.directed:
                w[v, u] = wt
        return w

    def neighbors(self, v: int) -> list[int]:
        out = []
        for a, b, _ in self.edges:
            if a == v and b != v:
                out.append(b)
            elif b == v and a != v and not self.directed:
                out.append(a)
        return sorted(out)

    @classmethod
    def from_dense(cls, matrix, directed=False, allow_self_loops=False,
                   tol: float = 0.0) -> "StaticGraph":
        """Build a graph from a dense weight matrix, keeping entries > tol."""
        m = as_float_array(matrix, "matrix", ndim=2)
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"weight matrix must be square, got {m.shape}")
        n = m.shape[0]
        edges = []
        for u in range(n):
            for v in range(n if directed else u, n):
                if u == v and not allow_self_loops:
                    continue
                if m[u, v] > tol:
                    edges.append((u, v, m[u, v]))
        return cls(n, edges, directed=directed, allow_self_loops=allow_self_loops)

    def __eq__(self, other):
        if not isinstance(other, StaticGraph):
            return NotImplemented
        return (self.n_nodes == other.n_nodes and self.directed == other.directed
                and sorted(self.edges) == sorted(other.edges))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"StaticGraph({self.n_nodes} nodes, {self.n_edges} edges, {kind})"


class DynamicGraph:
    """Sequence of per-timestep graph snapshots over one shared node set."""

    def __init__(self, snapshots):
        snapshots = tuple(snapshots)
        if not snapshots:
            raise ValidationError("DynamicGraph needs at least one snapshot")
        n = snapshots[0].n_nodes
        for t, snap in enumerate(snapshots):
            if not isinstance(snap, StaticGraph):
                raise ValidationError(f"snapshot {t} is not a StaticGraph")
            if snap.n_nodes != n:
                raise ValidationError(
                    f"snapshot {t} has {snap.n_nodes} nodes, expected {n}")
        self.snapshots = snapshots
        self.n_nodes = n
        self.n_steps = len(snapshots)

    def __getitem__(self, t):
        if isinstance(t, slice):
            return DynamicGraph(self.snapshots[t])
        return self.snapshots[t]

    def __len__(self):
        return self.n_steps

    def __eq__(self, other):
        if not isinstance(other, DynamicGraph):
            return NotImplemented
        return self.snapshots == other.snapshots

    def __repr__(self):
        return f"DynamicGraph({self.n_steps} steps, {self.n_nodes} nodes)"


class FeaturePanel:
    """Dense time x node x feature array of real-valued observations."""

    def __init__(self, values):
        self.values = _frozen(as_float_array(values, "values", ndim=3))
        self.n_steps, self.n_nodes, self.n_features = self.values.shape
        if self.n_steps < 1 or self.n_nodes < 1 or self.n_features < 1:
            raise ValidationError(f"panel dimensions must all be >= 1, got {self.values.shape}")

    @property
    def shape(self):
        return self.values.shape

    def slice_steps(self, start: int, stop: int) -> "FeaturePanel":
        return FeaturePanel(self.values[start:stop])

    def series(self, node: int = 0, feature: int = 0) -> np.ndarray:
        """1-D time series for one node/feature channel."""
        return np.array(self.values[:, node, feature])

    def __eq__(self, other):
        if not isinstance(other, FeaturePanel):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"FeaturePanel(shape={self.values.shape})"


class NodeStates:
    """Compartment label per (step, node); labels restricted to COMPARTMENTS."""

    def __init__(self, states):
        arr = np.asarray(states, dtype="<U1")
        if arr.ndim != 2:
            raise ValidationError(f"states must be 2-dimensional [step][node], got shape {arr.shape}")
        bad = set(arr.ravel()) - set(COMPARTMENTS)
        if bad:
            raise ValidationError(f"unknown compartment labels {sorted(bad)}; valid: {COMPARTMENTS}")
        self.states = _frozen(arr)
        self.n_steps, self.n_nodes = arr.shape

    def slice_steps(self, start: int, stop: int) -> "NodeStates":
        return NodeStates(self.states[start:stop])

    def counts(self, t: int) -> dict[str, int]:
        row = self.states[t]
        return {c: int(np.sum(row == c)) for c in COMPARTMENTS}

    def __eq__(self, other):
        if not isinstance(other, NodeStates):
            return NotImplemented
        return np.array_equal(self.states, other.states)

    def __repr__(self):
        return f"NodeStates(shape=({self.n_steps}, {self.n_nodes}))"


class EpiDataset:
    """Bundle of observations, optional states and graphs, plus split fractions.

    The split (train_frac, val_frac) defines contiguous chronological
    segments; see :func:`split_dataset`.
    """

    def __init__(self, panel, states=None, static_graph=None, dynamic_graph=None,
                 split=(0.6, 0.2)):
        if not isinstance(panel, FeaturePanel):
            panel = FeaturePanel(panel)
        self.panel = panel
        self.states = states
        self.static_graph = static_graph
        self.dynamic_graph = dynamic_graph
        train_frac = check_fraction(split[0], "train_frac")
        val_frac = check_fraction(split[1], "val_frac")
        if train_frac + val_frac >= 1.0:
            raise ValidationError(
                f"train_frac + val_frac must be < 1, got {train_frac} + {val_frac}")
        self.split = (train_frac, val_frac)

        n = panel.n_nodes
        if states is not None:
            if states.n_nodes != n:
                raise ValidationError(
                    f"states have {states.n_nodes} nodes but panel has {n}")
            if states.n_steps != panel.n_steps:
                raise ValidationError(
                    f"states have {states.n_steps} steps but panel has {panel.n_steps}")
        if static_graph is not None and static_graph.n_nodes != n:
            raise ValidationError(
                f"static_graph has {static_graph.n_nodes} nodes but panel has {n}")
        if dynamic_graph is not None:
            if dynamic_graph.n_nodes != n:
                raise ValidationError(
                    f"dynamic_graph has {dynamic_graph.n_nodes} nodes but panel has {n}")
            if dynamic_graph.n_steps != panel.n_steps:
                raise ValidationError(
                    f"dynamic_graph has {dynamic_graph.n_steps} steps but panel has {panel.n_steps}")

    @property
    def n_steps(self) -> int:
        return self.panel.n_steps

    @property
    def n_nodes(self) -> int:
        return self.panel.n_nodes

    def slice_steps(self, start: int, stop: int) -> "EpiDataset":
        return EpiDataset(
            panel=self.panel.slice_steps(start, stop),
            states=self.states.slice_steps(start, stop) if self.states is not None else None,
            static_graph=self.static_graph,
            dynamic_graph=self.dynamic_graph[start:stop] if self.dynamic_graph is not None else None,
            split=self.split,
        )

    def train_steps(self) -> int:
        """Number of leading steps that belong to the training segment."""
        return _split_bounds(self.n_steps, self.split)[0]

    def __eq__(self, other):
        if not isinstance(other, EpiDataset):
            return NotImplemented
        return (self.panel == other.panel and self.states == other.states
                and self.static_graph == other.static_graph
                and self.dynamic_graph == other.dynamic_graph
                and self.split == other.split)

    def __repr__(self):
        parts = [f"panel={self.panel.shape}"]
        if self.states is not None:
            parts.append("states")
        if self.static_graph is not None:
            parts.append("static_graph")
        if self.dynamic_graph is not None:
            parts.append("dynamic_graph")
        return f"EpiDataset({', '.join(parts)}, split={self.split})"


def _split_bounds(n_steps: int, split) -> tuple[int, int]:
    # Cumulative flooring keeps the three segment lengths consistent with
    # the requested fractions even when each product is fractional; the
    # epsilon absorbs float noise in products like 0.7 * 10.
    train_end = int(math.floor(split[0] * n_steps + 1e-9))
    val_end = int(math.floor((split[0] + split[1]) * n_steps + 1e-9))
    return train_end, val_end


def split_dataset(ds: EpiDataset) -> tuple[EpiDataset, EpiDataset, EpiDataset]:
    """Chronological train/val/test partition of a dataset.

    Train takes the first floor(train_frac * T) steps, validation the steps
    up to floor((train_frac + val_frac) * T), test the remainder. Panels,
    states and dynamic graphs are sliced consistently; the static graph is
    shared. Raises on any empty segment.
    """
    T = ds.panel.n_steps
    if T < 3:
        raise ValidationError(f"dataset must have at least 3 steps to split, got {T}")
    train_end, val_end = _split_bounds(T, ds.split)
    lengths = (train_end, val_end - train_end, T - val_end)
    if min(lengths) <= 0:
        raise ValidationError(
            f"degenerate split: segment lengths {lengths} for T={T}, split={ds.split}")
    return (
        ds.slice_steps(0, train_end),
        ds.slice_steps(train_end, val_end),
        ds.slice_steps(val_end, T),
    )
