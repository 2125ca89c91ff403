"""Synthetic data generation.

Random static graphs, cosine-similarity graphs from node features, and a
spatial-temporal scenario generator that couples a gravity-style mobility
model (distance-decayed flows with a sinusoidal daily cycle) to the
stochastic network SIR process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import (
    ValidationError,
    as_float_array,
    check_count,
    check_non_negative,
    check_positive,
)
from .mechanistic import NetworkSirConfig, initial_network_states, network_sir_step
from .types import DynamicGraph, FeaturePanel, NodeStates, SeedPolicy, StaticGraph


def random_graph(n: int, edge_prob: float, seed: SeedPolicy) -> StaticGraph:
    """Erdos-Renyi G(n, p) with unit edge weights."""
    n = check_count(n, "n", minimum=1)
    p = float(edge_prob)
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"edge_prob must lie in [0, 1], got {p}")
    rng = seed.rng()
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    draws = rng.random(len(pairs))
    edges = [(u, v, 1.0) for (u, v), d in zip(pairs, draws) if d < p]
    return StaticGraph(n, edges)


def similarity_graph(features: FeaturePanel, threshold: float = 0.5) -> StaticGraph:
    """Connect nodes whose feature vectors have cosine similarity >= threshold.

    Expects a single-timestep panel; the edge weight is the similarity
    clamped to [0, 1]. A node with an all-zero feature row has no defined
    direction, which is an error rather than a silent skip.
    """
    if features.n_steps != 1:
        raise ValidationError(
            f"similarity_graph expects a single-timestep panel, got {features.n_steps} steps")
    if not -1.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [-1, 1], got {threshold}")
    x = features.values[0]  # [node][feature]
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(
            f"undefined similarity: node {int(zero[0])} has an all-zero feature row")
    unit = x / norms[:, None]
    cos = unit @ unit.T
    n = features.n_nodes
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            c = min(1.0, max(-1.0, cos[u, v]))  # float dust past +/-1
            if c >= threshold:
                edges.append((u, v, max(0.0, c)))
    return StaticGraph(n, edges)


@dataclass(frozen=True)
class MobilityConfig:
    """Gravity-style flow model between positioned regions.

    Flow between regions u, v at step t is
    base_flow * exp(-distance(u, v) * distance_decay) * (1 + 0.5 * sin(2*pi*t / daily_period)).
    """

    n_regions: int
    base_flow: float
    distance_decay: float
    daily_period: int
    positions: tuple[tuple[float, float], ...]

    def __post_init__(self):
        check_count(self.n_regions, "n_regions", minimum=2)
        check_non_negative(self.base_flow, "base_flow")
        check_positive(self.distance_decay, "distance_decay")
        if self.daily_period == 0:
            raise ValidationError("daily_period must be a positive count, got 0")
        check_count(self.daily_period, "daily_period", minimum=1)
        pos = tuple((float(x), float(y)) for x, y in self.positions)
        if len(pos) != self.n_regions:
            raise ValidationError(
                f"got {len(pos)} positions for {self.n_regions} regions")
        for x, y in pos:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValidationError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def random(cls, n_regions, seed: SeedPolicy, base_flow=1.0,
               distance_decay=2.0, daily_period=24) -> "MobilityConfig":
        pts = seed.rng().random((n_regions, 2))
        return cls(n_regions=n_regions, base_flow=base_flow,
                   distance_decay=distance_decay, daily_period=daily_period,
                   positions=tuple((float(x), float(y)) for x, y in pts))


def _flow_matrix(mob: MobilityConfig, t: int) -> np.ndarray:
    pos = np.asarray(mob.positions)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    diurnal = 1.0 + 0.5 * math.sin(2.0 * math.pi * t / mob.daily_period)
    w = mob.base_flow * np.exp(-dist * mob.distance_decay) * diurnal
    np.fill_diagonal(w, 0.0)
    return w


def simulate_scenario(mob: MobilityConfig, epi: NetworkSirConfig, steps: int,
                      seed: SeedPolicy) -> tuple[DynamicGraph, FeaturePanel, NodeStates]:
    """Joint mobility + epidemic simulation over `steps` transitions.

    Returns steps+1 aligned frames: snapshot t of the dynamic graph drives
    the transition from t to t+1. Panel feature 0 is the infected
    indicator per node, feature 1 flags nodes that became infected at that
    step (the initial infected count as flagged at t=0).
    """
    steps = check_count(steps, "steps", minimum=1)
    n = mob.n_regions
    states = initial_network_states(n, epi)
    weights = [_flow_matrix(mob, t) for t in range(steps + 1)]
    rng = seed.rng()

    history = [states]
    new_inf = [np.asarray(states == "I", dtype=np.float64)]
    for t in range(steps):
        nxt, _ = network_sir_step(weights[t], states, epi.beta, epi.gamma, epi.dt, rng)
        new_inf.append(((nxt == "I") & (states != "I")).astype(np.float64))
        states = nxt
        history.append(states)

    states_arr = np.stack(history)
    panel = np.stack([
        (states_arr == "I").astype(np.float64),
        np.stack(new_inf),
    ], axis=2)
    snapshots = [StaticGraph.from_dense(w) for w in weights]
    return DynamicGraph(snapshots), FeaturePanel(panel), NodeStates(states_arr)
