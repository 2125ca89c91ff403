"""Patient-zero detection from an infected-set snapshot.

Three detectors share one output shape: a probability per node of being
the source, supported on the infected set. Edge direction and weights are
ignored for the distance/tree detectors (hop counts only); the Monte Carlo
detector uses the full weighted stochastic process.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._validation import ValidationError, check_count, check_node_ids
from .mechanistic import NetworkSirConfig, simulate_network_sir
from .types import SeedPolicy, StaticGraph, derive_stream


@dataclass(frozen=True)
class Snapshot:
    """Observed graph plus the currently infected node set."""

    graph: StaticGraph
    infected: frozenset
    observation_time: Optional[int] = None

    def __post_init__(self):
        infected = check_node_ids(self.infected, self.graph.n_nodes, "infected")
        if not infected:
            raise ValidationError("snapshot must contain at least one infected node")
        object.__setattr__(self, "infected", infected)
        if self.observation_time is not None:
            check_count(self.observation_time, "observation_time", minimum=0)


class SourceScore:
    """Per-node source probabilities; non-negative and summing to 1."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1:
            raise ValidationError(f"probs must be 1-D, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("probs must be finite and non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"probs must sum to 1 within 1e-9, got {total!r}")
        self.probs = p
        self.probs.flags.writeable = False

    def top(self, k: int = 1) -> list[int]:
        """The k highest-probability nodes; ties broken by node id."""
        order = sorted(range(len(self.probs)), key=lambda v: (-self.probs[v], v))
        return order[:k]

    def __repr__(self):
        return f"SourceScore(n={len(self.probs)}, top={self.top(1)[0]})"


def _infected_adjacency(snapshot: Snapshot):
    """Hop adjacency of the infected-induced subgraph, in local indices."""
    nodes = sorted(snapshot.infected)
    index = {v: i for i, v in enumerate(nodes)}
    adj = [[] for _ in nodes]
    seen = set()
    for u, v, _ in snapshot.graph.edges:
        if u in index and v in index and u != v:
            key = (min(u, v), max(u, v))
            if key in seen:
                continue  # a directed graph may list both orientations
            seen.add(key)
            adj[index[u]].append(index[v])
            adj[index[v]].append(index[u])
    for neighbours in adj:
        neighbours.sort()
    return nodes, adj


def _bfs_distances(adj, start: int) -> list:
    dist = [-1] * len(adj)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _require_connected(nodes, adj):
    dist = _bfs_distances(adj, 0)
    if all(d >= 0 for d in dist):
        return
    components = []
    unseen = set(range(len(nodes)))
    while unseen:
        start = min(unseen)
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in comp:
                    comp.add(v)
                    queue.append(v)
        unseen -= comp
        components.append(sorted(nodes[i] for i in comp))
    raise ValidationError(f"disconnected snapshot: components {components}")


def _scores_to_full(snapshot, nodes, weights) -> SourceScore:
    probs = np.zeros(snapshot.graph.n_nodes)
    w = np.asarray(weights, dtype=np.float64)
    probs[nodes] = w / w.sum()
    return SourceScore(probs)


def jordan_center(snapshot: Snapshot) -> SourceScore:
    """Uniform mass over the minimum-eccentricity infected nodes.

    Eccentricity is the largest BFS hop count to any other infected node,
    measured inside the infected-induced subgraph.
    """
    nodes, adj = _infected_adjacency(snapshot)
    _require_connected(nodes, adj)
    ecc = [max(_bfs_distances(adj, i)) for i in range(len(nodes))]
    best = min(ecc)
    weights = [1.0 if e == best else 0.0 for e in ecc]
    return _scores_to_full(snapshot, nodes, weights)


def _tree_log_scores(adj) -> list:
    """Rumor centrality of every node of a tree, in log space.

    log R(v) = log n! - sum_u log T_u^v, where T_u^v is the size of the
    subtree of u when the tree is rooted at v. Computed once for root 0,
    then propagated with the rerooting identity
    log R(child) = log R(parent) + log T_child - log(n - T_child).
    """
    n = len(adj)
    parent = [-1] * n
    order = [0]
    seen = [False] * n
    seen[0] = True
    for u in order:
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                order.append(v)
    size = [1] * n
    for v in reversed(order[1:]):
        size[parent[v]] += size[v]
    logs = [0.0] * n
    logs[0] = math.lgamma(n + 1) - sum(math.log(s) for s in size)
    for v in order[1:]:
        logs[v] = logs[parent[v]] + math.log(size[v]) - math.log(n - size[v])
    return logs


def _bfs_tree_log_score(adj, root: int) -> float:
    """Rumor score of `root` on its BFS spanning tree (cyclic graphs)."""
    n = len(adj)
    parent = [-1] * n
    order = [root]
    seen = [False] * n
    seen[root] = True
    for u in order:
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                parent[v] = u
                order.append(v)
    size = [1] * n
    for v in reversed(order[1:]):
        size[parent[v]] += size[v]
    return math.lgamma(n + 1) - sum(math.log(s) for s in size)


def rumor_centrality(snapshot: Snapshot) -> SourceScore:
    """Shah-Zaman rumor centrality over the infected subgraph.

    Exact (every-root values via rerooting) when the infected subgraph is
    a tree. On cyclic subgraphs each candidate is scored on its own BFS
    spanning tree - a standard approximation, exactness is only claimed
    for trees.
    """
    nodes, adj = _infected_adjacency(snapshot)
    _require_connected(nodes, adj)
    n = len(nodes)
    n_edges = sum(len(a) for a in adj) // 2
    if n_edges == n - 1:
        logs = _tree_log_scores(adj)
    else:
        logs = [_bfs_tree_log_score(adj, i) for i in range(n)]
    peak = max(logs)
    weights = [math.exp(l - peak) for l in logs]
    return _scores_to_full(snapshot, nodes, weights)


def monte_carlo_source(snapshot: Snapshot, cfg: NetworkSirConfig,
                       replicates: int, seed: SeedPolicy) -> SourceScore:
    """Simulation-based likelihood: seed each candidate, replay the process.

    Each candidate v in the infected set is scored by the mean Jaccard
    similarity between the infected set of `replicates` simulations run
    for observation_time steps from {v}, and the observed infected set.
    cfg supplies the process rates; its initial_infected is replaced by
    {candidate} for every run. Candidate/replicate pair (i, r) always
    consumes stream i * replicates + r, so results are independent of
    evaluation order. All-zero scores fall back to uniform over the
    infected set.
    """
    if snapshot.observation_time is None:
        raise ValidationError("observation_time missing: Monte Carlo scoring "
                              "needs to know how long the process ran")
    replicates = check_count(replicates, "replicates", minimum=1)
    candidates = sorted(snapshot.infected)
    observed = set(snapshot.infected)
    t_obs = snapshot.observation_time

    scores = np.zeros(len(candidates))
    for ci, v in enumerate(candidates):
        run_cfg = replace(cfg, initial_infected=frozenset({v}))
        total = 0.0
        for rep in range(replicates):
            if t_obs == 0:
                simulated = {v}
            else:
                stream = derive_stream(seed, ci * replicates + rep)
                history = simulate_network_sir(snapshot.graph, run_cfg, t_obs, stream)
                final = history.states[-1]
                simulated = set(np.flatnonzero(final == "I"))
            total += len(simulated & observed) / len(simulated | observed)
        scores[ci] = total / replicates

    if scores.sum() == 0.0:
        scores[:] = 1.0
    return _scores_to_full(snapshot, candidates, scores)


DETECTORS = {
    "jordan": jordan_center,
    "rumor": rumor_centrality,
}


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class DetectionReport:
    """Accuracy summary over labelled snapshots.

    Tied scores share the mean of their tied ranks; top-k gives fractional
    credit across ties, so a uniform detector over n nodes scores exactly
    k/n and "beats the uniform baseline" means what it says.
    """

    top1: float
    top3: float
    mean_rank: float
    n_cases: int

    def as_dict(self) -> dict:
        return {"top1": self.top1, "top3": self.top3,
                "mean_rank": self.mean_rank, "n_cases": self.n_cases}


def source_rank(score: SourceScore, true_source: int) -> float:
    """Tie-averaged rank (1 = best) of the true source."""
    p = score.probs[true_source]
    higher = int(np.sum(score.probs > p))
    ties = int(np.sum(score.probs == p))
    return higher + (ties + 1) / 2


def topk_credit(score: SourceScore, true_source: int, k: int) -> float:
    """Fraction of the tied block containing the truth that fits in the
    top k slots; 1.0 when it ranks strictly inside, 0.0 when outside."""
    p = score.probs[true_source]
    higher = int(np.sum(score.probs > p))
    if higher >= k:
        return 0.0
    ties = int(np.sum(score.probs == p))
    return min(1.0, (k - higher) / ties)


def evaluate_detector(detector, cases) -> DetectionReport:
    """Run a detector over (Snapshot, true_source) pairs and rank the truth."""
    cases = list(cases)
    if not cases:
        raise ValidationError("cases must be nonempty")
    ranks = []
    top1 = []
    top3 = []
    for snapshot, true_source in cases:
        if not 0 <= true_source < snapshot.graph.n_nodes:
            raise ValidationError(
                f"true source {true_source} outside node range "
                f"[0, {snapshot.graph.n_nodes})")
        score = detector(snapshot)
        ranks.append(source_rank(score, true_source))
        top1.append(topk_credit(score, true_source, 1))
        top3.append(topk_credit(score, true_source, 3))
    return DetectionReport(
        top1=float(np.mean(top1)),
        top3=float(np.mean(top3)),
        mean_rank=float(np.mean(ranks)),
        n_cases=len(cases),
    )


# ---------------------------------------------------------------------------
# synthetic benchmark cases


def _random_tree_edges(n: int, rng) -> list:
    """Uniform random labelled tree (Prüfer decode)."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1, 1.0)]
    prufer = [int(x) for x in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for x in prufer:
        degree[x] += 1
    edges = []
    leaves = sorted(v for v in range(n) if degree[v] == 1)
    for x in prufer:
        leaf = leaves.pop(0)
        edges.append((leaf, x, 1.0))
        degree[x] -= 1
        degree[leaf] -= 1
        if degree[x] == 1:
            # keep the leaf pool sorted so decoding stays deterministic
            bisect.insort(leaves, x)
    u, v = leaves[0], leaves[1]
    edges.append((u, v, 1.0))
    return edges


def _si_spread(edges, n: int, source: int, n_infected: int, rng) -> frozenset:
    """SI jump chain: repeatedly infect across a uniform boundary edge."""
    neighbours = [[] for _ in range(n)]
    for u, v, _ in edges:
        neighbours[u].append(v)
        neighbours[v].append(u)
    infected = {source}
    while len(infected) < n_infected:
        boundary = [(u, v) for u in sorted(infected)
                    for v in sorted(neighbours[u]) if v not in infected]
        u, v = boundary[int(rng.integers(len(boundary)))]
        infected.add(v)
    return frozenset(infected)


def synthetic_tree_cases(n_cases: int, seed: SeedPolicy, n_nodes: int = 15,
                         n_infected: int = 10) -> list:
    """Labelled detection cases: random trees with an SI spread from a
    random source. Deterministic in the seed policy."""
    check_count(n_cases, "n_cases", minimum=1)
    check_count(n_nodes, "n_nodes", minimum=2)
    if not 1 <= n_infected <= n_nodes:
        raise ValidationError(
            f"n_infected must lie in [1, {n_nodes}], got {n_infected}")
    cases = []
    for i in range(n_cases):
        rng = derive_stream(seed, i).rng()
        edges = _random_tree_edges(n_nodes, rng)
        graph = StaticGraph(n_nodes, edges)
        source = int(rng.integers(n_nodes))
        infected = _si_spread(edges, n_nodes, source, n_infected, rng)
        cases.append((Snapshot(graph=graph, infected=infected), source))
    return cases
