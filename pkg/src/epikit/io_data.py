"""Dataset files on disk, toy data generation, and run reports.

Datasets are stored as a single JSON document per file. JSON keeps the
format human-inspectable and language-neutral; floats go through Python's
shortest round-trip repr, so ``save`` then ``load`` reproduces every real
bit-for-bit. Files carry an explicit schema version string and the loader
refuses anything it does not recognize rather than guessing.

All loader errors are :class:`DataFormatError` and name the offending
field by its path in the document (for example ``static_graph.n_nodes``).
A file that fails to parse or validate produces no dataset at all — there
is no partially-loaded result to clean up after.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .detect import Snapshot
from .mechanistic import NetworkSirConfig
from .simulate import MobilityConfig, random_graph, simulate_scenario
from .types import (
    DynamicGraph,
    EpiDataset,
    FeaturePanel,
    NodeStates,
    SeedPolicy,
    StaticGraph,
    derive_stream,
)

DATASET_VERSION = "epikit-dataset/1"
SNAPSHOT_VERSION = "epikit-snapshot/1"


class DataFormatError(ValidationError):
    """A file failed to parse, or its contents are not self-consistent."""


def dumps_canonical(obj) -> str:
    """Serialize to deterministic JSON (sorted keys, fixed layout).

    Used for every file this package writes so that identical inputs
    produce byte-identical output, which in turn makes checksums and
    rerun-diffing meaningful.
    """
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


# ---------------------------------------------------------------------------
# field access helpers


def _get(obj: dict, key: str, kind, path: str, optional: bool = False):
    """Fetch ``obj[key]`` and type-check it, raising with the field path."""
    if key not in obj:
        if optional:
            return None
        raise DataFormatError(f"{path}: missing required field")
    value = obj[key]
    if value is None and optional:
        return None
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise DataFormatError(f"{path}: expected a number, got {type(value).__name__}")
        return float(value)
    if kind is int and isinstance(value, bool):
        raise DataFormatError(f"{path}: expected {kind.__name__}, got bool")
    if not isinstance(value, kind):
        raise DataFormatError(f"{path}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _check_version(obj: dict, expected: str, path: str) -> None:
    version = _get(obj, "version", str, f"{path}version")
    if version != expected:
        raise DataFormatError(
            f"{path}version: unknown schema version {version!r}; this build reads {expected!r}")


# ---------------------------------------------------------------------------
# graphs


def graph_to_obj(g: StaticGraph) -> dict:
    return {
        "n_nodes": g.n_nodes,
        "directed": g.directed,
        "edges": [[int(u), int(v), float(w)] for u, v, w in g.edges],
    }


def graph_from_obj(obj, path: str) -> StaticGraph:
    if not isinstance(obj, dict):
        raise DataFormatError(f"{path}: expected an object, got {type(obj).__name__}")
    n_nodes = _get(obj, "n_nodes", int, f"{path}.n_nodes")
    directed = _get(obj, "directed", bool, f"{path}.directed")
    edges = _get(obj, "edges", list, f"{path}.edges")
    for i, edge in enumerate(edges):
        if not (isinstance(edge, list) and len(edge) == 3):
            raise DataFormatError(f"{path}.edges[{i}]: expected [u, v, weight]")
    try:
        return StaticGraph(n_nodes, edges, directed=directed, allow_self_loops=True)
    except ValidationError as exc:
        raise DataFormatError(f"{path}.edges: {exc}") from exc


# ---------------------------------------------------------------------------
# datasets


def dataset_to_obj(ds: EpiDataset, metadata: dict | None = None) -> dict:
    """Plain-JSON representation of a dataset (see :func:`save_dataset`)."""
    obj = {
        "version": DATASET_VERSION,
        "panel": ds.panel.values.tolist(),
        "split": [float(ds.split[0]), float(ds.split[1])],
        "metadata": dict(metadata) if metadata else {},
    }
    if ds.states is not None:
        obj["states"] = ["".join(row) for row in ds.states.states]
    if ds.static_graph is not None:
        obj["static_graph"] = graph_to_obj(ds.static_graph)
    if ds.dynamic_graph is not None:
        snaps = ds.dynamic_graph.snapshots
        obj["dynamic_graph"] = {
            "n_nodes": ds.dynamic_graph.n_nodes,
            "directed": snaps[0].directed,
            "snapshots": [graph_to_obj(s)["edges"] for s in snaps],
        }
    return obj


def dataset_from_obj(obj) -> EpiDataset:
    """Validate a parsed JSON document and build the dataset it describes.

    Every check happens before the dataset object exists, so a bad file
    never yields a half-built result.
    """
    if not isinstance(obj, dict):
        raise DataFormatError(f"top level: expected an object, got {type(obj).__name__}")
    _check_version(obj, DATASET_VERSION, "")

    raw_panel = _get(obj, "panel", list, "panel")
    try:
        panel_arr = np.asarray(raw_panel, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"panel: not a rectangular numeric array ({exc})") from exc
    if panel_arr.ndim != 3:
        raise DataFormatError(
            f"panel: expected nested arrays of depth 3 [steps][nodes][features], "
            f"got depth {panel_arr.ndim}")
    n_steps, n_nodes, _ = panel_arr.shape
    if n_steps < 1 or n_nodes < 1:
        raise DataFormatError(f"panel: empty axis in shape {panel_arr.shape}")

    split = _get(obj, "split", list, "split")
    if len(split) != 2 or not all(isinstance(x, (int, float)) for x in split):
        raise DataFormatError(f"split: expected [train_frac, val_frac], got {split!r}")

    states = None
    if obj.get("states") is not None:
        rows = _get(obj, "states", list, "states")
        if len(rows) != n_steps:
            raise DataFormatError(
                f"states: {len(rows)} rows does not match panel step count {n_steps}")
        for t, row in enumerate(rows):
            if not isinstance(row, str) or len(row) != n_nodes:
                raise DataFormatError(
                    f"states[{t}]: expected a string of {n_nodes} compartment labels")
        try:
            states = NodeStates([list(row) for row in rows])
        except ValidationError as exc:
            raise DataFormatError(f"states: {exc}") from exc

    static_graph = None
    if obj.get("static_graph") is not None:
        static_graph = graph_from_obj(obj["static_graph"], "static_graph")
        if static_graph.n_nodes != n_nodes:
            raise DataFormatError(
                f"static_graph.n_nodes: {static_graph.n_nodes} does not match "
                f"panel node count {n_nodes}")

    dynamic_graph = None
    if obj.get("dynamic_graph") is not None:
        dyn = obj["dynamic_graph"]
        if not isinstance(dyn, dict):
            raise DataFormatError("dynamic_graph: expected an object")
        dyn_nodes = _get(dyn, "n_nodes", int, "dynamic_graph.n_nodes")
        if dyn_nodes != n_nodes:
            raise DataFormatError(
                f"dynamic_graph.n_nodes: {dyn_nodes} does not match "
                f"panel node count {n_nodes}")
        directed = _get(dyn, "directed", bool, "dynamic_graph.directed")
        snaps = _get(dyn, "snapshots", list, "dynamic_graph.snapshots")
        if len(snaps) != n_steps:
            raise DataFormatError(
                f"dynamic_graph.snapshots: {len(snaps)} snapshots does not match "
                f"panel step count {n_steps}")
        built = []
        for t, edges in enumerate(snaps):
            built.append(graph_from_obj(
                {"n_nodes": dyn_nodes, "directed": directed, "edges": edges},
                f"dynamic_graph.snapshots[{t}]"))
        dynamic_graph = DynamicGraph(built)

    _get(obj, "metadata", dict, "metadata", optional=True)

    try:
        return EpiDataset(FeaturePanel(panel_arr), states=states,
                          static_graph=static_graph, dynamic_graph=dynamic_graph,
                          split=(float(split[0]), float(split[1])))
    except ValidationError as exc:
        raise DataFormatError(f"dataset: {exc}") from exc


def save_dataset(ds: EpiDataset, path, metadata: dict | None = None) -> None:
    Path(path).write_text(dumps_canonical(dataset_to_obj(ds, metadata)))


def load_dataset(path) -> EpiDataset:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed JSON in {path}: {exc}") from exc
    return dataset_from_obj(obj)


# ---------------------------------------------------------------------------
# snapshots (observed infection patterns for source detection)


def snapshot_to_obj(snap: Snapshot) -> dict:
    obj = {
        "version": SNAPSHOT_VERSION,
        "graph": graph_to_obj(snap.graph),
        "infected": sorted(snap.infected),
    }
    if snap.observation_time is not None:
        obj["observation_time"] = snap.observation_time
    return obj


def snapshot_from_obj(obj) -> Snapshot:
    if not isinstance(obj, dict):
        raise DataFormatError(f"top level: expected an object, got {type(obj).__name__}")
    _check_version(obj, SNAPSHOT_VERSION, "")
    graph = graph_from_obj(_get(obj, "graph", dict, "graph"), "graph")
    infected = _get(obj, "infected", list, "infected")
    obs_time = _get(obj, "observation_time", float, "observation_time", optional=True)
    try:
        return Snapshot(graph=graph, infected=frozenset(int(v) for v in infected),
                        observation_time=obs_time)
    except ValidationError as exc:
        raise DataFormatError(f"snapshot: {exc}") from exc


def save_snapshot(snap: Snapshot, path) -> None:
    Path(path).write_text(dumps_canonical(snapshot_to_obj(snap)))


def load_snapshot(path) -> Snapshot:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed JSON in {path}: {exc}") from exc
    return snapshot_from_obj(obj)


# ---------------------------------------------------------------------------
# toy dataset

#: Fixed generation constants, documented so golden checksums stay meaningful.
TOY_N_NODES = 47
TOY_EDGE_PROB = 0.1
TOY_STEPS = 120
TOY_BETA = 0.02
TOY_GAMMA = 0.05
TOY_DT = 0.5
TOY_NOISE_SIGMA = 0.1
TOY_INITIAL_INFECTED = frozenset({0, 1, 2})


def generate_toy_dataset(seed: SeedPolicy) -> EpiDataset:
    """Small synthetic dataset exercising every downstream task.

    Construction, fixed by ``TOY_*`` constants so the output is stable:

    - a 47-node Erdős–Rényi contact graph (edge probability 0.1) used as
      the static graph;
    - a 120-frame joint mobility/epidemic scenario on 47 gravity-model
      regions (three seed infections, per-contact rate 0.02, recovery
      rate 0.05, step size 0.5) providing the dynamic graph, the node
      states, and panel features;
    - three feature channels per node and step: the infected indicator,
      the new-infection flag, and a noisy case count (indicator plus
      Gaussian reporting noise, sigma 0.1).

    Sub-streams of ``seed`` drive each random ingredient, so a given seed
    always produces the identical dataset, and the serialized bytes have
    a stable checksum.
    """
    static = random_graph(TOY_N_NODES, TOY_EDGE_PROB, derive_stream(seed, 0))
    mob = MobilityConfig.random(TOY_N_NODES, derive_stream(seed, 1))
    epi = NetworkSirConfig(beta=TOY_BETA, gamma=TOY_GAMMA, dt=TOY_DT,
                           initial_infected=TOY_INITIAL_INFECTED)
    dynamic, panel, states = simulate_scenario(mob, epi, TOY_STEPS - 1,
                                               derive_stream(seed, 2))
    noise = derive_stream(seed, 3).rng().normal(
        0.0, TOY_NOISE_SIGMA, size=(TOY_STEPS, TOY_N_NODES))
    cases = panel.values[:, :, 0] + noise
    values = np.concatenate([panel.values, cases[:, :, None]], axis=2)
    return EpiDataset(FeaturePanel(values), states=states, static_graph=static,
                      dynamic_graph=dynamic, split=(0.6, 0.2))


# ---------------------------------------------------------------------------
# reports


def build_report(task: str, model: str, metrics: dict, config: dict, seed: int) -> dict:
    """Assemble the run-report document every pipeline command emits.

    The report embeds the full effective config and the seed, which is
    enough information to reproduce the run exactly.
    """
    return {
        "task": str(task),
        "model": str(model),
        "metrics": metrics,
        "config": config,
        "seed": int(seed),
    }


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps_canonical(report))
