"""Composable preprocessing for panels and graphs.

Feature transforms follow the scikit-learn estimator protocol
(fit/transform/get_params) and consume/produce FeaturePanel objects;
graph transforms do the same for StaticGraph. A TransformPipeline applies
ordered lists of both to a dataset, fitting stateful feature transforms
on the training segment only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import ValidationError, as_float_array, check_count
from .types import DynamicGraph, EpiDataset, FeaturePanel, StaticGraph, _split_bounds

_DEGENERATE_STD = 1e-12


class TransformError(ValidationError):
    """A pipeline stage failed; the message names the stage index."""


class FeatureNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel normalization with statistics learned in fit().

    method="zscore" centers and scales by the population std; channels
    with std below 1e-12 are only centered. method="minmax" rescales to
    [0, 1]; degenerate ranges are only shifted.
    """

    def __init__(self, method="zscore"):
        self.method = method

    def fit(self, panel: FeaturePanel, y=None):
        if self.method not in ("zscore", "minmax"):
            raise ValidationError(f"unknown normalization method {self.method!r}")
        if panel.n_steps < 1:
            raise ValidationError("cannot fit normalizer on an empty panel")
        values = panel.values
        if self.method == "zscore":
            self.center_ = values.mean(axis=(0, 1))
            std = values.std(axis=(0, 1))
            self.scale_ = np.where(std < _DEGENERATE_STD, 1.0, std)
        else:
            lo = values.min(axis=(0, 1))
            hi = values.max(axis=(0, 1))
            rng = hi - lo
            self.center_ = lo
            self.scale_ = np.where(rng < _DEGENERATE_STD, 1.0, rng)
        return self

    def transform(self, panel: FeaturePanel) -> FeaturePanel:
        return FeaturePanel((panel.values - self.center_) / self.scale_)


class FrequencyTransform(BaseEstimator, TransformerMixin):
    """Replace the time axis with magnitudes of the real-input DFT.

    Output length is floor(T/2) + 1. Set check_energy to verify the
    Parseval identity after each transform (debug aid).
    """

    def __init__(self, check_energy=False):
        self.check_energy = check_energy

    def fit(self, panel, y=None):
        return self

    def transform(self, panel: FeaturePanel) -> FeaturePanel:
        if panel.n_steps < 2:
            raise ValidationError(f"frequency transform needs >= 2 steps, got {panel.n_steps}")
        mags = np.abs(np.fft.rfft(panel.values, axis=0))
        if self.check_energy:
            err = spectrum_energy_error(panel.values, mags)
            if err > 1e-6:
                raise ValidationError(f"Parseval identity violated: relative error {err:.3e}")
        return FeaturePanel(mags)


def spectrum_energy_error(values: np.ndarray, mags: np.ndarray) -> float:
    """Relative gap in the energy identity sum |X_k|^2 / T == sum x^2.

    mags holds the half spectrum of a real signal, so interior bins count
    twice; the Nyquist bin (present only for even T) counts once.
    """
    T = values.shape[0]
    sq = mags ** 2
    doubled = 2.0 * sq.sum(axis=0) - sq[0]
    if T % 2 == 0:
        doubled -= sq[-1]
    freq_energy = doubled / T
    time_energy = (values ** 2).sum(axis=0)
    scale = np.maximum(np.abs(time_energy), 1e-30)
    return float(np.max(np.abs(freq_energy - time_energy) / scale))


class TimeEmbedding(BaseEstimator, TransformerMixin):
    """Append sin/cos positional channels over the step index.

    For k = 0 .. dims/2 - 1 the pair sin(t / period_base^(2k/dims)),
    cos(t / period_base^(2k/dims)) is broadcast across nodes and appended
    after the original channels.
    """

    def __init__(self, dims=2, period_base=10000.0):
        self.dims = dims
        self.period_base = period_base

    def fit(self, panel, y=None):
        return self

    def transform(self, panel: FeaturePanel) -> FeaturePanel:
        dims = check_count(self.dims, "dims", minimum=2)
        if dims % 2 != 0:
            raise ValidationError(f"dims must be even, got {dims}")
        t = np.arange(panel.n_steps, dtype=np.float64)
        channels = []
        for k in range(dims // 2):
            phase = t / self.period_base ** (2.0 * k / dims)
            channels.append(np.sin(phase))
            channels.append(np.cos(phase))
        emb = np.stack(channels, axis=1)  # [T][dims]
        emb = np.broadcast_to(emb[:, None, :], (panel.n_steps, panel.n_nodes, dims))
        return FeaturePanel(np.concatenate([panel.values, emb], axis=2))


class AdjacencyNormalizer(BaseEstimator, TransformerMixin):
    """Symmetric degree normalization of A + I, kept as a graph."""

    def fit(self, graph, y=None):
        return self

    def transform(self, graph: StaticGraph) -> StaticGraph:
        return StaticGraph.from_dense(
            normalize_adjacency(graph), directed=graph.directed, allow_self_loops=True)


def normalize_adjacency(graph: StaticGraph) -> np.ndarray:
    """Dense D^(-1/2) (A + I) D^(-1/2) with D the degree matrix of A + I.

    The added self-loop guarantees every degree is positive, so an
    isolated node maps to a diagonal entry of exactly 1.
    """
    a = graph.weight_matrix() + np.eye(graph.n_nodes)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def normalize_features(panel: FeaturePanel, train_steps: int | None = None,
                       method: str = "zscore") -> FeaturePanel:
    """Normalize per channel with statistics from the first train_steps rows.

    train_steps=None uses the whole panel.
    """
    stats_panel = panel if train_steps is None else panel.slice_steps(0, train_steps)
    return FeatureNormalizer(method=method).fit(stats_panel).transform(panel)


def to_frequency(panel: FeaturePanel, check_energy: bool = False) -> FeaturePanel:
    return FrequencyTransform(check_energy=check_energy).fit(panel).transform(panel)


def add_time_embedding(panel: FeaturePanel, dims: int = 2,
                       period_base: float = 10000.0) -> FeaturePanel:
    return TimeEmbedding(dims=dims, period_base=period_base).fit(panel).transform(panel)


@dataclass(frozen=True)
class Decomposition:
    """Additive trend/seasonal/residual split of a 1-D series.

    trend and residual are NaN on boundary indices where the centered
    moving average is undefined; defined() masks them. The identity
    trend + seasonal + residual == series holds wherever trend is defined,
    and the seasonal component sums to ~0 over one period.
    """

    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def defined(self) -> np.ndarray:
        return ~np.isnan(self.trend)


def seasonal_decompose(series, period: int) -> Decomposition:
    """Classical additive decomposition with a centered moving average.

    Even periods use the standard 2 x period window with half weights at
    both ends. Seasonal values are phase means of the detrended series,
    re-centered to sum to zero.
    """
    x = as_float_array(series, "series", ndim=1)
    period = check_count(period, "period", minimum=2)
    T = len(x)
    if T < 2 * period:
        raise ValidationError(
            f"series length {T} is below 2 * period = {2 * period}")

    if period % 2 == 1:
        window = np.full(period, 1.0 / period)
    else:
        window = np.full(period + 1, 1.0 / period)
        window[0] = window[-1] = 0.5 / period
    half = period // 2
    trend = np.full(T, np.nan)
    trend[half:half + T - len(window) + 1] = np.convolve(x, window, mode="valid")

    detrended = x - trend
    phases = np.arange(T) % period
    means = np.array([np.nanmean(detrended[phases == k]) for k in range(period)])
    means -= means.mean()
    seasonal = means[phases]
    residual = x - trend - seasonal
    return Decomposition(trend=trend, seasonal=seasonal, residual=residual, period=period)


class TransformPipeline:
    """Ordered feature and graph transforms applied to a dataset.

    Feature transforms are fitted on the training segment of the panel as
    it stands at their stage, then applied to the whole panel. Graph
    transforms are applied to the static graph and to every dynamic
    snapshot. The input dataset is never mutated; an empty pipeline is
    the identity.
    """

    def __init__(self, features=(), graph=()):
        self.features = tuple(features)
        self.graph = tuple(graph)

    def apply(self, ds: EpiDataset) -> EpiDataset:
        panel = ds.panel
        for i, tf in enumerate(self.features):
            try:
                train_end = _split_bounds(panel.n_steps, ds.split)[0]
                fit_slice = panel.slice_steps(0, train_end) if train_end >= 1 else panel
                panel = tf.fit(fit_slice).transform(panel)
            except Exception as exc:
                raise TransformError(
                    f"feature transform at index {i} ({type(tf).__name__}): {exc}") from exc

        static = ds.static_graph
        dynamic = ds.dynamic_graph
        for i, tf in enumerate(self.graph):
            try:
                if static is not None:
                    static = tf.fit(static).transform(static)
                if dynamic is not None:
                    dynamic = DynamicGraph(
                        [tf.fit(snap).transform(snap) for snap in dynamic.snapshots])
            except Exception as exc:
                raise TransformError(
                    f"graph transform at index {i} ({type(tf).__name__}): {exc}") from exc

        states = ds.states
        if panel.n_steps != ds.panel.n_steps:
            # time axis was re-interpreted (e.g. frequency domain): drop
            # step-aligned companions rather than misalign them
            states = None
            if dynamic is not None and dynamic.n_steps != panel.n_steps:
                dynamic = None
        return EpiDataset(panel, states=states, static_graph=static,
                          dynamic_graph=dynamic, split=ds.split)

    def __call__(self, ds: EpiDataset) -> EpiDataset:
        return self.apply(ds)


def apply_pipeline(pipeline: TransformPipeline, ds: EpiDataset) -> EpiDataset:
    return pipeline.apply(ds)


FEATURE_TRANSFORMS = {
    "normalize_features": FeatureNormalizer,
    "to_frequency": FrequencyTransform,
    "add_time_embedding": TimeEmbedding,
}

GRAPH_TRANSFORMS = {
    "normalize_adjacency": AdjacencyNormalizer,
}


def pipeline_from_config(cfg: dict) -> TransformPipeline:
    """Build a pipeline from {"features": [...], "graph": [...]} specs.

    Each entry is {"name": <registry key>, ...params}.
    """

    def build(entry, registry, kind):
        entry = dict(entry)
        name = entry.pop("name", None)
        if name not in registry:
            raise ValidationError(
                f"unknown {kind} transform {name!r}; available: {sorted(registry)}")
        return registry[name](**entry)

    features = [build(e, FEATURE_TRANSFORMS, "feature") for e in cfg.get("features", [])]
    graph = [build(e, GRAPH_TRANSFORMS, "graph") for e in cfg.get("graph", [])]
    return TransformPipeline(features=features, graph=graph)
