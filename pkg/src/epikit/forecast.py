"""Windowed forecasting: window construction, forecasters, evaluation metrics.

Forecasters follow a two-level design. Series-level models (ARModel,
LinearDecompModel) are fitted on one 1-D series and predict a horizon from
any lookback window. Panel-level forecaster estimators wrap them per node
(no cross-node pooling) behind a common fit(panel, spec)/predict(window)
protocol used by evaluate_forecaster and the command line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ValidationError, as_float_array, check_count, check_positive
from .mechanistic import CompartmentParams, fit_compartmental, simulate_sir
from .types import EpiDataset, FeaturePanel, _split_bounds


@dataclass(frozen=True)
class WindowSpec:
    """Lookback/horizon pair defining the sliding-window geometry."""

    lookback: int
    horizon: int

    def __post_init__(self):
        check_count(self.lookback, "lookback", minimum=1)
        check_count(self.horizon, "horizon", minimum=1)

    @property
    def span(self) -> int:
        return self.lookback + self.horizon


def make_windows(panel: FeaturePanel, spec: WindowSpec):
    """All (input, target) windows at stride 1.

    Returns a list of pairs (input [lookback][node][feat],
    target [horizon][node][feat]); there are T - lookback - horizon + 1
    of them, and within each pair input and target are contiguous and
    non-overlapping.
    """
    T = panel.n_steps
    if T < spec.span:
        raise ValidationError(
            f"series too short: need lookback + horizon = {spec.span} steps, got {T}")
    vals = panel.values
    L, H = spec.lookback, spec.horizon
    return [(vals[t:t + L], vals[t + L:t + L + H]) for t in range(T - spec.span + 1)]


# ---------------------------------------------------------------------------
# autoregressive model


@dataclass(frozen=True)
class ARModel:
    """AR(p) on the d-times differenced series, fitted by least squares.

    coefs[i-1] multiplies the value i steps back. rank_deficient marks a
    singular design matrix (e.g. a constant series), in which case the
    minimum-norm least-squares solution was used.
    """

    coefs: tuple
    intercept: float
    p: int
    d: int
    tail: tuple  # last p + d observations of the training series
    rank_deficient: bool

    def predict(self, history, horizon: int) -> np.ndarray:
        x = as_float_array(history, "history", ndim=1)
        if len(x) < self.p + self.d:
            raise ValidationError(
                f"history must have at least p + d = {self.p + self.d} points, got {len(x)}")
        check_count(horizon, "horizon", minimum=1)
        levels = [x]
        for _ in range(self.d):
            levels.append(np.diff(levels[-1]))
        buf = list(levels[-1])
        coefs = np.asarray(self.coefs)
        preds = []
        for _ in range(horizon):
            recent = np.array(buf[-self.p:][::-1])  # y[t-1], ..., y[t-p]
            nxt = self.intercept + float(coefs @ recent)
            buf.append(nxt)
            preds.append(nxt)
        out = np.asarray(preds)
        for level in range(self.d - 1, -1, -1):
            out = levels[level][-1] + np.cumsum(out)
        return out

    def forecast(self, horizon: int) -> np.ndarray:
        """Continue the training series itself."""
        return self.predict(np.asarray(self.tail), horizon)


def fit_ar(series, p: int, d: int = 0) -> ARModel:
    """Fit AR(p) with intercept on the d-times differenced series by OLS."""
    x = as_float_array(series, "series", ndim=1)
    p = check_count(p, "p", minimum=1)
    if d not in (0, 1, 2):
        raise ValidationError(f"d must be 0, 1 or 2, got {d}")
    y = np.diff(x, n=d) if d else x
    if len(y) < 5 * p:
        raise ValidationError(
            f"need at least 5p = {5 * p} points after differencing, got {len(y)}")
    rows = len(y) - p
    design = np.empty((rows, p + 1))
    for lag in range(1, p + 1):
        design[:, lag - 1] = y[p - lag:len(y) - lag]
    design[:, p] = 1.0
    sol, _, rank, _ = np.linalg.lstsq(design, y[p:], rcond=None)
    return ARModel(
        coefs=tuple(float(c) for c in sol[:p]),
        intercept=float(sol[p]),
        p=p, d=d,
        tail=tuple(float(v) for v in x[-(p + d):]),
        rank_deficient=rank < p + 1,
    )


# ---------------------------------------------------------------------------
# trend + remainder linear model


def _edge_moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Length-preserving moving average with edge-replicated padding."""
    front = (window - 1) // 2
    back = window // 2
    padded = np.concatenate([np.full(front, x[0]), x, np.full(back, x[-1])])
    return np.convolve(padded, np.full(window, 1.0 / window), mode="valid")


@dataclass(frozen=True)
class LinearDecompModel:
    """Two linear lookback->horizon maps, one per decomposition component.

    Each lookback window is split into a moving-average trend and its
    remainder; independent least-squares maps (with intercept) forecast
    each component and the forecasts are summed.
    """

    trend_map: np.ndarray  # [lookback + 1][horizon]
    remainder_map: np.ndarray
    lookback: int
    horizon: int
    period: int
    rank_deficient: bool

    def predict(self, history) -> np.ndarray:
        x = as_float_array(history, "history", ndim=1)
        if len(x) != self.lookback:
            raise ValidationError(
                f"history length {len(x)} does not match lookback {self.lookback}")
        trend = _edge_moving_average(x, self.period)
        remainder = x - trend
        return (np.append(trend, 1.0) @ self.trend_map
                + np.append(remainder, 1.0) @ self.remainder_map)


def fit_trend_seasonal(series, spec: WindowSpec, period: int) -> LinearDecompModel:
    """Learn component-wise linear maps over all training windows.

    The prediction is the sum of the two component forecasts, so the maps
    are solved jointly: one least-squares problem over the concatenated
    [trend | remainder | 1] design, whose solution is then split into the
    per-component maps.
    """
    x = as_float_array(series, "series", ndim=1)
    period = check_count(period, "period", minimum=2)
    if len(x) < spec.span:
        raise ValidationError(
            f"series too short: need lookback + horizon = {spec.span} points, got {len(x)}")
    L, H = spec.lookback, spec.horizon
    n_win = len(x) - spec.span + 1
    design = np.empty((n_win, 2 * L + 1))
    targets = np.empty((n_win, H))
    for t in range(n_win):
        window = x[t:t + L]
        trend = _edge_moving_average(window, period)
        design[t, :L] = trend
        design[t, L:2 * L] = window - trend
        targets[t] = x[t + L:t + spec.span]
    design[:, 2 * L] = 1.0
    sol, _, rank, _ = np.linalg.lstsq(design, targets, rcond=None)
    # trend and remainder are both linear images of the window, so the
    # joint design never exceeds rank L + 1; flag anything below that
    return LinearDecompModel(
        trend_map=np.vstack([sol[:L], sol[2 * L:]]),
        remainder_map=np.vstack([sol[L:2 * L], np.zeros((1, H))]),
        lookback=L, horizon=H, period=period,
        rank_deficient=rank < L + 1,
    )


# ---------------------------------------------------------------------------
# mechanistic roll-forward


def forecast_mechanistic(observed, population: float, spec: WindowSpec,
                         init: CompartmentParams | None = None,
                         dt: float = 0.05, max_evals: int = 2000) -> np.ndarray:
    """Fit SIR rates on the lookback tail and roll the ODE forward.

    Returns the predicted infected counts at the next `horizon` unit times.
    """
    x = as_float_array(observed, "observed", ndim=1)
    if len(x) < spec.lookback:
        raise ValidationError(
            f"observed series has {len(x)} points, lookback needs {spec.lookback}")
    window = x[-spec.lookback:]
    population = check_positive(population, "population")
    if init is None:
        init = CompartmentParams(beta=0.3, gamma=0.1, population=population)
    fit = fit_compartmental(window, "sir", population, init, dt, max_evals=max_evals)
    i0 = float(window[0])
    n = fit.params.population
    total_time = float(spec.lookback - 1 + spec.horizon)
    traj = simulate_sir(fit.params, n - i0, i0, 0.0, total_time, dt)
    t_pred = np.arange(spec.lookback, spec.lookback + spec.horizon, dtype=np.float64)
    return np.interp(t_pred, traj.times, traj["I"])


# ---------------------------------------------------------------------------
# panel-level forecasters


class _PanelForecaster(BaseEstimator):
    """Shared plumbing: per-node series extraction and fit bookkeeping."""

    def _series(self, panel: FeaturePanel, node: int) -> np.ndarray:
        return panel.values[:, node, self.target_feature]

    def _require_fitted(self):
        if not hasattr(self, "spec_"):
            raise ValidationError(f"{type(self).__name__} is not fitted")

    def _window_matrix(self, window) -> np.ndarray:
        w = np.asarray(window, dtype=np.float64)
        if w.ndim != 3:
            raise ValidationError(f"window must be [lookback][node][feat], got shape {w.shape}")
        return w


class PersistenceForecaster(_PanelForecaster):
    """Repeat the last observed value across the horizon."""

    def __init__(self, target_feature=0):
        self.target_feature = target_feature

    def fit(self, panel, spec: WindowSpec):
        self.spec_ = spec
        return self

    def predict(self, window) -> np.ndarray:
        self._require_fitted()
        w = self._window_matrix(window)
        last = w[-1, :, self.target_feature]
        return np.repeat(last[None, :], self.spec_.horizon, axis=0)


class MeanForecaster(_PanelForecaster):
    """Forecast the lookback-window mean, per node."""

    def __init__(self, target_feature=0):
        self.target_feature = target_feature

    def fit(self, panel, spec: WindowSpec):
        self.spec_ = spec
        return self

    def predict(self, window) -> np.ndarray:
        self._require_fitted()
        w = self._window_matrix(window)
        mean = w[:, :, self.target_feature].mean(axis=0)
        return np.repeat(mean[None, :], self.spec_.horizon, axis=0)


class ARForecaster(_PanelForecaster):
    """Independent AR(p, d) per node, trained on the training segment."""

    def __init__(self, p=3, d=0, target_feature=0):
        self.p = p
        self.d = d
        self.target_feature = target_feature

    def fit(self, panel: FeaturePanel, spec: WindowSpec):
        if spec.lookback < self.p + self.d:
            raise ValidationError(
                f"lookback {spec.lookback} is below p + d = {self.p + self.d}")
        self.models_ = [fit_ar(self._series(panel, v), self.p, self.d)
                        for v in range(panel.n_nodes)]
        self.spec_ = spec
        return self

    def predict(self, window) -> np.ndarray:
        self._require_fitted()
        w = self._window_matrix(window)
        cols = [model.predict(w[:, v, self.target_feature], self.spec_.horizon)
                for v, model in enumerate(self.models_)]
        return np.stack(cols, axis=1)


class TrendSeasonalForecaster(_PanelForecaster):
    """Per-node trend/remainder linear maps (decomposition + linear heads)."""

    def __init__(self, period=6, target_feature=0):
        self.period = period
        self.target_feature = target_feature

    def fit(self, panel: FeaturePanel, spec: WindowSpec):
        self.models_ = [fit_trend_seasonal(self._series(panel, v), spec, self.period)
                        for v in range(panel.n_nodes)]
        self.spec_ = spec
        return self

    def predict(self, window) -> np.ndarray:
        self._require_fitted()
        w = self._window_matrix(window)
        cols = [model.predict(w[:, v, self.target_feature])
                for v, model in enumerate(self.models_)]
        return np.stack(cols, axis=1)


class MechanisticForecaster(_PanelForecaster):
    """Per-window SIR fit and ODE roll-forward, per node."""

    def __init__(self, population=1000.0, target_feature=0, dt=0.05, max_evals=2000):
        self.population = population
        self.target_feature = target_feature
        self.dt = dt
        self.max_evals = max_evals

    def fit(self, panel, spec: WindowSpec):
        if spec.lookback < 5:
            raise ValidationError(
                f"mechanistic forecaster needs lookback >= 5, got {spec.lookback}")
        self.spec_ = spec
        return self

    def predict(self, window) -> np.ndarray:
        self._require_fitted()
        w = self._window_matrix(window)
        cols = [forecast_mechanistic(
                    w[:, v, self.target_feature], self.population, self.spec_,
                    dt=self.dt, max_evals=self.max_evals)
                for v in range(w.shape[1])]
        return np.stack(cols, axis=1)


FORECASTERS = {
    "persistence": PersistenceForecaster,
    "mean": MeanForecaster,
    "ar": ARForecaster,
    "trend_seasonal": TrendSeasonalForecaster,
    "mechanistic": MechanisticForecaster,
}


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class ForecastReport:
    """Error metrics over all evaluation windows.

    mape is None when every target point was zero; mape_excluded counts
    the zero-target points left out of the MAPE mean. per_step holds the
    same metric block restricted to each horizon step.
    """

    mae: float
    rmse: float
    mape: Optional[float]
    mape_excluded: int
    per_step: tuple
    n_windows: int

    def as_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "mape": self.mape,
            "mape_excluded": self.mape_excluded,
            "per_step": [dict(block) for block in self.per_step],
            "n_windows": self.n_windows,
        }


def forecast_metrics(y_true, y_pred) -> dict:
    """MAE / RMSE / MAPE with zero targets excluded (and counted) from MAPE."""
    t = np.asarray(y_true, dtype=np.float64).ravel()
    p = np.asarray(y_pred, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise ValidationError(f"shape mismatch: targets {t.shape} vs predictions {p.shape}")
    if t.size == 0:
        raise ValidationError("cannot compute metrics on empty arrays")
    err = p - t
    nonzero = t != 0
    mape = float(np.mean(np.abs(err[nonzero]) / np.abs(t[nonzero]))) if nonzero.any() else None
    return {
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "mape": mape,
        "mape_excluded": int(t.size - nonzero.sum()),
    }


def evaluate_forecaster(model, ds: EpiDataset, spec: WindowSpec) -> ForecastReport:
    """Fit on the training segment, evaluate on test-segment windows.

    Windows are drawn entirely from the test segment; metrics are averaged
    over all test windows, nodes and horizon steps. Deterministic.
    """
    panel = ds.panel
    train_end, val_end = _split_bounds(panel.n_steps, ds.split)
    if hasattr(model, "fit"):
        if train_end < 1:
            raise ValidationError("training segment is empty")
        model.fit(panel.slice_steps(0, train_end), spec)

    n_test = panel.n_steps - val_end
    if n_test < spec.span:
        raise ValidationError(
            f"no valid windows: test segment has {n_test} steps, "
            f"need lookback + horizon = {spec.span}")
    windows = make_windows(panel.slice_steps(val_end, panel.n_steps), spec)

    target_feature = getattr(model, "target_feature", 0)
    preds = []
    trues = []
    for window_in, window_target in windows:
        yhat = np.asarray(model.predict(window_in), dtype=np.float64)
        expected = (spec.horizon, panel.n_nodes)
        if yhat.shape != expected:
            raise ValidationError(
                f"forecaster returned shape {yhat.shape}, expected {expected}")
        preds.append(yhat)
        trues.append(window_target[:, :, target_feature])
    pred_arr = np.stack(preds)  # [window][horizon][node]
    true_arr = np.stack(trues)

    overall = forecast_metrics(true_arr, pred_arr)
    per_step = tuple(forecast_metrics(true_arr[:, h], pred_arr[:, h])
                     for h in range(spec.horizon))
    return ForecastReport(per_step=per_step, n_windows=len(windows), **overall)
