"""OD demand forecasting: calendar averages and lag regression on station flows.

Trip records only become available when the passenger taps out, so the OD
and station counts of a window are treated as resolved ``d`` windows after it
ends. A forecast issued at window ``c`` therefore sees truth up to window
``c - d`` and fills later lags with the model's own predictions.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import date
from typing import Protocol, Sequence

import numpy as np

from .afc import FlowSeries


CENTERINGS = ("window", "global")


class ForecastError(ValueError):
    pass


class SingularDesignError(ForecastError):
    pass


class LookaheadError(RuntimeError):
    """A forecaster asked for a window that had not been revealed yet."""


@dataclass
class ODForecast:
    """Predicted tap-ins per (window, OD pair, category) for one service day; NaN marks a gap."""

    day: date
    width: float
    od_pairs: list[tuple[str, str]]
    categories: list[str]
    counts: np.ndarray
    horizon: int = 1
    clamped: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ForecastError("horizon must be >= 1")

    @classmethod
    def from_flows(cls, flows: FlowSeries, day_index: int, horizon: int = 1) -> "ODForecast":
        return cls(flows.days[day_index], flows.width, list(flows.od_pairs), list(flows.categories),
                   flows.od[day_index].astype(float), horizon)

    @classmethod
    def from_totals(cls, day: date, width: float, od_pairs, categories, totals: np.ndarray,
                    shares: np.ndarray, horizon: int = 1) -> "ODForecast":
        """Split category-blind totals (windows, od) with per-OD category shares (od, categories)."""
        totals = np.asarray(totals, float)
        clamped = int(np.sum(totals < 0))
        totals = np.where(totals < 0, 0.0, totals)
        return cls(day, width, list(od_pairs), list(categories), totals[:, :, None] * shares[None], horizon, clamped)

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=-1)

    def __add__(self, other: "ODForecast") -> "ODForecast":
        return ODForecast(self.day, self.width, self.od_pairs, self.categories, self.counts + other.counts,
                          self.horizon)


# ---------------------------------------------------------------- test-day view

class DayView:
    """Truth for one day that can only be read up to a moving frontier.

    Every read is logged; reading past the frontier raises LookaheadError.
    """

    def __init__(self, inflow: np.ndarray, outflow: np.ndarray, od: np.ndarray):
        self._inflow = np.asarray(inflow, float)
        self._outflow = np.asarray(outflow, float)
        self._od = np.asarray(od, float)
        self.frontier = -1
        self.log: list[tuple[int, int]] = []  # (frontier, window) per read

    @classmethod
    def from_flows(cls, flows: FlowSeries, day_index: int) -> "DayView":
        return cls(flows.inflow[day_index], flows.outflow[day_index], flows.od_total()[day_index])

    @property
    def n_windows(self) -> int:
        return self._od.shape[0]

    def _check(self, w: int) -> None:
        self.log.append((self.frontier, w))
        if w > self.frontier:
            raise LookaheadError(f"window {w} read with frontier {self.frontier}")

    def inflow(self, w: int) -> np.ndarray:
        self._check(w)
        return self._inflow[w]

    def outflow(self, w: int) -> np.ndarray:
        self._check(w)
        return self._outflow[w]

    def od(self, w: int) -> np.ndarray:
        self._check(w)
        return self._od[w]

    def score_truth(self, w: int) -> np.ndarray:
        """Truth of the scored window; only legal once the prediction has been made."""
        return self._od[w]


class Forecaster(Protocol):
    name: str

    def predict(self, view: DayView, window: int, frontier: int, cache: dict) -> np.ndarray:
        """OD totals for ``window`` using truth up to ``frontier`` only."""
        ...


# ---------------------------------------------------------------- calendar

def calendar_predict(history: FlowSeries, window: int | None = None) -> np.ndarray:
    """Mean OD totals over the history days: (od,) for one window or (windows, od) for the day."""
    if len(history.days) < 1:
        raise ForecastError("calendar model needs at least one history day")
    mean = history.od_total().mean(axis=0)
    if window is None:
        return mean
    if not 0 <= window < history.n_windows:
        raise ForecastError(f"window {window} outside the day partition 0..{history.n_windows - 1}")
    return mean[window]


@dataclass
class CalendarModel:
    od_mean: np.ndarray  # (windows, od)
    in_mean: np.ndarray  # (windows, stations)
    out_mean: np.ndarray
    name: str = "calendar"

    @classmethod
    def fit(cls, history: FlowSeries) -> "CalendarModel":
        return cls(calendar_predict(history), history.inflow.mean(axis=0), history.outflow.mean(axis=0))

    def predict(self, view: DayView, window: int, frontier: int, cache: dict) -> np.ndarray:
        return self.od_mean[window]

    def to_dict(self) -> dict:
        return {"kind": self.name, "windows": int(self.od_mean.shape[0])}


# ---------------------------------------------------------------- lag regression

def _solve_ridge(X: np.ndarray, Y: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """min ||Y - c - X B||^2 + lam ||B||^2 with an unpenalized intercept."""
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    G = Xc.T @ Xc
    if lam == 0.0:
        if np.linalg.matrix_rank(G) < G.shape[0]:
            raise SingularDesignError("design matrix is rank deficient; use a regularization strength lambda > 0")
    B = np.linalg.solve(G + lam * np.eye(G.shape[0]), Xc.T @ Yc)
    return B, ym - xm @ B


def _solve_lasso(X: np.ndarray, Y: np.ndarray, lam: float, max_iter: int = 5000,
                 tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """min (1/2n)||Y - c - X B||^2 + lam ||B||_1 by cyclic coordinate descent, all targets at once."""
    n, p = X.shape
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    col_sq = (Xc ** 2).sum(axis=0) / n
    if lam == 0.0 and np.linalg.matrix_rank(Xc) < p:
        raise SingularDesignError("design matrix is rank deficient; use a regularization strength lambda > 0")
    B = np.zeros((p, Y.shape[1]))
    R = Yc.copy()
    scale = max(float(np.abs(Yc).max()), 1.0)
    for _ in range(max_iter):
        biggest = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = B[j].copy()
            rho = Xc[:, j] @ R / n + col_sq[j] * old
            new = np.sign(rho) * np.maximum(np.abs(rho) - lam, 0.0) / col_sq[j]
            delta = new - old
            if np.any(delta):
                R -= np.outer(Xc[:, j], delta)
                B[j] = new
                biggest = max(biggest, float(np.abs(delta).max()) * np.sqrt(col_sq[j]))
        if biggest <= tol * scale:
            break
    return B, ym - xm @ B


@dataclass
class LagRegressionModel:
    """Per-target linear model on lagged station inflow and outflow.

    Targets are every OD pair followed by the inflow and outflow of the
    predictor stations; the latter are needed to roll the model forward when
    a lag is not resolved yet.

    With ``centering="window"`` every series is taken relative to its
    historical mean at the same window, so the model predicts the calendar
    mean plus a lag-driven correction. ``"global"`` uses raw counts and one
    intercept per target.
    """

    od_pairs: list[tuple[str, str]]
    stations: list[str]  # all stations of the flow series
    predictors: list[int]  # indices of predictor stations
    max_lag: int
    exclusion: int
    reg: str
    lam: float
    coef: np.ndarray  # (features, targets)
    intercept: np.ndarray  # (targets,)
    fallback: CalendarModel
    centering: str = "window"
    name: str = "lagreg"

    def __post_init__(self) -> None:
        if self.max_lag < 1 or self.lam < 0 or self.exclusion < 0:
            raise ForecastError("need max_lag >= 1, lambda >= 0, d >= 0")
        if self.centering not in CENTERINGS:
            raise ForecastError(f"centering must be one of {CENTERINGS}")

    @property
    def lags(self) -> range:
        return range(self.exclusion + 1, self.exclusion + self.max_lag + 1)

    @property
    def first_window(self) -> int:
        """Earliest window whose lags all lie inside the day."""
        return self.exclusion + self.max_lag

    def feature_names(self) -> list[tuple[str, int, str]]:
        return [(self.stations[s], l, kind) for l in self.lags for kind in ("in", "out") for s in self.predictors]

    def _means(self, w: int) -> np.ndarray:
        fb = self.fallback
        return np.concatenate([fb.od_mean[w], fb.in_mean[w, self.predictors], fb.out_mean[w, self.predictors]])

    def _state(self, view: DayView, w: int, frontier: int, cache: dict) -> np.ndarray:
        """Predicted target vector for window w, clamped at zero."""
        key = (frontier, w)
        if key in cache:
            return cache[key]
        n_od = len(self.od_pairs)
        if w < self.first_window:
            out = self._means(w)
        else:
            parts = []
            for l in self.lags:
                src = w - l
                if src <= frontier:
                    x = np.concatenate([view.inflow(src)[self.predictors], view.outflow(src)[self.predictors]])
                else:
                    x = self._state(view, src, frontier, cache)[n_od:]
                if self.centering == "window":
                    x = x - self._means(src)[n_od:]
                parts.append(x)
            raw = np.concatenate(parts) @ self.coef + self.intercept
            if self.centering == "window":
                raw = raw + self._means(w)
            out = np.maximum(raw, 0.0)
        cache[key] = out
        return out

    def predict(self, view: DayView, window: int, frontier: int, cache: dict) -> np.ndarray:
        return self._state(view, window, frontier, cache)[:len(self.od_pairs)]

    def to_dict(self) -> dict:
        names = [f"{s}|{l}|{k}" for s, l, k in self.feature_names()]
        targets = []
        for t, od in enumerate(self.od_pairs):
            targets.append({"origin": od[0], "dest": od[1], "intercept": float(self.intercept[t]),
                            "coef": {n: float(c) for n, c in zip(names, self.coef[:, t])}})
        return {"kind": self.name, "reg": self.reg, "lambda": self.lam, "max_lag": self.max_lag,
                "centering": self.centering,
                "exclusion": self.exclusion, "predictor_stations": [self.stations[s] for s in self.predictors],
                "targets": targets}


def lag_design(history: FlowSeries, predictors: Sequence[int], max_lag: int, exclusion: int,
               centering: str = "window") -> tuple[np.ndarray, np.ndarray]:
    """Feature rows and targets for every (day, window) whose lags fit inside the day.

    Returns (X, Y) with Y = [od totals, inflow of predictors, outflow of predictors].
    """
    if centering not in CENTERINGS:
        raise ForecastError(f"centering must be one of {CENTERINGS}")
    first = exclusion + max_lag
    n_w = history.n_windows
    if first >= n_w:
        raise ForecastError("not enough windows per day for the requested lags")
    pred = list(predictors)
    series = np.concatenate([history.od_total(), history.inflow[:, :, pred], history.outflow[:, :, pred]],
                            axis=2).astype(float)
    if centering == "window":
        series = series - series.mean(axis=0)
    n_od = len(history.od_pairs)
    blocks = [series[:, first - l:n_w - l, n_od:] for l in range(exclusion + 1, exclusion + max_lag + 1)]
    X = np.concatenate(blocks, axis=2).reshape(-1, 2 * len(pred) * max_lag)
    Y = series[:, first:].reshape(X.shape[0], -1)
    return X, Y


def fit_lag_regression(history: FlowSeries, max_lag: int = 3, exclusion: int = 6, reg: str = "ridge",
                       lam: float = 1.0, stations: Sequence[str] | None = None,
                       centering: str = "window") -> LagRegressionModel:
    if reg not in ("ridge", "lasso"):
        raise ForecastError(f"unknown regularization {reg!r}")
    if max_lag < 1 or lam < 0 or exclusion < 0:
        raise ForecastError("need max_lag >= 1, lambda >= 0, d >= 0")
    names = list(stations) if stations is not None else list(history.stations)
    unknown = set(names) - set(history.stations)
    if unknown:
        raise ForecastError(f"unknown predictor stations {sorted(unknown)}")
    pred = [history.stations.index(s) for s in names]
    X, Y = lag_design(history, pred, max_lag, exclusion, centering)
    if X.shape[0] < 2:
        raise ForecastError(f"insufficient rows ({X.shape[0]}) for the lag regression")
    B, c = (_solve_ridge if reg == "ridge" else _solve_lasso)(X, Y, lam)
    return LagRegressionModel(list(history.od_pairs), list(history.stations), pred, max_lag, exclusion, reg,
                              lam, B, c, CalendarModel.fit(history), centering)


# ---------------------------------------------------------------- walk-forward

@dataclass
class WalkForwardResult:
    model: str
    horizons: list[int]
    mse: dict[int, float]
    predictions: dict[int, np.ndarray] = field(default_factory=dict)  # horizon -> (windows, od)


def forecast_day(model: Forecaster, view: DayView, horizon: int, exclusion: int) -> np.ndarray:
    """Predict every window of the day ``horizon`` steps ahead, revealing truth as the day advances."""
    if horizon < 1:
        raise ForecastError("horizon must be >= 1")
    n_w = view.n_windows
    out = np.zeros((n_w, view.score_truth(0).shape[0]))
    for w in range(n_w):
        issue = w - horizon
        view.frontier = issue - exclusion
        out[w] = model.predict(view, w, view.frontier, {})
    view.frontier = n_w - 1
    return out


def walk_forward_eval(model: Forecaster, view: DayView, horizons: Sequence[int] = (1, 4, 6),
                      exclusion: int = 6) -> WalkForwardResult:
    """MSE over all windows and OD pairs of the test day at each horizon."""
    if any(h < 1 for h in horizons):
        raise ForecastError("horizon must be >= 1")
    truth = np.array([view.score_truth(w) for w in range(view.n_windows)])
    mse, preds = {}, {}
    for h in horizons:
        p = forecast_day(model, view, h, exclusion)
        preds[h] = p
        mse[h] = float(np.mean((p - truth) ** 2))
    return WalkForwardResult(getattr(model, "name", type(model).__name__), list(horizons), mse, preds)


def forecast_csv(day: date, od_pairs: Sequence[tuple[str, str]], predictions: dict[int, np.ndarray]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["day", "window", "origin", "dest", "horizon", "prediction"])
    for h in sorted(predictions):
        p = predictions[h]
        for t in range(p.shape[0]):
            for k, (o, d) in enumerate(od_pairs):
                w.writerow([day.isoformat(), t, o, d, h, f"{p[t, k]:.6f}"])
    return buf.getvalue()


def model_json(model) -> str:
    return json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n"
