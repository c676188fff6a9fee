"""In-situ passenger density on edges and alighting counts at stations.

A cohort of ``V`` passengers tapping in at time ``tau`` on route ``m`` is on
the k-th link of the route at time ``t`` with probability
``cdf_{D(k-1)}(t - tau) - cdf_{D(k)}(t - tau)``, where ``D(k)`` is the
truncated-normal approximation of the time to finish the first ``k`` links.
Edge density sums this over travel links, OD pairs, categories, routes and
tap-in times; alighting uses the full-route distribution. Tap-in times within
a window are represented by ``sub_points`` evenly spaced points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import truncnorm as tn
from .afc import FlowSeries
from .network import LinkKind, MetroNetwork, Route, RouteChoiceSet
from .od_forecast import DayView, Forecaster, ODForecast
from .route_time import LinkParamSet, RouteWeights, atomic_write_text

DEFAULT_SUB_POINTS = 10


class ForecastGapError(ValueError):
    pass


@dataclass(frozen=True)
class ReachTimeParams:
    edge: str
    position: int  # index of the edge within the route
    direction: int  # +1 when running from edge.a to edge.b
    arrival: tn.TruncNormParams  # tap-in to entering the edge
    leave: tn.TruncNormParams  # tap-in to leaving the edge


def _cumulative(route: Route, params: LinkParamSet) -> list[tn.TruncNormParams]:
    """Time to finish the first k links for k = 1..len(links)."""
    out, acc = [], []
    for link in route.links:
        acc.append(params[link])
        out.append(tn.sum_approx(acc))
    return out


def reach_params(net: MetroNetwork, route: Route, params: LinkParamSet) -> list[ReachTimeParams]:
    cum = _cumulative(route, params)
    out, pos, cur = [], 0, route.origin
    for j, link in enumerate(route.links):
        if link.kind is not LinkKind.TRAVEL:
            continue
        e = net.edges[link.anchor]
        out.append(ReachTimeParams(e.id, pos, 1 if cur == e.a else -1, cum[j - 1], cum[j]))
        cur = e.other(cur)
        pos += 1
    return out


def cohort_state_probabilities(route: Route, params: LinkParamSet, elapsed: float) -> dict[str, float]:
    """Where one passenger of a cohort is ``elapsed`` minutes after tap-in.

    Keys are ``str(link)`` for each link of the route plus ``"exited"``.
    """
    cum = _cumulative(route, params)
    out, prev = {}, 1.0 if elapsed >= 0 else 0.0
    for link, d in zip(route.links, cum):
        c = tn.cdf(d, elapsed)
        out[str(link)] = out.get(str(link), 0.0) + max(prev - c, 0.0)
        prev = c
    out["exited"] = prev
    return out


@dataclass
class EdgeInclusion:
    od_pairs: list[tuple[str, str]]
    categories: list[str]
    edges: list[str]
    prob: np.ndarray  # (od, category, edge)

    def get(self, od: tuple[str, str], category: str, edge: str) -> float:
        return float(self.prob[self.od_pairs.index(od), self.categories.index(category), self.edges.index(edge)])


def edge_inclusion(route_sets: Mapping[tuple[str, str], RouteChoiceSet], weights: RouteWeights,
                   edges: Sequence[str]) -> EdgeInclusion:
    """Probability that a category-c passenger of each OD pair rides each edge."""
    ods = sorted(route_sets)
    e_idx = {e: k for k, e in enumerate(edges)}
    cats = weights.categories
    prob = np.zeros((len(ods), len(cats), len(edges)))
    for p, od in enumerate(ods):
        w = weights.matrix(od, len(route_sets[od].routes))
        for m, route in enumerate(route_sets[od].routes):
            for e in set(route.edges):
                prob[p, :, e_idx[e]] += w[:, m]
    return EdgeInclusion(ods, list(cats), list(edges), np.clip(prob, 0.0, 1.0))


@dataclass
class DensityField:
    day: date
    instants: np.ndarray  # minutes after midnight
    edges: list[str]
    stations: list[str]
    directional: np.ndarray  # (instants, edges, 2): a->b, b->a
    in_station: np.ndarray  # (instants, stations)

    @property
    def counts(self) -> np.ndarray:
        return self.directional.sum(axis=2)

    def timestamp(self, k: int) -> datetime:
        return datetime.combine(self.day, datetime.min.time()) + timedelta(minutes=float(self.instants[k]))

    def to_csv(self) -> str:
        lines = ["edge_id,timestamp,expected_count"]
        c = self.counts
        for k in range(len(self.instants)):
            ts = self.timestamp(k).strftime("%Y-%m-%d %H:%M:%S")
            for e, eid in enumerate(self.edges):
                lines.append(f"{eid},{ts},{c[k, e]:.6f}")
        return "\n".join(lines) + "\n"

    def snapshots(self) -> list[dict]:
        c = self.counts
        return [{"timestamp": self.timestamp(k).strftime("%Y-%m-%d %H:%M:%S"),
                 "edges": [{"id": eid, "count": round(float(c[k, e]), 6)} for e, eid in enumerate(self.edges)],
                 "stations": [{"id": sid, "in_station_count": round(float(self.in_station[k, s]), 6)}
                              for s, sid in enumerate(self.stations)]}
                for k in range(len(self.instants))]

    def line_matrices(self, net: MetroNetwork, line_id: str) -> dict[str, dict]:
        """Per-direction matrices for one line: rows are edges in running order, columns instants."""
        order, stations = net.line_edge_order(line_id)
        idx = [self.edges.index(e) for e in order]
        fwd, bwd = [], []
        for k, eid in enumerate(order):
            e = net.edges[eid]
            d = 0 if stations[k] == e.a else 1
            fwd.append(self.directional[:, idx[k], d])
            bwd.append(self.directional[:, idx[k], 1 - d])
        return {
            "forward": {"stations": stations, "edges": order, "matrix": np.array(fwd)},
            "backward": {"stations": stations[::-1], "edges": order[::-1], "matrix": np.array(bwd)[::-1]},
        }


class DensityEngine:
    """Precomputed link-occupancy kernels for every (OD pair, route, link)."""

    def __init__(self, net: MetroNetwork, route_sets: Mapping[tuple[str, str], RouteChoiceSet],
                 weights: RouteWeights, params: LinkParamSet, sub_points: int = DEFAULT_SUB_POINTS):
        if sub_points < 1:
            raise ValueError("sub_points must be >= 1")
        self.net = net
        self.sub_points = sub_points
        self.od_pairs = sorted(route_sets)
        self.categories = list(weights.categories)
        self.edges = sorted(net.edges)
        self.stations = net.station_ids
        e_idx = {e: k for k, e in enumerate(self.edges)}
        s_idx = {s: k for k, s in enumerate(self.stations)}
        seg = {k: [] for k in ("od", "route_w", "prev", "cur", "edge_slot", "station", "first")}
        fin = {k: [] for k in ("od", "route_w", "dist", "dest")}
        max_b = 0.0
        for p, od in enumerate(self.od_pairs):
            w = weights.matrix(od, len(route_sets[od].routes))
            for m, route in enumerate(route_sets[od].routes):
                cum = _cumulative(route, params)
                max_b = max(max_b, cum[-1].b)
                cur = route.origin
                for j, link in enumerate(route.links):
                    seg["od"].append(p)
                    seg["route_w"].append(w[:, m])
                    seg["prev"].append(cum[j - 1] if j else None)
                    seg["cur"].append(cum[j])
                    seg["first"].append(j == 0)
                    if link.kind is LinkKind.TRAVEL:
                        e = net.edges[link.anchor]
                        seg["edge_slot"].append(2 * e_idx[e.id] + (0 if cur == e.a else 1))
                        seg["station"].append(-1)
                        cur = e.other(cur)
                    else:
                        seg["edge_slot"].append(-1)
                        seg["station"].append(s_idx[link.anchor])
                fin["od"].append(p)
                fin["route_w"].append(w[:, m])
                fin["dist"].append(cum[-1])
                fin["dest"].append(s_idx[route.dest])
        self.max_b = max_b
        self.seg_od = np.array(seg["od"])
        self.seg_w = np.array(seg["route_w"])  # (segments, categories)
        self.seg_first = np.array(seg["first"])
        self.seg_edge_slot = np.array(seg["edge_slot"])
        self.seg_station = np.array(seg["station"])
        unit = tn.TruncNormParams(0.0, 1.0, 0.0, 1.0)  # placeholder where there is no previous link
        self.prev = _stack([d or unit for d in seg["prev"]])
        self.cur = _stack(seg["cur"])
        self.fin_od = np.array(fin["od"])
        self.fin_w = np.array(fin["route_w"])
        self.fin = _stack(fin["dist"])
        self.fin_dest = np.array(fin["dest"])

    # -- helpers
    def lookback_windows(self, width: float) -> int:
        return int(math.ceil(self.max_b / width))

    def _align(self, forecast: ODForecast) -> np.ndarray:
        if forecast.categories != self.categories:
            raise ValueError(f"forecast categories {forecast.categories} differ from model {self.categories}")
        if forecast.od_pairs == self.od_pairs:
            return forecast.counts
        idx = {od: k for k, od in enumerate(forecast.od_pairs)}
        out = np.zeros((forecast.counts.shape[0], len(self.od_pairs), len(self.categories)))
        for p, od in enumerate(self.od_pairs):
            if od in idx:
                out[:, p] = forecast.counts[:, idx[od]]
        return out

    def _sources(self, counts: np.ndarray, width: float, t_lo: float, t_hi: float):
        """Sub-window tap-in points in [t_lo, t_hi) with their counts, checking for gaps."""
        n_w = counts.shape[0]
        w0 = max(int(math.floor(t_lo / width)), 0)
        w1 = min(int(math.floor(t_hi / width)), n_w - 1)
        if w1 < w0:
            return np.zeros(0), np.zeros((0,) + counts.shape[1:])
        block = counts[w0:w1 + 1]
        gaps = np.nonzero(np.isnan(block).any(axis=(1, 2)))[0]
        if len(gaps):
            raise ForecastGapError(f"forecast has no values for windows {(gaps + w0).tolist()} inside the lookback")
        k = self.sub_points
        offs = (np.arange(k) + 0.5) * width / k
        taus = (np.arange(w0, w1 + 1)[:, None] * width + offs[None]).ravel()
        vals = np.repeat(block / k, k, axis=0)
        return taus, vals

    # -- predictions
    def predict_density(self, forecast: ODForecast, instants: Sequence[float]) -> DensityField:
        counts = self._align(forecast)
        instants = np.asarray(instants, dtype=float)
        n_e, n_s = len(self.edges), len(self.stations)
        directional = np.zeros((len(instants), n_e, 2))
        in_station = np.zeros((len(instants), n_s))
        on_edge = self.seg_edge_slot >= 0
        for i, t in enumerate(instants):
            taus, vals = self._sources(counts, forecast.width, t - self.max_b - forecast.width, t)
            keep = taus < t
            taus, vals = taus[keep], vals[keep]
            if len(taus) == 0:
                continue
            lag = t - taus  # (q,)
            # cohort size per (segment, source point)
            cohort = np.einsum("qsc,sc->sq", vals[:, self.seg_od, :], self.seg_w)
            occ = self._occupancy(lag)
            mass = (cohort * occ).sum(axis=1)
            slots = np.bincount(self.seg_edge_slot[on_edge], mass[on_edge], minlength=2 * n_e)
            directional[i] = slots.reshape(n_e, 2)
            in_station[i] = np.bincount(self.seg_station[~on_edge], mass[~on_edge], minlength=n_s)
        return DensityField(forecast.day, instants, list(self.edges), list(self.stations), directional, in_station)

    def _occupancy(self, lag: np.ndarray) -> np.ndarray:
        """P(on segment) for every segment and lag, shape (segments, lags)."""
        x = lag[None, :]
        c_cur = tn.cdf_arr(x, *(v[:, None] for v in self.cur))
        c_prev = tn.cdf_arr(x, *(v[:, None] for v in self.prev))
        c_prev = np.where(self.seg_first[:, None], (x >= 0).astype(float), c_prev)
        return np.clip(c_prev - c_cur, 0.0, None)

    def predict_alighting(self, forecast: ODForecast, windows: Sequence[int] | None = None) -> np.ndarray:
        """Expected tap-outs per (window, station) for the requested windows of the forecast day."""
        counts = self._align(forecast)
        width = forecast.width
        if windows is None:
            windows = range(counts.shape[0])
        windows = list(windows)
        out = np.zeros((len(windows), len(self.stations)))
        for i, w in enumerate(windows):
            w_start, w_end = w * width, (w + 1) * width
            taus, vals = self._sources(counts, width, w_start - self.max_b - width, w_end)
            keep = taus < w_end
            taus, vals = taus[keep], vals[keep]
            if len(taus) == 0:
                continue
            cohort = np.einsum("qrc,rc->rq", vals[:, self.fin_od, :], self.fin_w)
            hi = tn.cdf_arr((w_end - taus)[None], *(v[:, None] for v in self.fin))
            lo = tn.cdf_arr((w_start - taus)[None], *(v[:, None] for v in self.fin))
            mass = (cohort * (hi - lo)).sum(axis=1)
            out[i] = np.bincount(self.fin_dest, mass, minlength=len(self.stations))
        return out


def _stack(dists: Sequence[tn.TruncNormParams]) -> tuple[np.ndarray, ...]:
    return (np.array([d.mu for d in dists]), np.array([d.sigma for d in dists]),
            np.array([d.a for d in dists]), np.array([d.b for d in dists]))


def predict_density(net: MetroNetwork, forecast: ODForecast, route_sets, weights: RouteWeights,
                    params: LinkParamSet, instants: Sequence[float],
                    sub_points: int = DEFAULT_SUB_POINTS) -> DensityField:
    return DensityEngine(net, route_sets, weights, params, sub_points).predict_density(forecast, instants)


def predict_alighting(net: MetroNetwork, forecast: ODForecast, route_sets, weights: RouteWeights,
                      params: LinkParamSet, windows: Sequence[int] | None = None,
                      sub_points: int = DEFAULT_SUB_POINTS) -> np.ndarray:
    return DensityEngine(net, route_sets, weights, params, sub_points).predict_alighting(forecast, windows)


def write_density(field: DensityField, csv_path: str | Path, json_path: str | Path | None = None) -> None:
    atomic_write_text(csv_path, field.to_csv())
    if json_path is not None:
        atomic_write_text(json_path, json.dumps(field.snapshots(), indent=1) + "\n")


def alighting_csv(day: date, stations: Sequence[str], windows: Sequence[int], values: np.ndarray) -> str:
    lines = ["station_id,window,expected_count"]
    for i, w in enumerate(windows):
        for s, sid in enumerate(stations):
            lines.append(f"{sid},{w},{values[i, s]:.6f}")
    return "\n".join(lines) + "\n"


@dataclass
class AlightingEval:
    horizons: list[int]
    pipe_mse: dict[int, float]
    calendar_mse: float
    pipe: dict[int, np.ndarray]  # horizon -> (windows, stations)
    calendar: np.ndarray
    truth: np.ndarray


def alighting_walk_forward(engine: DensityEngine, model: Forecaster, view: DayView, truth_out: np.ndarray,
                           history: FlowSeries, day: date, horizons: Sequence[int] = (1, 4, 6),
                           exclusion: int = 6) -> AlightingEval:
    """Score PIPE alighting against the calendar outflow baseline on one test day.

    For a target window issued ``h`` windows ahead, OD counts up to the
    resolved frontier are the truth and later windows come from ``model``.
    """
    width = history.width
    shares = history.category_shares()
    n_w = history.n_windows
    span = engine.lookback_windows(width) + 1
    truth_out = np.asarray(truth_out, float)
    calendar = history.outflow.mean(axis=0)
    idx = [history.stations.index(s) for s in engine.stations]
    pipe, mse = {}, {}
    for h in horizons:
        if h < 1:
            raise ValueError("horizon must be >= 1")
        pred = np.zeros((n_w, len(engine.stations)))
        for w in range(n_w):
            frontier = w - h - exclusion
            view.frontier = frontier
            cache: dict = {}
            totals = np.zeros((n_w, len(history.od_pairs)))
            for src in range(max(w - span, 0), w + 1):
                totals[src] = view.od(src) if src <= frontier else model.predict(view, src, frontier, cache)
            fc = ODForecast.from_totals(day, width, history.od_pairs, history.categories, totals, shares, h)
            pred[w] = engine.predict_alighting(fc, [w])[0]
        view.frontier = n_w - 1
        pipe[h] = pred
        mse[h] = float(np.mean((pred - truth_out[:, idx]) ** 2))
    cal_mse = float(np.mean((calendar - truth_out) ** 2))
    return AlightingEval(list(horizons), mse, cal_mse, pipe, calendar, truth_out)
