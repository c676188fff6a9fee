"""Synthetic smart-card data with exact event-level ground truth.

Trips are drawn window by window from Poisson demand, choose a route from the
planted route weights and then draw every transit link duration from its own
truncated normal. Nothing here uses the route-level approximation that the
fitter relies on, so the fitter is checked against the exact generative law.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from . import truncnorm as tn
from .afc import TripRecord, write_trips
from .network import LinkKind, MetroNetwork, RouteChoiceSet, TransitLink, load_network
from .route_time import LinkParamSet, RouteWeights


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """Planted model plus demand.

    The Poisson rate of (window w, OD pair p, category c) on day k is
    ``base_rates[p, c] * profile[w] * day_factors[k]``.
    """

    network: MetroNetwork
    planted: LinkParamSet
    weights: RouteWeights
    base_rates: np.ndarray  # (od pairs, categories)
    profile: np.ndarray  # (windows,)
    day_factors: np.ndarray  # (days,)
    seed: int = 7
    start_date: date = date(2016, 1, 25)
    width: float = 20.0
    beta: float = 2.0
    sigma: int = 2
    network_path: str | None = None

    @property
    def categories(self) -> list[str]:
        return self.weights.categories

    @property
    def days(self) -> int:
        return len(self.day_factors)

    @property
    def od_pairs(self) -> list[tuple[str, str]]:
        return self.network.od_pairs()

    def route_sets(self) -> dict[tuple[str, str], RouteChoiceSet]:
        return self.network.all_route_sets(self.beta, self.sigma)

    def rates(self, day: int) -> np.ndarray:
        """Expected trips, shape (windows, od pairs, categories)."""
        return self.profile[:, None, None] * self.base_rates[None] * self.day_factors[day]


@dataclass
class GroundTruth:
    """Per-trip route choice and exact link event times (minutes after the day's midnight)."""

    start_date: date
    width: float
    stations: list[str]
    edges: list[str]
    od_pairs: list[tuple[str, str]]
    categories: list[str]
    # per trip
    day: np.ndarray
    od: np.ndarray
    category: np.ndarray
    route: np.ndarray  # index within the OD's route choice set
    t_in: np.ndarray
    t_out: np.ndarray
    t_out_logged: np.ndarray  # tap-out as written to the log (floored to the second)
    # per travel-link traversal
    ev_trip: np.ndarray
    ev_edge: np.ndarray
    ev_dir: np.ndarray  # +1 when running from edge.a to edge.b
    ev_enter: np.ndarray
    ev_exit: np.ndarray
    # per station-link stay (entry / transfer / exit)
    st_trip: np.ndarray
    st_station: np.ndarray
    st_kind: np.ndarray  # 0 entry, 1 transfer, 2 exit
    st_start: np.ndarray
    st_end: np.ndarray

    @property
    def n_trips(self) -> int:
        return len(self.t_in)

    def alighting_counts(self, day: int, n_windows: int | None = None) -> np.ndarray:
        """Tap-outs per (window, station) as seen in the log."""
        n_windows = n_windows or int(round(1440 / self.width))
        out = np.zeros((n_windows, len(self.stations)), dtype=np.int64)
        sel = self.day == day
        t = self.t_out_logged[sel]
        dest = np.array([self.stations.index(self.od_pairs[p][1]) for p in range(len(self.od_pairs))])[self.od[sel]]
        w = np.floor(t / self.width).astype(np.int64)
        ok = w < n_windows
        np.add.at(out, (w[ok], dest[ok]), 1)
        return out


def count_occupancy(gt: GroundTruth, day: int, instants, directional: bool = False) -> np.ndarray:
    """Exact number of passengers with edge entry <= t < edge exit.

    Returns shape (instants, edges), or (instants, edges, 2) with the second
    axis ordered (a->b, b->a) when ``directional``.
    """
    instants = np.atleast_1d(np.asarray(instants, dtype=float))
    trip_day = gt.day[gt.ev_trip]
    sel = trip_day == day
    edge, d = gt.ev_edge[sel], gt.ev_dir[sel]
    enter, leave = gt.ev_enter[sel], gt.ev_exit[sel]
    n_e = len(gt.edges)
    out = np.zeros((len(instants), n_e, 2), dtype=np.int64)
    for e in range(n_e):
        for k, sign in enumerate((1, -1)):
            m = (edge == e) & (d == sign)
            if not m.any():
                continue
            ent, ext = np.sort(enter[m]), np.sort(leave[m])
            out[:, e, k] = np.searchsorted(ent, instants, side="right") - np.searchsorted(ext, instants, side="right")
    return out if directional else out.sum(axis=2)


def count_in_stations(gt: GroundTruth, day: int, instants) -> np.ndarray:
    """Passengers inside station links (entry, transfer, exit) per station, shape (instants, stations)."""
    instants = np.atleast_1d(np.asarray(instants, dtype=float))
    sel = gt.day[gt.st_trip] == day
    out = np.zeros((len(instants), len(gt.stations)), dtype=np.int64)
    st = gt.st_station[sel]
    s0, s1 = gt.st_start[sel], gt.st_end[sel]
    for s in range(len(gt.stations)):
        m = st == s
        if m.any():
            out[:, s] = (np.searchsorted(np.sort(s0[m]), instants, side="right")
                         - np.searchsorted(np.sort(s1[m]), instants, side="right"))
    return out


def count_in_system(gt: GroundTruth, day: int, instants) -> np.ndarray:
    instants = np.atleast_1d(np.asarray(instants, dtype=float))
    sel = gt.day == day
    t0, t1 = np.sort(gt.t_in[sel]), np.sort(gt.t_out[sel])
    return np.searchsorted(t0, instants, side="right") - np.searchsorted(t1, instants, side="right")


def generate(config: ScenarioConfig) -> tuple[list[TripRecord], GroundTruth]:
    """Draw all days of the scenario. Each day has its own seed derived from the scenario seed."""
    net = config.network
    stations = net.station_ids
    edges = sorted(net.edges)
    e_idx = {e: k for k, e in enumerate(edges)}
    s_idx = {s: k for k, s in enumerate(stations)}
    ods = config.od_pairs
    cats = config.categories
    route_sets = config.route_sets()
    n_w = len(config.profile)
    if abs(n_w * config.width - 1440) > 1e-9:
        raise ScenarioError("profile length times window width must cover 24 h")
    if np.any(config.base_rates < 0) or np.any(config.profile < 0) or np.any(config.day_factors < 0):
        raise ScenarioError("demand rates must be non-negative")

    # flat route table
    routes, route_first = [], {}
    for p, od in enumerate(ods):
        route_first[od] = len(routes)
        routes.extend(route_sets[od].routes)
    for r in routes:
        for l in r.links:
            if l not in config.planted:
                raise ScenarioError(f"planted parameters missing for link {l}")
    pi = np.zeros((len(ods), len(cats), max(len(route_sets[od]) for od in ods)))
    for p, od in enumerate(ods):
        w = config.weights.table.get(od)
        m = len(route_sets[od])
        pi[p, :, :m] = w if w is not None else 1.0 / m
    cum_pi = np.cumsum(pi, axis=2)

    cols = {k: [] for k in ("day", "od", "cat", "route", "t_in", "t_out", "t_out_log", "cards")}
    ev = {k: [] for k in ("trip", "edge", "dir", "enter", "exit")}
    st = {k: [] for k in ("trip", "station", "kind", "start", "end")}
    records: list[TripRecord] = []
    n_before = 0
    for k in range(config.days):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, k]))
        counts = rng.poisson(config.rates(k))
        w_i, p_i, c_i = np.nonzero(counts)
        reps = counts[w_i, p_i, c_i]
        w_t, p_t, c_t = np.repeat(w_i, reps), np.repeat(p_i, reps), np.repeat(c_i, reps)
        n = len(w_t)
        t_in = (w_t + rng.random(n)) * config.width
        u = rng.random(n)
        m_t = (u[:, None] >= cum_pi[p_t, c_t]).sum(axis=1)
        nroutes = np.array([len(route_sets[od]) for od in ods])
        m_t = np.minimum(m_t, nroutes[p_t] - 1)
        g_t = np.array([route_first[ods[p]] for p in range(len(ods))])[p_t] + m_t
        t_out = np.empty(n)
        for g in np.unique(g_t):
            idx = np.nonzero(g_t == g)[0]
            route = routes[g]
            par = [config.planted[l] for l in route.links]
            U = rng.random((len(idx), len(par)))
            dur = tn.ppf_arr(U, np.array([q.mu for q in par]), np.array([q.sigma for q in par]),
                             np.array([q.a for q in par]), np.array([q.b for q in par]))
            ends = t_in[idx, None] + np.cumsum(dur, axis=1)
            starts = ends - dur
            t_out[idx] = ends[:, -1]
            cur = route.origin
            for j, link in enumerate(route.links):
                tid = idx + n_before
                if link.kind is LinkKind.TRAVEL:
                    e = net.edges[link.anchor]
                    ev["trip"].append(tid)
                    ev["edge"].append(np.full(len(idx), e_idx[e.id]))
                    ev["dir"].append(np.full(len(idx), 1 if cur == e.a else -1))
                    ev["enter"].append(starts[:, j])
                    ev["exit"].append(ends[:, j])
                    cur = e.other(cur)
                else:
                    kind = {LinkKind.ENTRY: 0, LinkKind.TRANSFER: 1, LinkKind.EXIT: 2}[link.kind]
                    st["trip"].append(tid)
                    st["station"].append(np.full(len(idx), s_idx[link.anchor]))
                    st["kind"].append(np.full(len(idx), kind))
                    st["start"].append(starts[:, j])
                    st["end"].append(ends[:, j])
        # the log has whole seconds
        in_sec = np.floor(t_in * 60).astype(np.int64)
        out_sec = np.floor(t_out * 60).astype(np.int64)
        day0 = datetime.combine(config.start_date + timedelta(days=k), datetime.min.time())
        order = np.lexsort((g_t, in_sec))
        for rank, i in enumerate(order):
            o, d = ods[p_t[i]]
            records.append(TripRecord(f"SYN{k:03d}{rank:07d}", cats[c_t[i]], o, d,
                                      day0 + timedelta(seconds=int(in_sec[i])),
                                      day0 + timedelta(seconds=int(out_sec[i]))))
        cols["day"].append(np.full(n, k))
        cols["od"].append(p_t)
        cols["cat"].append(c_t)
        cols["route"].append(m_t)
        cols["t_in"].append(t_in)
        cols["t_out"].append(t_out)
        cols["t_out_log"].append(out_sec / 60.0)
        n_before += n

    cat = lambda xs, dt=float: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    gt = GroundTruth(
        config.start_date, config.width, stations, edges, ods, cats,
        cat(cols["day"], np.int64), cat(cols["od"], np.int64), cat(cols["cat"], np.int64),
        cat(cols["route"], np.int64), cat(cols["t_in"]), cat(cols["t_out"]), cat(cols["t_out_log"]),
        cat(ev["trip"], np.int64), cat(ev["edge"], np.int64), cat(ev["dir"], np.int64),
        cat(ev["enter"]), cat(ev["exit"]),
        cat(st["trip"], np.int64), cat(st["station"], np.int64), cat(st["kind"], np.int64),
        cat(st["start"]), cat(st["end"]),
    )
    return records, gt


# ---------------------------------------------------------------------------
# scenario files


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc, base_dir=path.parent)


def scenario_from_dict(doc: dict, base_dir: str | Path = ".", network: MetroNetwork | None = None) -> ScenarioConfig:
    try:
        net_ref = doc["network"]
        if network is None:
            network = load_network(Path(base_dir) / net_ref)
        cats = list(doc["categories"])
        width = float(doc.get("window_min", 20.0))
        n_w = int(round(1440 / width))
        planted = LinkParamSet.from_params({
            TransitLink(LinkKind(r["kind"]), str(r["anchor"])): tn.TruncNormParams(r["mu"], r["sigma"], r["a"], r["b"])
            for r in doc["links"]})
        beta = float(doc.get("route_choice", {}).get("beta", 2.0))
        sig = int(doc.get("route_choice", {}).get("sigma", 2))
        route_sets = network.all_route_sets(beta, sig)
        weights = RouteWeights(cats, {})
        for r in doc.get("route_weights", []):
            od = (r["origin"], r["dest"])
            if od not in route_sets:
                raise ScenarioError(f"route weights for unknown OD pair {od}")
            w = np.asarray(r["weights"], float)
            if len(w) != len(route_sets[od]) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise ScenarioError(f"route weights for {od} must be a distribution over {len(route_sets[od])} routes")
            tab = weights.table.setdefault(od, np.full((len(cats), len(w)), 1.0 / len(w)))
            tab[cats.index(r["category"])] = w
        demand = doc["demand"]
        profile = np.asarray(demand["profile"], float)
        if len(profile) != n_w:
            raise ScenarioError(f"demand profile needs {n_w} windows, got {len(profile)}")
        ods = network.od_pairs()
        od_idx = {od: k for k, od in enumerate(ods)}
        base = np.full((len(ods), len(cats)), float(demand.get("default_rate", 0.0)))
        for r in demand.get("od_rates", []):
            base[od_idx[(r["origin"], r["dest"])], cats.index(r["category"])] = float(r["rate"])
        factors = np.asarray(demand.get("day_factors", [1.0] * int(doc.get("days", 1))), float)
        return ScenarioConfig(network, planted, weights, base, profile, factors,
                              seed=int(doc.get("seed", 7)),
                              start_date=date.fromisoformat(doc.get("start_date", "2016-01-25")),
                              width=width, beta=beta, sigma=sig, network_path=str(net_ref))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario: {exc!r}") from exc


def write_ground_truth(gt: GroundTruth, directory: str | Path) -> None:
    """Trip-level and event-level CSV logs plus a JSON summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "gt_trips.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trip", "day", "origin", "dest", "category", "route_index", "t_in_min", "t_out_min"])
        for i in range(gt.n_trips):
            o, d = gt.od_pairs[gt.od[i]]
            w.writerow([i, int(gt.day[i]), o, d, gt.categories[gt.category[i]], int(gt.route[i]),
                        repr(float(gt.t_in[i])), repr(float(gt.t_out[i]))])
    with open(directory / "gt_edge_events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trip", "edge_id", "direction", "enter_min", "exit_min"])
        for i in range(len(gt.ev_trip)):
            w.writerow([int(gt.ev_trip[i]), gt.edges[gt.ev_edge[i]], int(gt.ev_dir[i]),
                        repr(float(gt.ev_enter[i])), repr(float(gt.ev_exit[i]))])
    summary = {
        "start_date": gt.start_date.isoformat(), "window_min": gt.width, "trips": int(gt.n_trips),
        "categories": list(gt.categories),
        "days": int(gt.day.max() + 1) if gt.n_trips else 0,
        "trips_per_day": np.bincount(gt.day).tolist() if gt.n_trips else [],
    }
    (directory / "gt_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_scenario_outputs(trips: list[TripRecord], gt: GroundTruth, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_trips(trips, directory / "trips.csv")
    write_ground_truth(gt, directory)


def read_ground_truth(directory: str | Path, net: MetroNetwork) -> GroundTruth:
    """Rebuild trips and edge events from ``write_ground_truth`` files (station stays are not stored)."""
    directory = Path(directory)
    summary = json.loads((directory / "gt_summary.json").read_text())
    ods = net.od_pairs()
    od_idx = {od: k for k, od in enumerate(ods)}
    edges = sorted(net.edges)
    e_idx = {e: k for k, e in enumerate(edges)}
    cats: list[str] = list(summary.get("categories", []))
    cols: dict[str, list] = {k: [] for k in ("day", "od", "category", "route", "t_in", "t_out")}
    with open(directory / "gt_trips.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["category"] not in cats:
                cats.append(row["category"])
            cols["day"].append(int(row["day"]))
            cols["od"].append(od_idx[(row["origin"], row["dest"])])
            cols["category"].append(cats.index(row["category"]))
            cols["route"].append(int(row["route_index"]))
            cols["t_in"].append(float(row["t_in_min"]))
            cols["t_out"].append(float(row["t_out_min"]))
    ev: dict[str, list] = {k: [] for k in ("trip", "edge", "dir", "enter", "exit")}
    with open(directory / "gt_edge_events.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            ev["trip"].append(int(row["trip"]))
            ev["edge"].append(e_idx[row["edge_id"]])
            ev["dir"].append(int(row["direction"]))
            ev["enter"].append(float(row["enter_min"]))
            ev["exit"].append(float(row["exit_min"]))
    t_in = np.array(cols["t_in"], float)
    t_out = np.array(cols["t_out"], float)
    logged = np.floor(t_out * 60).astype(np.int64) / 60.0  # same rounding as generate()
    ints = lambda v: np.array(v, dtype=np.int64)  # noqa: E731
    empty_f, empty_i = np.zeros(0), np.zeros(0, dtype=np.int64)
    return GroundTruth(date.fromisoformat(summary["start_date"]), float(summary["window_min"]), net.station_ids,
                       edges, ods, cats, ints(cols["day"]), ints(cols["od"]), ints(cols["category"]),
                       ints(cols["route"]), t_in, t_out, logged, ints(ev["trip"]), ints(ev["edge"]),
                       ints(ev["dir"]), np.array(ev["enter"]), np.array(ev["exit"]),
                       empty_i, empty_i, empty_i, empty_f, empty_f)
