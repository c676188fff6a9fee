"""Link travel-time model: truncation points, EM fit of link parameters and route weights.

Every trip is an observation of a route-level truncated normal whose
location, variance and bounds are sums over the transit links of the route.
Trips of OD pairs with several candidate routes are mixtures over routes with
category-specific weights. The fit alternates responsibilities (E-step),
Fisher-scaled stochastic gradient ascent on the link parameters, and the
closed-form route weight update.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from . import truncnorm as tn
from .afc import TripRecord
from .network import LinkKind, MetroNetwork, Route, RouteChoiceSet, TransitLink

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
VAR_FLOOR = 1e-4
DEFAULT_W0 = 2.0


class FitError(RuntimeError):
    pass


class TruncationError(FitError):
    pass


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class LinkParamSet:
    links: list[TransitLink]
    mu: np.ndarray
    var: np.ndarray
    a: np.ndarray
    b: np.ndarray
    index: dict[TransitLink, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.index = {l: k for k, l in enumerate(self.links)}

    def __contains__(self, link: TransitLink) -> bool:
        return link in self.index

    def __getitem__(self, link: TransitLink) -> tn.TruncNormParams:
        k = self.index[link]
        return tn.TruncNormParams(float(self.mu[k]), math.sqrt(self.var[k]), float(self.a[k]), float(self.b[k]))

    def copy(self) -> "LinkParamSet":
        return LinkParamSet(list(self.links), self.mu.copy(), self.var.copy(), self.a.copy(), self.b.copy())

    @classmethod
    def from_params(cls, table: Mapping[TransitLink, tn.TruncNormParams]) -> "LinkParamSet":
        links = sorted(table)
        return cls(links,
                   np.array([table[l].mu for l in links], float),
                   np.array([table[l].sigma ** 2 for l in links], float),
                   np.array([table[l].a for l in links], float),
                   np.array([table[l].b for l in links], float))


@dataclass
class RouteWeights:
    """Route probabilities per OD pair, an array of shape (categories, routes)."""

    categories: list[str]
    table: dict[tuple[str, str], np.ndarray]

    def get(self, od: tuple[str, str], category: str) -> np.ndarray:
        return self.matrix(od)[self.categories.index(category)]

    def matrix(self, od: tuple[str, str], n_routes: int = 1) -> np.ndarray:
        """Weights for an OD pair; pairs without an entry get uniform weights over ``n_routes``."""
        w = self.table.get(od)
        return np.full((len(self.categories), n_routes), 1.0 / n_routes) if w is None else w

    def copy(self) -> "RouteWeights":
        return RouteWeights(list(self.categories), {k: v.copy() for k, v in self.table.items()})


@dataclass
class FitReport:
    iterations: int
    ll_trace: list[float]
    converged: bool
    zero_support: int
    n_trips: int
    seed: int
    link_table: list[dict] = field(default_factory=list)
    route_weights: list[dict] = field(default_factory=list)

    def summary(self) -> str:
        first = self.ll_trace[0] if self.ll_trace else float("nan")
        last = self.ll_trace[-1] if self.ll_trace else float("nan")
        return (f"EM iterations={self.iterations} converged={self.converged} trips={self.n_trips} "
                f"zero_support={self.zero_support} loglik {first:.3f} -> {last:.3f}")


@dataclass
class SGDConfig:
    step: float = 0.1
    epochs: int = 3
    batch_size: int = 1024
    decay: bool = True


@dataclass
class FitOptions:
    max_iter: int = 200
    tol: float = 1e-4  # per trip
    sgd: SGDConfig = field(default_factory=SGDConfig)
    seed: int = 0
    var_floor: float = VAR_FLOOR


# ---------------------------------------------------------------------------
# truncation points and initial values


def estimate_truncation(net: MetroNetwork, trips: Sequence[TripRecord], w0: float = DEFAULT_W0,
                        fallback: bool = False) -> dict[TransitLink, tuple[float, float]]:
    """Truncation points of every link.

    For each edge the trips between its two stations (either direction) give
    the travel upper bound (shortest such trip) and widen the entry and exit
    upper bounds of both stations to the spread of those trips. Travel lower
    bounds come from the line's top speed; entry and exit lower bounds stay 0.
    Transfers get [0, 2 (w0 + headway)].
    """
    by_pair: dict[frozenset, list[float]] = {}
    for t in trips:
        by_pair.setdefault(frozenset((t.origin, t.dest)), []).append(t.travel_time)
    entry_b = {s: 0.0 for s in net.station_ids}
    exit_b = {s: 0.0 for s in net.station_ids}
    out: dict[TransitLink, tuple[float, float]] = {}
    empty = []
    for eid in sorted(net.edges):
        e = net.edges[eid]
        line = net.lines[e.line]
        ys = by_pair.get(frozenset((e.a, e.b)))
        lo = e.length / line.max_speed
        if not ys:
            if not fallback:
                empty.append(eid)
                continue
            out[TransitLink(LinkKind.TRAVEL, eid)] = (lo, e.length / line.min_speed)
            continue
        t_min, t_max = min(ys), max(ys)
        out[TransitLink(LinkKind.TRAVEL, eid)] = (lo, t_min)
        for s in (e.a, e.b):
            entry_b[s] = max(entry_b[s], t_max - t_min)
            exit_b[s] = max(exit_b[s], t_max - t_min)
    if empty:
        raise TruncationError(f"no trips between the endpoints of edges {empty}; enable the fallback")
    for s in net.station_ids:
        headway = max(net.lines[l].headway for l in net.stations[s].lines)
        default = 2.0 * (w0 + headway)
        if fallback:
            entry_b[s] = entry_b[s] or default
            exit_b[s] = exit_b[s] or default
        out[TransitLink(LinkKind.ENTRY, s)] = (0.0, entry_b[s])
        out[TransitLink(LinkKind.EXIT, s)] = (0.0, exit_b[s])
        if net.stations[s].is_interchange:
            out[TransitLink(LinkKind.TRANSFER, s)] = (0.0, default)
    return out


def init_params(net: MetroNetwork, truncation: Mapping[TransitLink, tuple[float, float]],
                route_sets: Mapping[tuple[str, str], RouteChoiceSet] | None = None,
                categories: Sequence[str] = ("adult", "child", "senior", "student"),
                var_floor: float = VAR_FLOOR) -> tuple[LinkParamSet, RouteWeights]:
    bad = [str(l) for l, (a, b) in truncation.items() if not a < b]
    if bad:
        raise TruncationError(f"degenerate truncation interval (a >= b) for links {sorted(bad)}")
    links = sorted(truncation)
    a = np.array([truncation[l][0] for l in links], float)
    b = np.array([truncation[l][1] for l in links], float)
    mu = (a + b) / 2
    sd = np.maximum((b - a) / 4, math.sqrt(var_floor))
    params = LinkParamSet(links, mu, sd ** 2, a, b)
    weights = RouteWeights(list(categories), {})
    for od, rs in (route_sets or {}).items():
        m = len(rs.routes)
        weights.table[od] = np.full((len(categories), m), 1.0 / m)
    return params, weights


def route_time_params(route: Route, params: LinkParamSet) -> tn.TruncNormParams:
    missing = [str(l) for l in route.links if l not in params]
    if missing:
        raise KeyError(f"route {route.od} uses links without parameters: {missing}")
    return tn.sum_approx(params[l] for l in route.links)


# ---------------------------------------------------------------------------
# compiled problem


class Problem:
    """Trips expanded to one row per (trip, candidate route), plus a route-link incidence matrix."""

    def __init__(self, trips: Sequence[TripRecord], route_sets: Mapping[tuple[str, str], RouteChoiceSet],
                 params: LinkParamSet, categories: Sequence[str]):
        self.categories = list(categories)
        cat_idx = {c: k for k, c in enumerate(self.categories)}
        ods = sorted({(t.origin, t.dest) for t in trips})
        self.ods = ods
        self.routes: list[Route] = []
        self.route_od: list[int] = []
        self.route_m: list[int] = []
        od_first: dict[tuple[str, str], int] = {}
        self.od_nroutes: list[int] = []
        for k, od in enumerate(ods):
            if od not in route_sets:
                raise FitError(f"no route choice set for OD pair {od}")
            od_first[od] = len(self.routes)
            rs = route_sets[od].routes
            self.od_nroutes.append(len(rs))
            for m, r in enumerate(rs):
                self.routes.append(r)
                self.route_od.append(k)
                self.route_m.append(m)
        self.route_od = np.array(self.route_od, dtype=np.int64)
        self.route_m = np.array(self.route_m, dtype=np.int64)
        self.od_first = np.array([od_first[od] for od in ods], dtype=np.int64)
        self.od_nroutes = np.array(self.od_nroutes, dtype=np.int64)

        rows, cols = [], []
        for r, route in enumerate(self.routes):
            for link in route.links:
                if link not in params:
                    raise FitError(f"link {link} of route {route.od} has no parameters")
                rows.append(r)
                cols.append(params.index[link])
        self.n_links = len(params.links)
        self.R = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(self.routes), self.n_links))
        self.RT = self.R.T.tocsr()

        od_of = {od: k for k, od in enumerate(ods)}
        self.trip_od = np.array([od_of[(t.origin, t.dest)] for t in trips], dtype=np.int64)
        self.trip_cat = np.array([cat_idx[t.category] for t in trips], dtype=np.int64)
        self.t = np.array([t.travel_time for t in trips], dtype=float)
        self.n_trips = len(trips)
        nr = self.od_nroutes[self.trip_od]
        self.trip_nroutes = nr
        self.row_start = np.concatenate([[0], np.cumsum(nr)[:-1]]).astype(np.int64)
        self.row_trip = np.repeat(np.arange(self.n_trips), nr)
        offs = np.arange(len(self.row_trip)) - self.row_start[self.row_trip]
        self.row_route = self.od_first[self.trip_od][self.row_trip] + offs
        self.row_cat = self.trip_cat[self.row_trip]
        self.multi = nr > 1

    # route-level parameters
    def route_arrays(self, params: LinkParamSet):
        R = self.R
        return R @ params.mu, R @ params.var, R @ params.a, R @ params.b

    def pi_rows(self, weights: RouteWeights) -> np.ndarray:
        """pi[route, category] aligned with ``self.routes``."""
        out = np.empty((len(self.routes), len(self.categories)))
        for k, od in enumerate(self.ods):
            w = weights.table.get(od)
            n = self.od_nroutes[k]
            if w is None:
                w = np.full((len(self.categories), n), 1.0 / n)
            out[self.od_first[k]:self.od_first[k] + n] = w.T
        return out

    def weights_from_pi(self, pi: np.ndarray, base: RouteWeights) -> RouteWeights:
        out = base.copy()
        for k, od in enumerate(self.ods):
            n = self.od_nroutes[k]
            out.table[od] = pi[self.od_first[k]:self.od_first[k] + n].T.copy()
        return out


@dataclass
class Responsibilities:
    """Posterior route probabilities, one entry per (trip, candidate route) row."""

    rows: np.ndarray
    row_start: np.ndarray
    nroutes: np.ndarray
    zero_support: np.ndarray  # per trip, bool

    def for_trip(self, n: int) -> np.ndarray:
        s = self.row_start[n]
        return self.rows[s:s + self.nroutes[n]]


def _row_loglik(prob: Problem, params: LinkParamSet):
    mu_r, var_r, a_r, b_r = prob.route_arrays(params)
    rr = prob.row_route
    return tn.loglik_grads_arr(prob.t[prob.row_trip], mu_r[rr], var_r[rr], a_r[rr], b_r[rr])


def _estep_arrays(prob: Problem, params: LinkParamSet, pi: np.ndarray):
    ll, _, _ = _row_loglik(prob, params)
    with np.errstate(divide="ignore"):
        logp = np.log(pi[prob.row_route, prob.row_cat]) + ll
    starts = prob.row_start
    mx = np.maximum.reduceat(logp, starts)
    zero = ~np.isfinite(mx)
    mx_rows = np.where(zero, 0.0, mx)[prob.row_trip]
    ex = np.exp(logp - mx_rows)
    tot = np.add.reduceat(ex, starts)
    resp = ex / np.where(zero, 1.0, tot)[prob.row_trip]
    resp = np.where(zero[prob.row_trip], 1.0 / prob.trip_nroutes[prob.row_trip], resp)
    trip_ll = np.where(zero, 0.0, mx + np.log(np.where(zero, 1.0, tot)))
    return resp, zero, float(np.sum(trip_ll)), ll


def e_step(prob: Problem, params: LinkParamSet, weights: RouteWeights) -> tuple[Responsibilities, float]:
    """Route responsibilities and the observed-data log-likelihood.

    Trips with zero density under every candidate route receive uniform
    responsibilities and are left out of the likelihood (see ``zero_support``).
    """
    resp, zero, ll, _ = _estep_arrays(prob, params, prob.pi_rows(weights))
    return Responsibilities(resp, prob.row_start, prob.trip_nroutes, zero), ll


def expected_loglik(prob: Problem, params: LinkParamSet, weights: RouteWeights, resp: Responsibilities) -> float:
    """Expected complete-data log-likelihood for fixed responsibilities."""
    ll, _, _ = _row_loglik(prob, params)
    pi = prob.pi_rows(weights)
    keep = ~resp.zero_support[prob.row_trip] & (resp.rows > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = resp.rows * (np.log(pi[prob.row_route, prob.row_cat]) + ll)
    return float(np.sum(terms[keep]))


def link_gradients(prob: Problem, params: LinkParamSet, resp: Responsibilities,
                   rows: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact partials of :func:`expected_loglik` w.r.t. every link's mu and variance."""
    g_mu_row, g_var_row, _, w, rr = _row_terms(prob, params, resp, rows)
    n_r = len(prob.routes)
    g_mu = prob.RT @ np.bincount(rr, w * g_mu_row, minlength=n_r)
    g_var = prob.RT @ np.bincount(rr, w * g_var_row, minlength=n_r)
    return g_mu, g_var


def _row_terms(prob: Problem, params: LinkParamSet, resp: Responsibilities, rows: np.ndarray | None):
    if rows is None:
        rows = np.arange(len(prob.row_trip))
    mu_r, var_r, a_r, b_r = prob.route_arrays(params)
    rr = prob.row_route[rows]
    ll, g_mu, g_var = tn.loglik_grads_arr(prob.t[prob.row_trip[rows]], mu_r[rr], var_r[rr], a_r[rr], b_r[rr])
    w = resp.rows[rows] * ~resp.zero_support[prob.row_trip[rows]]
    w = np.where(np.isfinite(ll), w, 0.0)
    return g_mu, g_var, var_r[rr], w, rr


# ---------------------------------------------------------------------------
# M-step


def m_step_sgd(prob: Problem, params: LinkParamSet, resp: Responsibilities, sgd: SGDConfig,
               rng: np.random.Generator, epoch_offset: int = 0, var_floor: float = VAR_FLOOR) -> LinkParamSet:
    """Stochastic gradient ascent on link locations and variances.

    The batch gradient of each link is averaged over the rows that use it and
    scaled by the inverse Fisher information of the link's own normal (var for
    the location, 2 var^2 for the variance). A route's correction is thereby
    shared among its links in proportion to their variances and ``sgd.step``
    is dimensionless; 1 is a full step. Truncation points stay fixed. Proposals that leave a
    degenerate normalizer are retried with half the step.
    """
    out = params.copy()
    if sgd.step == 0 or sgd.epochs == 0 or prob.n_trips == 0:
        return out
    n_r = len(prob.routes)
    bs = max(1, int(sgd.batch_size))
    for ep in range(sgd.epochs):
        step = sgd.step / math.sqrt(epoch_offset + ep + 1) if sgd.decay else sgd.step
        order = rng.permutation(prob.n_trips)
        batch_of_trip = np.empty(prob.n_trips, dtype=np.int64)
        batch_of_trip[order] = np.arange(prob.n_trips) // bs
        row_batch = batch_of_trip[prob.row_trip]
        row_order = np.argsort(row_batch, kind="stable")
        bounds = np.searchsorted(row_batch[row_order], np.arange(batch_of_trip.max() + 2))
        for k in range(len(bounds) - 1):
            rows = row_order[bounds[k]:bounds[k + 1]]
            if rows.size == 0:
                continue
            g_mu, g_var, _, w, rr = _row_terms(prob, out, resp, rows)
            if not (np.all(np.isfinite(g_mu)) and np.all(np.isfinite(g_var))):
                bad = np.unique(prob.R[rr[~(np.isfinite(g_mu) & np.isfinite(g_var))]].indices)
                raise FitError(f"non-finite gradient for links {[str(out.links[i]) for i in bad]}")
            wsum = prob.RT @ np.bincount(rr, w, minlength=n_r)
            used = wsum > 0
            if not used.any():
                continue
            d_mu = prob.RT @ np.bincount(rr, w * g_mu, minlength=n_r)
            d_var = prob.RT @ np.bincount(rr, w * g_var, minlength=n_r)
            denom = np.where(used, wsum, 1.0)
            d_mu = np.where(used, out.var * d_mu / denom, 0.0)
            d_var = np.where(used, 2 * out.var ** 2 * d_var / denom, 0.0)
            _apply_step(prob, out, d_mu, d_var, step, var_floor, np.unique(rr))
    return out


def _apply_step(prob: Problem, p: LinkParamSet, d_mu, d_var, step: float, var_floor: float,
                routes: np.ndarray) -> None:
    sub = prob.R[routes]
    a_r, b_r = sub @ p.a, sub @ p.b
    s = step
    for _ in range(40):
        mu_new = p.mu + s * d_mu
        var_new = np.maximum(p.var + s * d_var, var_floor)
        lm = tn.log_mass_arr(sub @ mu_new, np.sqrt(sub @ var_new), a_r, b_r)
        if np.all(lm > math.log(tn.DEGENERATE_NORMALIZER)):
            p.mu, p.var = mu_new, var_new
            return
        s /= 2
    log.debug("step rejected after 40 halvings")


def update_weights(prob: Problem, resp: Responsibilities, previous: RouteWeights) -> RouteWeights:
    """Route weight per (OD, category): share of responsibility mass on each route.

    Cells without trips keep their previous weights.
    """
    n_cat = len(prob.categories)
    n_r = len(prob.routes)
    mass = np.zeros((n_r, n_cat))
    np.add.at(mass, (prob.row_route, prob.row_cat), resp.rows)
    pi = prob.pi_rows(previous)
    od_tot = np.zeros((len(prob.ods), n_cat))
    np.add.at(od_tot, prob.route_od, mass)
    tot_r = od_tot[prob.route_od]
    pi = np.where(tot_r > 0, mass / np.where(tot_r > 0, tot_r, 1.0), pi)
    return prob.weights_from_pi(pi, previous)


# ---------------------------------------------------------------------------
# driver


def fit(trips: Sequence[TripRecord], route_sets: Mapping[tuple[str, str], RouteChoiceSet],
        truncation: Mapping[TransitLink, tuple[float, float]] | None = None,
        opt: FitOptions | None = None, net: MetroNetwork | None = None,
        categories: Sequence[str] = ("adult", "child", "senior", "student"),
        init: tuple[LinkParamSet, RouteWeights] | None = None,
        ) -> tuple[LinkParamSet, RouteWeights, FitReport]:
    """EM over route choices with SGD M-steps until the log-likelihood settles."""
    opt = opt or FitOptions()
    if init is None:
        if truncation is None:
            if net is None:
                raise FitError("need truncation points or a network to estimate them")
            truncation = estimate_truncation(net, trips)
        params, weights = init_params(net, truncation, route_sets, categories, opt.var_floor)
    else:
        params, weights = init[0].copy(), init[1].copy()
    for od, rs in route_sets.items():
        weights.table.setdefault(od, np.full((len(categories), len(rs.routes)), 1.0 / len(rs.routes)))
    prob = Problem(trips, route_sets, params, categories)
    rng = np.random.default_rng(opt.seed)
    trace: list[float] = []
    converged = False
    resp, ll = e_step(prob, params, weights)
    trace.append(ll)
    it = 0
    for it in range(1, opt.max_iter + 1):
        params = m_step_sgd(prob, params, resp, opt.sgd, rng, epoch_offset=(it - 1) * opt.sgd.epochs,
                            var_floor=opt.var_floor)
        weights = update_weights(prob, resp, weights)
        resp, ll = e_step(prob, params, weights)
        trace.append(ll)
        log.info("EM iteration %d loglik %.4f", it, ll)
        if abs(trace[-1] - trace[-2]) < opt.tol * max(prob.n_trips, 1):
            converged = True
            break
    report = FitReport(it, trace, converged, int(resp.zero_support.sum()), prob.n_trips, opt.seed,
                       link_table(params), weight_table(weights, route_sets))
    return params, weights, report


# ---------------------------------------------------------------------------
# serialization


def link_table(params: LinkParamSet) -> list[dict]:
    return [{"kind": l.kind.value, "anchor": l.anchor, "mu": float(params.mu[k]),
             "sigma": math.sqrt(float(params.var[k])), "a": float(params.a[k]), "b": float(params.b[k])}
            for k, l in enumerate(params.links)]


def weight_table(weights: RouteWeights, route_sets: Mapping[tuple[str, str], RouteChoiceSet]) -> list[dict]:
    rows = []
    for od in sorted(weights.table):
        w = weights.table[od]
        routes = route_sets[od].routes if od in route_sets else None
        for c, cat in enumerate(weights.categories):
            for m in range(w.shape[1]):
                row = {"origin": od[0], "dest": od[1], "category": cat, "route_index": m, "weight": float(w[c, m])}
                if routes is not None:
                    row["edges"] = list(routes[m].edges)
                rows.append(row)
    return rows


@dataclass
class FittedModel:
    params: LinkParamSet
    weights: RouteWeights
    route_sets: dict[tuple[str, str], RouteChoiceSet]
    meta: dict

    def route_params(self, route: Route) -> tn.TruncNormParams:
        return route_time_params(route, self.params)


def model_to_dict(params: LinkParamSet, weights: RouteWeights,
                  route_sets: Mapping[tuple[str, str], RouteChoiceSet], meta: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "links": link_table(params),
            "route_weights": weight_table(weights, route_sets), "categories": list(weights.categories),
            "meta": meta}


def model_from_dict(doc: dict, net: MetroNetwork) -> FittedModel:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise FitError(f"unsupported model schema version {doc.get('schema_version')!r}")
    table = {TransitLink(LinkKind(r["kind"]), r["anchor"]): tn.TruncNormParams(r["mu"], r["sigma"], r["a"], r["b"])
             for r in doc["links"]}
    params = LinkParamSet.from_params(table)
    meta = doc.get("meta", {})
    beta, sig = meta.get("beta", 2.0), meta.get("sigma", 2)
    travel_only = meta.get("travel_links_only", False)
    cats = list(doc["categories"])
    route_sets = net.all_route_sets(beta, sig, travel_only)
    weights = RouteWeights(cats, {})
    for od, rs in route_sets.items():
        weights.table[od] = np.full((len(cats), len(rs.routes)), 1.0 / len(rs.routes))
    for r in doc["route_weights"]:
        od = (r["origin"], r["dest"])
        if od not in route_sets:
            raise FitError(f"model references unknown OD pair {od}")
        m = r["route_index"]
        if "edges" in r and tuple(r["edges"]) != route_sets[od].routes[m].edges:
            raise FitError(f"route {m} of {od} does not match the network's route enumeration")
        weights.table[od][cats.index(r["category"]), m] = r["weight"]
    return FittedModel(params, weights, route_sets, meta)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(path: str | Path, params: LinkParamSet, weights: RouteWeights,
               route_sets: Mapping[tuple[str, str], RouteChoiceSet], meta: dict) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(params, weights, route_sets, meta), indent=1, sort_keys=True) + "\n")


def load_model(path: str | Path, net: MetroNetwork) -> FittedModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh), net)
