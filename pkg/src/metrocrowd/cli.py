"""Batch command line: ingest, routes, fit, forecast, predict, eval, simulate.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are
option names (dashes or underscores), either at top level or inside a
section named after the subcommand. Flags given on the command line win.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from datetime import date
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .afc import (DEFAULT_CATEGORIES, FlowSeries, IngestError, aggregate_flows, parse_trips, remove_outliers,
                  trips_to_csv)
from .density import (DensityEngine, ForecastGapError, alighting_csv, alighting_walk_forward)
from .network import MetroNetwork, NetworkError, load_network
from .od_forecast import (CENTERINGS, CalendarModel, DayView, ForecastError, ODForecast, SingularDesignError,
                          fit_lag_regression, forecast_csv, forecast_day, model_json, walk_forward_eval)
from .route_time import (FitError, FitOptions, FittedModel, SGDConfig, TruncationError, atomic_write_text,
                         estimate_truncation, fit, load_model, model_to_dict)
from .synth import ScenarioError, count_occupancy, generate, load_scenario, read_ground_truth, write_ground_truth
from .truncnorm import DegenerateDistributionError

log = logging.getLogger("metrocrowd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("metrocrowd") / "fixtures" / name))


# ------------------------------------------------------------------ options

# dest -> (flag kwargs, default); a default of None means "required unless set in the config"
_OPTS: dict[str, tuple[dict, object]] = {
    "network": (dict(help="network JSON (default: bundled 10-station fixture)"), None),
    "trips": (dict(help="trip CSV"), None),
    "out": (dict(help="output file or directory"), None),
    "categories": (dict(help="comma-separated passenger categories"), None),
    "window": (dict(type=float, help="window width in minutes (default 20)"), 20.0),
    "no_iqr": (dict(action="store_true", default=None, help="skip the per-OD IQR outlier filter"), False),
    "beta": (dict(type=float, help="route length bound as a multiple of the shortest route (default 2)"), 2.0),
    "sigma": (dict(type=int, help="max transfers for non-shortest routes (default 2)"), 2),
    "travel_links_only": (dict(action="store_true", default=None,
                               help="count only travel links when pruning routes"), False),
    "until": (dict(help="train on trips that tap in before this date (YYYY-MM-DD)"), None),
    "max_iter": (dict(type=int, help="EM iterations (default 200)"), 200),
    "tol": (dict(type=float, help="EM stop when LL gain per trip is below this (default 1e-4)"), 1e-4),
    "step": (dict(type=float, help="SGD step (default 0.1; 0 keeps link parameters fixed)"), 0.1),
    "epochs": (dict(type=int, help="SGD epochs per M-step (default 3)"), 3),
    "batch_size": (dict(type=int, help="SGD minibatch size in trips (default 1024)"), 1024),
    "var_floor": (dict(type=float, help="variance floor in min^2 (default 1e-4)"), 1e-4),
    "w0": (dict(type=float, help="transfer walking allowance in minutes (default 2)"), 2.0),
    "trunc_fallback": (dict(action="store_true", default=None,
                            help="speed/headway bounds for edges with no adjacent-pair trips"), False),
    "report": (dict(help="write the fit report JSON here"), None),
    "model": (dict(help="fitted model JSON"), None),
    "day": (dict(help="test / prediction day (YYYY-MM-DD, default: last day in the trips)"), None),
    "kind": (dict(choices=["calendar", "lagreg"], help="OD forecaster (default lagreg)"), "lagreg"),
    "source": (dict(choices=["truth", "calendar", "lagreg"],
                    help="OD counts driving the prediction (default lagreg)"), "lagreg"),
    "reg": (dict(choices=["ridge", "lasso"], help="regularization (default ridge)"), "ridge"),
    "lam": (dict(type=float, help="regularization strength (default 1.0)"), 1.0),
    "max_lag": (dict(type=int, help="number of lags (default 1)"), 1),
    "exclusion": (dict(type=int, help="unresolved windows d (default 2 for the fixture)"), 2),
    "centering": (dict(choices=list(CENTERINGS), help="lag regression centering (default window)"), "window"),
    "stations": (dict(help="comma-separated predictor stations (default all)"), None),
    "horizons": (dict(help="comma-separated horizons (default 1,4,6)"), "1,4,6"),
    "horizon": (dict(type=int, help="forecast horizon used by predict (default 1)"), 1),
    "instants": (dict(help="HH:MM-HH:MM/STEP or comma-separated HH:MM (default 05:00-24:00/10)"),
                 "05:00-24:00/10"),
    "sub_points": (dict(type=int, help="tap-in sub-points per window (default 10)"), 10),
    "line_matrix": (dict(action="store_true", default=None, help="also write per-line direction matrices"), False),
    "ground_truth": (dict(help="ground-truth directory from simulate"), None),
    "density": (dict(help="density CSV from predict"), None),
    "scenario": (dict(help="scenario JSON (default: bundled fixture scenario)"), None),
    "seed": (dict(type=int, help="random seed"), None),
    "days": (dict(type=int, help="simulate only the first N days"), None),
}

_COMMANDS: dict[str, tuple[str, list[str]]] = {
    "ingest": ("clean a raw trip log and count windowed flows",
               ["network", "trips", "out", "categories", "window", "no_iqr"]),
    "routes": ("enumerate route choice sets", ["network", "out", "beta", "sigma", "travel_links_only"]),
    "fit": ("fit link travel times and route weights",
            ["network", "trips", "out", "categories", "beta", "sigma", "travel_links_only", "until", "max_iter",
             "tol", "step", "epochs", "batch_size", "var_floor", "w0", "trunc_fallback", "report", "seed"]),
    "forecast": ("walk-forward OD forecasts for one day",
                 ["network", "trips", "out", "categories", "window", "day", "kind", "reg", "lam", "max_lag",
                  "exclusion", "centering", "stations", "horizons"]),
    "predict": ("edge density and alighting for one day",
                ["network", "model", "trips", "out", "window", "day", "source", "reg", "lam", "max_lag",
                 "exclusion", "centering", "stations", "horizon", "instants", "sub_points", "line_matrix"]),
    "eval": ("MSE tables for OD forecasts, alighting and density",
             ["network", "model", "trips", "out", "window", "day", "reg", "lam", "max_lag", "exclusion",
              "centering", "stations", "horizons", "sub_points", "ground_truth", "density"]),
    "simulate": ("synthetic trips with ground truth", ["scenario", "out", "seed", "days"]),
}

_REQUIRED = {
    "ingest": ["trips", "out"], "routes": ["out"], "fit": ["trips", "out"], "forecast": ["trips", "out"],
    "predict": ["model", "trips", "out"], "eval": ["model", "trips", "out"], "simulate": ["out"],
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metrocrowd", description="Metro passenger density from smart-card trips.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (help_text, opts) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="JSON config; command-line flags take precedence")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker count (accepted for compatibility; output does not depend on it)")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for dest in opts:
            kw = dict(_OPTS[dest][0])
            kw.setdefault("default", None)
            sp.add_argument("--" + dest.replace("_", "-"), dest=dest, **kw)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge config file values under command-line flags and fill defaults."""
    cmd = args.command
    opts = _COMMANDS[cmd][1]
    cfg: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        flat = {k.replace("-", "_"): v for k, v in doc.items() if k not in _COMMANDS}
        section = {k.replace("-", "_"): v for k, v in doc.get(cmd, {}).items()}
        unknown = sorted((set(flat) - set(_OPTS)) | (set(section) - set(opts)))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg = {k: v for k, v in {**flat, **section}.items() if k in opts}
        base = Path(args.config).parent
        for k in ("network", "trips", "out", "model", "report", "ground_truth", "density", "scenario"):
            if k in cfg and isinstance(cfg[k], str) and not Path(cfg[k]).is_absolute():
                cfg[k] = str(base / cfg[k])
    out = {}
    for dest in opts:
        val = getattr(args, dest)
        if val is None:
            val = cfg.get(dest, _OPTS[dest][1])
        out[dest] = val
    missing = [d for d in _REQUIRED[cmd] if out.get(d) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    workers = args.workers if args.workers is not None else os.cpu_count() or 1
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    out["workers"] = workers
    return out


# ------------------------------------------------------------------ helpers

def _network(opt: dict) -> MetroNetwork:
    return load_network(opt.get("network") or fixture_path("network.json"))


def _model(opt: dict, net: MetroNetwork) -> FittedModel:
    try:
        return load_model(opt["model"], net)
    except (FitError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"cannot load model {opt['model']}: {exc}") from exc


def _csv_list(text) -> list[str] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _horizons(text) -> list[int]:
    try:
        hs = [int(h) for h in _csv_list(text)]
    except ValueError as exc:
        raise UsageError(f"bad horizons {text!r}") from exc
    if not hs or any(h < 1 for h in hs):
        raise UsageError("horizons must be integers >= 1")
    return hs


def _date(text: str, what: str) -> date:
    try:
        return date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad {what} date {text!r}") from exc


def _clock(text: str) -> float:
    hh, mm = text.strip().split(":")
    return int(hh) * 60 + float(mm)


def parse_instants(text: str) -> np.ndarray:
    """``HH:MM-HH:MM/STEP`` (end exclusive, step in minutes) or a comma list of ``HH:MM``."""
    try:
        if "-" in text:
            span, step = text.split("/")
            lo, hi = span.split("-")
            step = float(step)
            if step <= 0:
                raise ValueError
            return np.arange(_clock(lo), _clock(hi) - 1e-9, step)
        return np.array([_clock(t) for t in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad instants {text!r}") from exc


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_trips(opt: dict, net: MetroNetwork, categories=None):
    cats = _csv_list(categories) or list(DEFAULT_CATEGORIES)
    trips, report = parse_trips(opt["trips"], net, cats)
    if not trips:
        raise IngestError(f"no valid trips in {opt['trips']}")
    return trips, report


def _observed_categories(trips) -> list[str]:
    seen = {t.category for t in trips}
    known = [c for c in DEFAULT_CATEGORIES if c in seen]
    return known + sorted(seen - set(known))


def _flows_and_day(opt: dict, net: MetroNetwork, trips, categories) -> tuple[FlowSeries, int]:
    flows = aggregate_flows(trips, net, float(opt["window"]), categories)
    if opt.get("day"):
        d = _date(opt["day"], "--day")
        if d not in flows.days:
            raise IngestError(f"day {d} has no trips")
        k = flows.days.index(d)
    else:
        k = len(flows.days) - 1
    if k < 1:
        raise ForecastError("need at least one history day before the test day")
    return flows, k


def _lag_model(opt: dict, history: FlowSeries):
    return fit_lag_regression(history, int(opt["max_lag"]), int(opt["exclusion"]), opt["reg"], float(opt["lam"]),
                              _csv_list(opt.get("stations")), opt["centering"])


# ------------------------------------------------------------------ commands

def cmd_ingest(opt: dict) -> int:
    net = _network(opt)
    cats = _csv_list(opt["categories"]) or list(DEFAULT_CATEGORIES)
    trips, report = parse_trips(opt["trips"], net, cats)
    if opt["no_iqr"]:
        kept, removed = trips, []
    else:
        kept, removed = remove_outliers(trips)
    out = Path(opt["out"])
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "trips_clean.csv", trips_to_csv(kept))
    flows = aggregate_flows(kept, net, float(opt["window"]), cats)
    flows.write(out / "flows")
    manifest = {
        "command": "ingest", "version": __version__, "input": Path(opt["trips"]).name,
        "input_sha256": _sha256(opt["trips"]), **report.as_dict(),
        "iqr_removed": len(removed), "kept": len(kept), "window_min": float(opt["window"]),
        "days": [d.isoformat() for d in flows.days], "categories": cats,
    }
    atomic_write_text(out / "manifest.json", _dump(manifest))
    rej = sum(report.reasons.values())
    print(f"parsed {report.parsed} rows, rejected {rej}, IQR removed {len(removed)}, kept {len(kept)}")
    for reason, n in sorted(report.reasons.items()):
        print(f"  {reason}: {n}")
    return EXIT_OK


def cmd_routes(opt: dict) -> int:
    net = _network(opt)
    sets = net.all_route_sets(float(opt["beta"]), int(opt["sigma"]), bool(opt["travel_links_only"]))
    doc = {"beta": float(opt["beta"]), "sigma": int(opt["sigma"]),
           "travel_links_only": bool(opt["travel_links_only"]), "od_pairs": []}
    for od in sorted(sets):
        doc["od_pairs"].append({"origin": od[0], "dest": od[1], "routes": [
            {"edges": list(r.edges), "stations": list(r.stations), "links": [str(l) for l in r.links],
             "n_links": r.n_links(), "n_transfers": r.n_transfers} for r in sets[od].routes]})
    atomic_write_text(opt["out"], _dump(doc))
    multi = sum(1 for s in sets.values() if len(s) > 1)
    print(f"{len(sets)} OD pairs, {sum(len(s) for s in sets.values())} routes, {multi} pairs with several routes")
    return EXIT_OK


def cmd_fit(opt: dict) -> int:
    net = _network(opt)
    trips, _ = _load_trips(opt, net, opt["categories"])
    if opt["until"]:
        until = _date(opt["until"], "--until")
        trips = [t for t in trips if t.t_in.date() < until]
        if not trips:
            raise IngestError(f"no trips before {until}")
    cats = _csv_list(opt["categories"]) or _observed_categories(trips)
    travel_only = bool(opt["travel_links_only"])
    sets = net.all_route_sets(float(opt["beta"]), int(opt["sigma"]), travel_only)
    trunc = estimate_truncation(net, trips, float(opt["w0"]), bool(opt["trunc_fallback"]))
    fo = FitOptions(max_iter=int(opt["max_iter"]), tol=float(opt["tol"]),
                    sgd=SGDConfig(step=float(opt["step"]), epochs=int(opt["epochs"]),
                                  batch_size=int(opt["batch_size"])),
                    seed=int(opt["seed"]) if opt["seed"] is not None else 0, var_floor=float(opt["var_floor"]))
    t0 = time.perf_counter()
    params, weights, rep = fit(trips, sets, trunc, fo, net=net, categories=cats)
    log.info("fit took %.1f s", time.perf_counter() - t0)
    meta = {"beta": float(opt["beta"]), "sigma": int(opt["sigma"]), "travel_links_only": travel_only,
            "trips": len(trips), "seed": fo.seed, "iterations": rep.iterations, "converged": rep.converged,
            "final_loglik": rep.ll_trace[-1] if rep.ll_trace else None}
    atomic_write_text(opt["out"], json.dumps(model_to_dict(params, weights, sets, meta), indent=1,
                                             sort_keys=True) + "\n")
    if opt["report"]:
        atomic_write_text(opt["report"], _dump({"iterations": rep.iterations, "converged": rep.converged,
                                                "loglik_trace": rep.ll_trace, "n_trips": rep.n_trips,
                                                "zero_support_trips": rep.zero_support, "seed": rep.seed}))
    print(rep.summary())
    return EXIT_OK


def cmd_forecast(opt: dict) -> int:
    net = _network(opt)
    trips, _ = _load_trips(opt, net, opt["categories"])
    cats = _csv_list(opt["categories"]) or _observed_categories(trips)
    flows, k = _flows_and_day(opt, net, trips, cats)
    history = flows.select_days(list(range(k)))
    hs = _horizons(opt["horizons"])
    d = int(opt["exclusion"])
    model = CalendarModel.fit(history) if opt["kind"] == "calendar" else _lag_model(opt, history)
    view = DayView.from_flows(flows, k)
    res = walk_forward_eval(model, view, hs, d)
    out = Path(opt["out"])
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "forecast.csv", forecast_csv(flows.days[k], flows.od_pairs, res.predictions))
    atomic_write_text(out / "forecast_model.json", model_json(model))
    metrics = {"model": res.model, "day": flows.days[k].isoformat(), "history_days": k,
               "mse": {str(h): res.mse[h] for h in hs}}
    atomic_write_text(out / "forecast_metrics.json", _dump(metrics))
    print(_table(f"OD forecast MSE ({res.model})", hs, {res.model: res.mse}))
    return EXIT_OK


def _day_forecast(opt: dict, flows: FlowSeries, k: int, source: str, horizon: int) -> ODForecast:
    if source == "truth":
        return ODForecast.from_flows(flows, k, horizon)
    history = flows.select_days(list(range(k)))
    model = CalendarModel.fit(history) if source == "calendar" else _lag_model(opt, history)
    totals = forecast_day(model, DayView.from_flows(flows, k), horizon, int(opt["exclusion"]))
    return ODForecast.from_totals(flows.days[k], flows.width, flows.od_pairs, flows.categories, totals,
                                  history.category_shares(), horizon)


def cmd_predict(opt: dict) -> int:
    net = _network(opt)
    fm = _model(opt, net)
    cats = fm.weights.categories
    trips, _ = _load_trips(opt, net, cats)
    flows, k = _flows_and_day(opt, net, trips, cats)
    fc = _day_forecast(opt, flows, k, opt["source"], int(opt["horizon"]))
    engine = DensityEngine(net, fm.route_sets, fm.weights, fm.params, int(opt["sub_points"]))
    instants = parse_instants(opt["instants"])
    field = engine.predict_density(fc, instants)
    windows = list(range(flows.n_windows))
    alight = engine.predict_alighting(fc, windows)
    out = Path(opt["out"])
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "density.csv", field.to_csv())
    atomic_write_text(out / "density.json", json.dumps(field.snapshots(), indent=1) + "\n")
    atomic_write_text(out / "alighting.csv", alighting_csv(fc.day, engine.stations, windows, alight))
    if opt["line_matrix"]:
        for line in sorted(net.lines):
            mats = field.line_matrices(net, line)
            doc = {"line": line, "instants": [field.timestamp(i).strftime("%H:%M:%S")
                                              for i in range(len(instants))]}
            for direction, m in mats.items():
                doc[direction] = {"stations": m["stations"], "edges": m["edges"],
                                  "matrix": np.round(m["matrix"], 6).tolist()}
            atomic_write_text(out / f"line_{line}.json", _dump(doc))
    manifest = {"command": "predict", "version": __version__, "day": fc.day.isoformat(), "source": opt["source"],
                "horizon": int(opt["horizon"]), "instants": len(instants), "sub_points": int(opt["sub_points"]),
                "clamped_cells": fc.clamped, "model_sha256": _sha256(opt["model"])}
    atomic_write_text(out / "manifest.json", _dump(manifest))
    peak = int(np.argmax(field.counts.sum(axis=1))) if len(instants) else 0
    if len(instants):
        print(f"peak on-board total {field.counts[peak].sum():.1f} at {field.timestamp(peak):%H:%M}")
    print(f"expected alightings {alight.sum():.1f} over {len(windows)} windows")
    return EXIT_OK


def _read_density_csv(path) -> tuple[list[str], np.ndarray, dict]:
    values: dict[tuple[str, float], float] = {}
    edges, stamps = [], []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["edge_id", "timestamp", "expected_count"]:
            raise IngestError(f"{path} is not a density CSV")
        for eid, ts, val in rd:
            hh, mm, ss = ts.split(" ")[1].split(":")
            t = int(hh) * 60 + int(mm) + int(ss) / 60.0
            if eid not in edges:
                edges.append(eid)
            if not stamps or stamps[-1] != t:
                if t not in stamps:
                    stamps.append(t)
            values[(eid, t)] = float(val)
    return edges, np.array(stamps), values


def cmd_eval(opt: dict) -> int:
    net = _network(opt)
    fm = _model(opt, net)
    cats = fm.weights.categories
    trips, _ = _load_trips(opt, net, cats)
    flows, k = _flows_and_day(opt, net, trips, cats)
    history = flows.select_days(list(range(k)))
    hs = _horizons(opt["horizons"])
    d = int(opt["exclusion"])
    cal, lag = CalendarModel.fit(history), _lag_model(opt, history)
    view = DayView.from_flows(flows, k)
    od_mse = {m.name: walk_forward_eval(m, view, hs, d).mse for m in (cal, lag)}
    engine = DensityEngine(net, fm.route_sets, fm.weights, fm.params, int(opt["sub_points"]))
    ev = alighting_walk_forward(engine, lag, view, flows.outflow[k], history, flows.days[k], hs, d)
    al_mse = {"pipe": ev.pipe_mse, "calendar": {h: ev.calendar_mse for h in hs}}
    report = {"day": flows.days[k].isoformat(), "history_days": k, "horizons": hs,
              "od_mse": {m: {str(h): v[h] for h in hs} for m, v in od_mse.items()},
              "alighting_mse": {m: {str(h): v[h] for h in hs} for m, v in al_mse.items()}}
    text = [_table("OD forecast MSE", hs, od_mse), _table("Alighting MSE", hs, al_mse)]
    if opt["density"]:
        if not opt["ground_truth"]:
            raise UsageError("--density needs --ground-truth")
        gt = read_ground_truth(opt["ground_truth"], net)
        edges, stamps, values = _read_density_csv(opt["density"])
        unknown = set(edges) - set(gt.edges)
        if unknown:
            raise IngestError(f"density CSV has edges not in the network: {sorted(unknown)}")
        gt_day = (flows.days[k] - gt.start_date).days
        truth = count_occupancy(gt, gt_day, stamps)
        pred = np.zeros_like(truth, dtype=float)
        for (eid, t), v in values.items():
            pred[int(np.searchsorted(stamps, t)), gt.edges.index(eid)] = v
        if len(values) != truth.size:
            raise IngestError("density CSV does not cover every (edge, instant) cell")
        err = np.abs(pred - truth)
        ok = err <= 3 * np.sqrt(truth) + 2
        report["density"] = {"cells": int(truth.size), "within_tolerance": float(ok.mean()),
                             "max_abs_error": float(err.max()), "mean_abs_error": float(err.mean())}
        text.append(f"Density: {ok.mean():.4f} of {truth.size} cells within 3*sqrt(count)+2, "
                    f"max abs error {err.max():.2f}")
    atomic_write_text(opt["out"], _dump(report))
    print("\n\n".join(text))
    return EXIT_OK


def _table(title: str, hs: list[int], rows: dict[str, dict[int, float]]) -> str:
    width = max(len(r) for r in rows) + 2
    lines = [title, "model".ljust(width) + "".join(f"{'h=' + str(h):>14}" for h in hs)]
    for name, vals in rows.items():
        lines.append(name.ljust(width) + "".join(f"{vals[h]:>14.4f}" for h in hs))
    return "\n".join(lines)


def cmd_simulate(opt: dict) -> int:
    cfg = load_scenario(opt["scenario"] or fixture_path("scenario.json"))
    if opt["seed"] is not None:
        cfg.seed = int(opt["seed"])
    if opt["days"] is not None:
        n = int(opt["days"])
        if not 1 <= n <= cfg.days:
            raise UsageError(f"--days must be between 1 and {cfg.days}")
        cfg.day_factors = cfg.day_factors[:n]
    trips, gt = generate(cfg)
    out = Path(opt["out"])
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "trips.csv", trips_to_csv(trips))
    write_ground_truth(gt, out)
    atomic_write_text(out / "manifest.json", _dump({"command": "simulate", "version": __version__,
                                                   "seed": cfg.seed, "days": cfg.days, "trips": len(trips)}))
    print(f"{len(trips)} trips over {cfg.days} days written to {out}")
    return EXIT_OK


_HANDLERS = {"ingest": cmd_ingest, "routes": cmd_routes, "fit": cmd_fit, "forecast": cmd_forecast,
             "predict": cmd_predict, "eval": cmd_eval, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        opt = resolve(args)
        return _HANDLERS[args.command](opt)
    except UsageError as exc:
        print(f"metrocrowd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TruncationError) as exc:
        print(f"metrocrowd {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FitError, DegenerateDistributionError, SingularDesignError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"metrocrowd {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IngestError, NetworkError, ScenarioError, ForecastError, ForecastGapError, OSError, KeyError,
            ValueError) as exc:
        print(f"metrocrowd {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
