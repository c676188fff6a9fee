"""Acceptance criteria, one test each; every test records a PASS/FAIL line for the terminal summary."""
import time

import numpy as np
from scipy import integrate

from metrocrowd import truncnorm as tn
from metrocrowd.cli import main
from metrocrowd.density import DensityEngine, alighting_walk_forward, cohort_state_probabilities
from metrocrowd.network import enumerate_routes
from metrocrowd.od_forecast import CalendarModel, DayView, ODForecast, fit_lag_regression, walk_forward_eval
from metrocrowd.route_time import FitOptions, Problem, SGDConfig, e_step, fit, route_time_params
from metrocrowd.synth import count_occupancy
from metrocrowd.truncnorm import TruncNormParams

from test_network import brute_force_routes, random_network
from test_od_forecast import planted_series
from test_route_time import _random_state, fd_relative_errors, toy_routes, toy_three_link
from test_truncnorm import analytic_mean, random_params

RESULTS: list[str] = []
HORIZONS = (1, 4, 6)
EXCLUSION = 2


def check(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_gradients(rng):
    t0 = time.perf_counter()
    net, rs, params, weights, trips = toy_three_link(rng)
    prob = Problem(trips, rs, params, ["adult"])
    worst = 0.0
    for _ in range(50):
        p = _random_state(rng, params)
        resp, _ = e_step(prob, p, weights)
        worst = max(worst, max(fd_relative_errors(prob, p, weights, resp, rng)))
    dt = time.perf_counter() - t0
    check(1, "link gradients vs central differences", worst < 1e-4 and dt < 10,
          f"50 states, worst rel err {worst:.2e} < 1e-4, {dt:.1f} s < 10 s")


def test_criterion_02_em_recovery(generated, fitted):
    cfg = generated.cfg
    rs = cfg.route_sets()
    per_od = np.bincount([cfg.od_pairs.index((t.origin, t.dest)) for t in fitted.train],
                         minlength=len(cfg.od_pairs))
    worst_mu, worst_pi, n_multi = 0.0, 0.0, 0
    for od, s in rs.items():
        if len(s) < 2:
            continue
        n_multi += 1
        for route in s.routes:
            fit_mu = route_time_params(route, fitted.params).mu
            true_mu = route_time_params(route, cfg.planted).mu
            worst_mu = max(worst_mu, abs(fit_mu - true_mu))
        for cat in cfg.categories:
            worst_pi = max(worst_pi, np.abs(fitted.weights.get(od, cat) - cfg.weights.get(od, cat)).max())
    ok = per_od.min() >= 500 and worst_mu <= 0.5 and worst_pi <= 0.05 and fitted.seconds < 300
    check(2, "EM recovery on the bundled scenario", ok,
          f"{n_multi} multi-route pairs, min {per_od.min()} trips/pair, worst route mean err {worst_mu:.3f} min, "
          f"worst weight err {worst_pi:.4f}, fit {fitted.seconds:.0f} s")


def test_criterion_03_monotonicity(fitted, rng):
    ll = np.array(fitted.report.ll_trace)
    slack = np.diff(ll) / np.abs(ll[:-1])
    net, rs, params, weights, trips, cats = toy_routes(rng, n_routes=3, n=800)
    _, _, rep = fit(trips, rs, init=(params, weights), categories=cats,
                    opt=FitOptions(max_iter=30, tol=0, sgd=SGDConfig(step=0.0)))
    pi_only = np.diff(rep.ll_trace)
    # exactness is read as "no decrease beyond float rounding of the summed log-likelihood"
    ok = slack.min() >= -1e-3 and pi_only.min() >= -1e-9 * abs(rep.ll_trace[-1])
    check(3, "log-likelihood monotonicity", ok,
          f"fixture fit worst relative step {slack.min():+.2e} >= -1e-3 over {len(ll)} iterations, "
          f"pi-only worst step {pi_only.min():+.2e}")


def test_criterion_04_truncnorm(rng):
    worst_int = 0.0
    for p in random_params(rng, 100):
        val, _ = integrate.quad(lambda x: tn.pdf(p, x), p.a, p.b, epsabs=1e-13, epsrel=1e-13, limit=200)
        worst_int = max(worst_int, abs(val - 1))
    edges_exact = all(tn.cdf(p, p.a) == 0.0 and tn.cdf(p, p.b) == 1.0 for p in random_params(rng, 100))
    worst_mean = 0.0
    for p in (TruncNormParams(5, 1, 3, 7), TruncNormParams(2, 3, 0, 4), TruncNormParams(-1, 1, 0, 6)):
        x = tn.sample(p, rng, 100_000)
        worst_mean = max(worst_mean, abs(x.mean() - analytic_mean(p)))
    ok = worst_int <= 1e-9 and edges_exact and worst_mean <= 0.02
    check(4, "truncated-normal math", ok,
          f"integral err {worst_int:.1e}, cdf edges exact {edges_exact}, sample mean err {worst_mean:.4f}")


def test_criterion_05_route_enumeration(net):
    t0 = time.perf_counter()
    mismatches = 0
    for o, d in net.od_pairs():
        got = [(r.n_links(), r.edges) for r in enumerate_routes(net, o, d).routes]
        mismatches += got != brute_force_routes(net, o, d)
    dt = time.perf_counter() - t0
    seeds = np.random.default_rng(5)
    n_random = 0
    for _ in range(20):
        rnet = random_network(np.random.default_rng(int(seeds.integers(2**32))), int(seeds.integers(2, 16)),
                              int(seeds.integers(1, 4)), int(seeds.integers(0, 9)))
        for o, d in rnet.od_pairs():
            got = [(r.n_links(), r.edges) for r in enumerate_routes(rnet, o, d).routes]
            mismatches += got != brute_force_routes(rnet, o, d)
            n_random += 1
    check(5, "route enumeration vs brute force", mismatches == 0 and dt < 5,
          f"{len(net.od_pairs())} fixture pairs in {dt:.2f} s, {n_random} random-network pairs, "
          f"{mismatches} mismatches")


def test_criterion_06_density_vs_events(generated, fitted):
    cfg, gt, day = generated.cfg, generated.gt, generated.test_day
    engine = DensityEngine(cfg.network, cfg.route_sets(), fitted.weights, fitted.params)
    instants = np.arange(300.0, 1440.0, 10.0)
    field = engine.predict_density(ODForecast.from_flows(generated.flows, day), instants)
    pred = field.counts[:, [field.edges.index(e) for e in gt.edges]]
    truth = count_occupancy(gt, day, instants)
    coverage = float(np.mean(np.abs(pred - truth) <= 3 * np.sqrt(truth) + 2))
    worst = 0.0
    for rs in cfg.route_sets().values():
        for route in rs.routes:
            for t in np.linspace(0, 70, 141):
                worst = max(worst, abs(sum(cohort_state_probabilities(route, fitted.params, t).values()) - 1))
    check(6, "density vs discrete-event counts", coverage >= 0.95 and worst <= 0.02,
          f"{coverage:.4f} of {truth.size} cells within 3*sqrt(n)+2 (need 0.95), cohort mass err {worst:.4f}")


def test_criterion_07_alighting_ordering(generated, fitted):
    f, day = generated.flows, generated.test_day
    history = f.select_days(list(range(day)))
    cfg = generated.cfg
    engine = DensityEngine(cfg.network, cfg.route_sets(), fitted.weights, fitted.params)
    lag = fit_lag_regression(history, 1, EXCLUSION, "ridge", 1.0)
    ev = alighting_walk_forward(engine, lag, DayView.from_flows(f, day), f.outflow[day], history, f.days[day],
                                HORIZONS, EXCLUSION)
    ok = all(ev.pipe_mse[h] < ev.calendar_mse for h in HORIZONS)
    check(7, "alighting MSE below the calendar baseline", ok,
          ", ".join(f"h={h}: {ev.pipe_mse[h]:.1f}" for h in HORIZONS) + f" vs calendar {ev.calendar_mse:.1f}")


def test_criterion_08_calendar_constancy(generated):
    f, day = generated.flows, generated.test_day
    cal = CalendarModel.fit(f.select_days(list(range(day))))
    mse = walk_forward_eval(cal, DayView.from_flows(f, day), HORIZONS, EXCLUSION).mse
    ok = mse[1] == mse[4] == mse[6]
    check(8, "calendar MSE constant across horizons", ok, ", ".join(f"h={h}: {mse[h]!r}" for h in HORIZONS))


def test_criterion_09_lag_recovery(rng):
    hist = planted_series(rng, coef=2.0, lag=7)
    got = {}
    for reg, lam in (("ridge", 1.0), ("lasso", 0.01)):
        m = fit_lag_regression(hist, max_lag=1, exclusion=6, reg=reg, lam=lam, stations=["A"])
        got[reg] = float(m.coef[m.feature_names().index(("A", 7, "in")), 0])
    ok = all(abs(v - 2.0) <= 0.1 for v in got.values())
    check(9, "planted lag coefficient recovered", ok, ", ".join(f"{k} {v:.4f}" for k, v in got.items()) + " vs 2")


def _pipeline(root, days=3):
    trips = root / "ing" / "trips_clean.csv"
    steps = [
        ["simulate", "--out", root / "sim", "--days", days, "--seed", 7],
        ["ingest", "--trips", root / "sim" / "trips.csv", "--out", root / "ing"],
        ["fit", "--trips", trips, "--out", root / "model.json", "--seed", 7, "--max-iter", 10,
         "--report", root / "fit_report.json"],
        ["predict", "--model", root / "model.json", "--trips", trips, "--out", root / "pred", "--line-matrix"],
        ["eval", "--model", root / "model.json", "--trips", trips, "--out", root / "eval.json",
         "--ground-truth", root / "sim", "--density", root / "pred" / "density.csv"],
    ]
    for argv in steps:
        argv = [str(a) for a in argv] + ["--workers", "1"]
        assert main(argv) == 0, argv
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_end_to_end_determinism(tmp_path):
    a = _pipeline(tmp_path / "run1")
    b = _pipeline(tmp_path / "run2")
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    check(10, "simulate, ingest, fit, predict, eval byte-identical", a.keys() == b.keys() and not diff,
          f"{len(a)} files compared, {len(diff)} differ" + (f": {diff}" if diff else ""))
