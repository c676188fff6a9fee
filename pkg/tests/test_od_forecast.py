from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.linear_model import Lasso

from metrocrowd.afc import FlowSeries
from metrocrowd.od_forecast import (CalendarModel, DayView, ForecastError, LookaheadError, ODForecast,
                                    SingularDesignError, _solve_lasso, _solve_ridge, calendar_predict,
                                    fit_lag_regression, forecast_csv, forecast_day, lag_design, model_json,
                                    walk_forward_eval)


def make_series(inflow, outflow, od, stations=("A", "B"), od_pairs=(("A", "B"), ("B", "A"))):
    n_days = inflow.shape[0]
    days = [date(2024, 1, 1) + timedelta(days=k) for k in range(n_days)]
    return FlowSeries(days, 1440 / inflow.shape[1], list(stations), list(od_pairs), ["adult"],
                      np.asarray(inflow), np.asarray(outflow), np.asarray(od)[..., None])


def planted_series(rng, n_days=40, n_w=72, coef=2.0, lag=7, noise=1.0):
    inflow = rng.poisson(20, (n_days, n_w, 2)).astype(float)
    outflow = rng.poisson(15, (n_days, n_w, 2)).astype(float)
    od = rng.poisson(5, (n_days, n_w, 2)).astype(float)
    od[:, lag:, 0] = coef * inflow[:, :-lag, 0] + rng.normal(0, noise, (n_days, n_w - lag))
    return make_series(inflow, outflow, od)


# ---------------------------------------------------------------- calendar

def test_calendar_mean_examples():
    od = np.zeros((3, 72, 2))
    od[:, 10, 0] = [3, 5, 7]
    f = make_series(np.zeros((3, 72, 2)), np.zeros((3, 72, 2)), od)
    assert calendar_predict(f, 10)[0] == 5
    one = f.select_days([1])
    assert np.array_equal(calendar_predict(one), one.od_total()[0])
    with pytest.raises(ForecastError):
        calendar_predict(f, 72)
    with pytest.raises(ForecastError):
        calendar_predict(f, -1)


def test_calendar_matches_re_averaging(generated):
    hist = generated.flows.select_days(list(range(generated.test_day)))
    got = calendar_predict(hist)
    n_days = len(hist.days)
    for w in (0, 25, 50):
        for k in range(0, len(hist.od_pairs), 7):
            total = 0
            for d in range(n_days):
                total += int(sum(hist.od[d, w, k, c] for c in range(len(hist.categories))))
            assert got[w, k] == pytest.approx(total / n_days, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.permutations(list(range(5))))
def test_calendar_permutation_invariant(seed, perm):
    rng = np.random.default_rng(seed)
    od = rng.poisson(4, (5, 72, 2))
    f = make_series(np.zeros((5, 72, 2)), np.zeros((5, 72, 2)), od)
    assert np.allclose(calendar_predict(f), calendar_predict(f.select_days(perm)), atol=1e-12)


# ---------------------------------------------------------------- solvers

def test_ridge_zero_lambda_matches_normal_equations(rng):
    X = rng.normal(size=(200, 5))
    Y = X @ rng.normal(size=(5, 3)) + 4 + rng.normal(0, 0.1, (200, 3))
    B, c = _solve_ridge(X, Y, 0.0)
    A = np.hstack([np.ones((200, 1)), X])
    ref = np.linalg.solve(A.T @ A, A.T @ Y)
    assert np.allclose(B, ref[1:], atol=1e-8) and np.allclose(c, ref[0], atol=1e-8)


def test_ridge_large_lambda_gives_training_mean(rng):
    X = rng.normal(size=(100, 4))
    Y = X @ rng.normal(size=(4, 2)) + 7
    B, c = _solve_ridge(X, Y, 1e12)
    assert np.abs(B).max() < 1e-8
    assert np.allclose(c, Y.mean(axis=0), atol=1e-6)


def test_ridge_continuous_in_lambda(rng):
    X = rng.normal(size=(80, 4))
    Y = X @ rng.normal(size=(4, 1)) + rng.normal(size=(80, 1))
    prev = _solve_ridge(X, Y, 1.0)[0]
    for lam in np.linspace(1.0, 1.01, 11)[1:]:
        cur = _solve_ridge(X, Y, lam)[0]
        assert np.abs(cur - prev).max() < 1e-3
        prev = cur


def test_lasso_matches_sklearn(rng):
    X = rng.normal(size=(300, 6))
    beta = np.array([[1.5, 0.0], [0.0, -2.0], [0.3, 0.0], [0.0, 0.0], [-1.0, 0.5], [0.0, 0.0]])
    Y = X @ beta + 2 + rng.normal(0, 0.3, (300, 2))
    for lam in (0.01, 0.1, 0.5):
        B, c = _solve_lasso(X, Y, lam)
        ref = Lasso(alpha=lam, fit_intercept=True, tol=1e-12, max_iter=100_000).fit(X, Y)
        assert np.allclose(B, ref.coef_.T, atol=1e-6)
        assert np.allclose(c, ref.intercept_, atol=1e-6)


def test_lasso_large_lambda_zeroes_everything(rng):
    X = rng.normal(size=(100, 4))
    Y = X @ rng.normal(size=(4, 2))
    B, c = _solve_lasso(X, Y, 1e6)
    assert np.all(B == 0) and np.allclose(c, Y.mean(axis=0))


def test_singular_design_is_reported(rng):
    x = rng.normal(size=(50, 1))
    X = np.hstack([x, 2 * x])
    Y = rng.normal(size=(50, 1))
    with pytest.raises(SingularDesignError, match="lambda"):
        _solve_ridge(X, Y, 0.0)
    with pytest.raises(SingularDesignError):
        _solve_lasso(X, Y, 0.0)
    _solve_ridge(X, Y, 0.1)


# ---------------------------------------------------------------- lag regression

@pytest.mark.parametrize("reg, lam", [("ridge", 1.0), ("lasso", 0.01)])
@pytest.mark.parametrize("centering", ["window", "global"])
def test_planted_coefficient_recovered(rng, reg, lam, centering):
    hist = planted_series(rng)
    m = fit_lag_regression(hist, max_lag=1, exclusion=6, reg=reg, lam=lam, stations=["A"], centering=centering)
    names = m.feature_names()
    k = names.index(("A", 7, "in"))
    assert abs(m.coef[k, 0] - 2.0) < 0.1
    doc = m.to_dict()
    assert abs(doc["targets"][0]["coef"]["A|7|in"] - 2.0) < 0.1


def test_lag_design_rows_stay_within_day(rng):
    hist = planted_series(rng, n_days=3, n_w=72)
    X, Y = lag_design(hist, [0, 1], max_lag=2, exclusion=6, centering="global")
    assert X.shape == (3 * (72 - 8), 8) and Y.shape == (3 * 64, 2 + 4)
    # first row of day 1: window 8, lag 7 is window 1 of the same day
    assert X[64, 0] == hist.inflow[1, 1, 0]
    assert Y[64, 0] == hist.od_total()[1, 8, 0]


def test_lag_regression_errors(rng):
    hist = planted_series(rng, n_days=2, n_w=72)
    with pytest.raises(ForecastError):
        fit_lag_regression(hist, max_lag=0)
    with pytest.raises(ForecastError):
        fit_lag_regression(hist, lam=-1)
    with pytest.raises(ForecastError):
        fit_lag_regression(hist, reg="elastic")
    with pytest.raises(ForecastError):
        fit_lag_regression(hist, stations=["Q"])
    with pytest.raises(ForecastError):
        fit_lag_regression(hist, max_lag=70, exclusion=6)


# ---------------------------------------------------------------- walk-forward

def reference_walk_forward(model, inflow, outflow, truth, horizon):
    """Independent recursive loop; centering='window' semantics written out longhand."""
    n_w, n_od = truth.shape
    fb = model.fallback
    P = model.predictors
    lags = list(range(model.exclusion + 1, model.exclusion + model.max_lag + 1))
    preds = np.zeros_like(truth, dtype=float)
    for w in range(n_w):
        frontier = w - horizon - model.exclusion
        state = {}
        for u in range(frontier + 1, w + 1):
            if u < 0:
                continue
            mean_t = np.concatenate([fb.od_mean[u], fb.in_mean[u, P], fb.out_mean[u, P]])
            if u < model.exclusion + model.max_lag:
                state[u] = mean_t
                continue
            x = []
            for l in lags:
                s = u - l
                if s <= frontier:
                    v = np.concatenate([inflow[s, P], outflow[s, P]])
                else:
                    v = state[s][n_od:]
                x.append(v - np.concatenate([fb.in_mean[s, P], fb.out_mean[s, P]]))
            state[u] = np.maximum(np.concatenate(x) @ model.coef + model.intercept + mean_t, 0)
        preds[w] = state[w][:n_od]
    return preds, float(np.mean((preds - truth) ** 2))


def test_walk_forward_matches_reference_loop(generated):
    f = generated.flows
    hist = f.select_days(list(range(generated.test_day)))
    m = fit_lag_regression(hist, max_lag=2, exclusion=2, lam=1.0)
    view = DayView.from_flows(f, generated.test_day)
    res = walk_forward_eval(m, view, horizons=(1, 4, 6), exclusion=2)
    k = generated.test_day
    truth = f.od_total()[k].astype(float)
    for h in (1, 4, 6):
        ref_pred, ref_mse = reference_walk_forward(m, f.inflow[k].astype(float), f.outflow[k].astype(float),
                                                   truth, h)
        assert abs(res.mse[h] - ref_mse) < 1e-9
        assert np.allclose(res.predictions[h], ref_pred, atol=1e-9)


def test_walk_forward_never_reads_ahead(generated):
    f = generated.flows
    hist = f.select_days(list(range(generated.test_day)))
    m = fit_lag_regression(hist, max_lag=3, exclusion=2, lam=1.0)
    view = DayView.from_flows(f, generated.test_day)
    walk_forward_eval(m, view, horizons=(1, 6), exclusion=2)
    assert view.log
    assert all(w <= frontier for frontier, w in view.log)


def test_lookahead_is_caught():
    class Cheater:
        name = "cheat"

        def predict(self, view, window, frontier, cache):
            return view.od(window)

    view = DayView(np.zeros((72, 2)), np.zeros((72, 2)), np.ones((72, 2)))
    with pytest.raises(LookaheadError):
        walk_forward_eval(Cheater(), view, horizons=(1,), exclusion=0)


def test_oracle_predictor_has_zero_error(generated):
    f = generated.flows
    truth = f.od_total()[generated.test_day].astype(float)

    class Oracle:
        name = "oracle"

        def predict(self, view, window, frontier, cache):
            return truth[window]

    res = walk_forward_eval(Oracle(), DayView.from_flows(f, generated.test_day), horizons=(1, 4, 6))
    assert res.mse == {1: 0.0, 4: 0.0, 6: 0.0}


def test_calendar_constant_across_horizons(generated):
    f = generated.flows
    cal = CalendarModel.fit(f.select_days(list(range(generated.test_day))))
    res = walk_forward_eval(cal, DayView.from_flows(f, generated.test_day), horizons=(1, 4, 6))
    assert res.mse[1] == res.mse[4] == res.mse[6]


def test_forecast_day_horizon_check():
    view = DayView(np.zeros((72, 2)), np.zeros((72, 2)), np.zeros((72, 2)))
    with pytest.raises(ForecastError):
        forecast_day(CalendarModel(np.zeros((72, 2)), np.zeros((72, 2)), np.zeros((72, 2))), view, 0, 6)
    with pytest.raises(ForecastError):
        walk_forward_eval(CalendarModel(np.zeros((72, 2)), np.zeros((72, 2)), np.zeros((72, 2))), view, (0,))


def test_predictions_non_negative(generated):
    f = generated.flows
    hist = f.select_days(list(range(generated.test_day)))
    m = fit_lag_regression(hist, max_lag=1, exclusion=2, lam=0.0, centering="global")
    res = walk_forward_eval(m, DayView.from_flows(f, generated.test_day), horizons=(1, 6), exclusion=2)
    assert all((p >= 0).all() for p in res.predictions.values())


# ---------------------------------------------------------------- containers and output

def test_odforecast_clamping_and_horizon():
    totals = np.array([[1.0, -2.0], [-0.5, 3.0]])
    shares = np.array([[0.25, 0.75], [1.0, 0.0]])
    fc = ODForecast.from_totals(date(2024, 1, 1), 20, [("A", "B"), ("B", "A")], ["adult", "child"], totals, shares)
    assert fc.clamped == 2
    assert np.all(fc.counts >= 0)
    assert np.allclose(fc.totals(), [[1, 0], [0, 3]])
    assert np.allclose(fc.counts[0, 0], [0.25, 0.75])
    with pytest.raises(ForecastError):
        ODForecast(date(2024, 1, 1), 20, [], [], np.zeros((1, 0, 0)), horizon=0)


def test_forecast_csv_and_model_json(rng):
    hist = planted_series(rng, n_days=5)
    m = fit_lag_regression(hist, max_lag=1, exclusion=6, stations=["A"])
    text = forecast_csv(date(2024, 2, 1), hist.od_pairs, {1: np.ones((72, 2)) * 0.5})
    lines = text.splitlines()
    assert lines[0] == "day,window,origin,dest,horizon,prediction"
    assert lines[1] == "2024-02-01,0,A,B,1,0.500000" and len(lines) == 1 + 72 * 2
    js = model_json(m)
    assert '"A|7|in"' in js and '"A|7|out"' in js
