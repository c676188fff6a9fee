import time
from dataclasses import dataclass

import numpy as np
import pytest

from metrocrowd.afc import FlowSeries, aggregate_flows, remove_outliers
from metrocrowd.cli import fixture_path
from metrocrowd.network import load_network
from metrocrowd.route_time import FitOptions, FitReport, LinkParamSet, RouteWeights, SGDConfig, estimate_truncation, fit
from metrocrowd.synth import GroundTruth, ScenarioConfig, generate, load_scenario


@pytest.fixture(scope="session")
def net():
    return load_network(fixture_path("network.json"))


@pytest.fixture(scope="session")
def scenario() -> ScenarioConfig:
    return load_scenario(fixture_path("scenario.json"))


@dataclass
class Generated:
    cfg: ScenarioConfig
    trips: list
    gt: GroundTruth
    flows: FlowSeries
    test_day: int  # index of the held-out last day


@pytest.fixture(scope="session")
def generated(scenario) -> Generated:
    trips, gt = generate(scenario)
    flows = aggregate_flows(trips, scenario.network, scenario.width, scenario.categories)
    return Generated(scenario, trips, gt, flows, scenario.days - 1)


@dataclass
class Fitted:
    params: LinkParamSet
    weights: RouteWeights
    report: FitReport
    seconds: float
    train: list


@pytest.fixture(scope="session")
def fitted(generated) -> Fitted:
    """EM fit on every day but the last one, after IQR cleaning."""
    cfg = generated.cfg
    last = cfg.start_date.toordinal() + generated.test_day
    train = [t for t in generated.trips if t.t_in.date().toordinal() < last]
    train, _ = remove_outliers(train)
    t0 = time.perf_counter()
    trunc = estimate_truncation(cfg.network, train)
    params, weights, rep = fit(train, cfg.route_sets(), trunc, FitOptions(sgd=SGDConfig(step=0.1), seed=7),
                               net=cfg.network, categories=cfg.categories)
    return Fitted(params, weights, rep, time.perf_counter() - t0, train)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
