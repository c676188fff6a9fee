"""Regenerate src/metrocrowd/fixtures/scenario.json (planted model for the 10-station fixture)."""

import json
import math
from pathlib import Path

import numpy as np

from metrocrowd.network import load_network

FIX = Path(__file__).resolve().parents[1] / "src" / "metrocrowd" / "fixtures"


def main() -> None:
    net = load_network(FIX / "network.json")
    rng = np.random.default_rng(20160125)
    links = []
    for k, s in enumerate(net.station_ids):
        mu_g = round(2.0 + 1.0 * rng.random(), 2)
        mu_a = round(1.0 + 0.5 * rng.random(), 2)
        links.append({"kind": "entry", "anchor": s, "mu": mu_g, "sigma": 0.5, "a": mu_g - 1.0, "b": mu_g + 1.0})
        links.append({"kind": "exit", "anchor": s, "mu": mu_a, "sigma": 0.3, "a": round(mu_a - 0.6, 2), "b": round(mu_a + 0.6, 2)})
    for s in net.interchanges():
        links.append({"kind": "transfer", "anchor": s, "mu": 3.0, "sigma": 1.0, "a": 1.0, "b": 5.0})
    for eid in sorted(net.edges):
        mu = round(0.9 * net.edges[eid].length + 0.4, 2)
        links.append({"kind": "travel", "anchor": eid, "mu": mu, "sigma": 0.2, "a": round(mu - 0.4, 2), "b": round(mu + 0.4, 2)})
    mus = {(l["kind"], l["anchor"]): l["mu"] for l in links}

    cats = ["adult", "senior"]
    weights = []
    for od, rs in net.all_route_sets().items():
        if len(rs) < 2:
            continue
        means = [sum(mus[(l.kind.value, l.anchor)] for l in r.links) for r in rs.routes]
        fast = int(np.argmin(means))
        for cat, p_fast in (("adult", 0.7), ("senior", 0.4)):
            w = [round((1 - p_fast) / (len(means) - 1), 6)] * len(means)
            w[fast] = p_fast
            weights.append({"origin": od[0], "dest": od[1], "category": cat, "weights": w})

    # service 05:40-23:40 with a morning and an evening shoulder
    profile = []
    for w in range(72):
        h = (w + 0.5) / 3
        if h < 5.67 or h > 23.67:
            profile.append(0.0)
            continue
        v = 0.75 + 0.25 * math.exp(-((h - 8.5) / 1.5) ** 2) + 0.2 * math.exp(-((h - 18.5) / 1.5) ** 2)
        profile.append(round(v, 4))
    days = 11
    factors = [round(float(f), 3) for f in rng.uniform(0.7, 1.3, size=days)]

    doc = {
        "network": "network.json",
        "seed": 7,
        "days": days,
        "start_date": "2016-01-25",
        "window_min": 20,
        "categories": cats,
        "route_choice": {"beta": 2, "sigma": 2},
        "links": links,
        "route_weights": weights,
        "demand": {"default_rate": 5.0, "profile": profile, "day_factors": factors},
    }
    (FIX / "scenario.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
