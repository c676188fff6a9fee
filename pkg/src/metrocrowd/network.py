"""Metro graph, transit links and route choice set enumeration."""

from __future__ import annotations

import json
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator


class NetworkError(ValueError):
    pass


class NoRouteError(NetworkError):
    pass


class LinkKind(str, Enum):
    ENTRY = "entry"
    TRAVEL = "travel"
    TRANSFER = "transfer"
    EXIT = "exit"


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    lines: frozenset[str]

    @property
    def is_interchange(self) -> bool:
        return len(self.lines) >= 2


@dataclass(frozen=True)
class Line:
    id: str
    headway: float  # minutes
    max_speed: float  # km/min
    min_speed: float  # km/min


@dataclass(frozen=True)
class Edge:
    id: str
    a: str
    b: str
    line: str
    length: float  # km

    def other(self, station: str) -> str:
        if station == self.a:
            return self.b
        if station == self.b:
            return self.a
        raise KeyError(f"{station} is not an endpoint of edge {self.id}")


@dataclass(frozen=True, order=True)
class TransitLink:
    kind: LinkKind
    anchor: str  # station id, or edge id for travel links

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.anchor}"

    @classmethod
    def parse(cls, text: str) -> "TransitLink":
        kind, _, anchor = text.partition(":")
        return cls(LinkKind(kind), anchor)


@dataclass(frozen=True)
class Route:
    origin: str
    dest: str
    edges: tuple[str, ...]
    stations: tuple[str, ...]  # origin, ..., dest in travel order
    links: tuple[TransitLink, ...]

    @property
    def od(self) -> tuple[str, str]:
        return (self.origin, self.dest)

    @property
    def transfer_stations(self) -> tuple[str, ...]:
        return tuple(l.anchor for l in self.links if l.kind is LinkKind.TRANSFER)

    @property
    def n_transfers(self) -> int:
        return len(self.transfer_stations)

    def n_links(self, travel_only: bool = False) -> int:
        return len(self.edges) if travel_only else len(self.links)


@dataclass(frozen=True)
class RouteChoiceSet:
    od: tuple[str, str]
    routes: tuple[Route, ...]

    def __len__(self) -> int:
        return len(self.routes)


@dataclass
class MetroNetwork:
    stations: dict[str, Station]
    lines: dict[str, Line]
    edges: dict[str, Edge]
    _adj: dict[str, list[Edge]] = field(default_factory=dict, repr=False)
    _memo: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        adj: dict[str, list[Edge]] = defaultdict(list)
        for e in sorted(self.edges.values(), key=lambda e: e.id):
            adj[e.a].append(e)
            adj[e.b].append(e)
        self._adj = {s: adj.get(s, []) for s in self.stations}

    @property
    def station_ids(self) -> list[str]:
        return sorted(self.stations)

    def incident(self, station: str) -> list[Edge]:
        return self._adj[station]

    def interchanges(self) -> list[str]:
        return [s for s in self.station_ids if self.stations[s].is_interchange]

    def od_pairs(self) -> list[tuple[str, str]]:
        ids = self.station_ids
        return [(i, j) for i in ids for j in ids if i != j]

    def route_set(self, origin: str, dest: str, beta: float = 2.0, sigma: int = 2,
                  travel_links_only: bool = False) -> RouteChoiceSet:
        """Memoized :func:`enumerate_routes`."""
        key = (origin, dest, beta, sigma, travel_links_only)
        with self._lock:
            hit = self._memo.get(key)
        if hit is None:
            hit = enumerate_routes(self, origin, dest, beta, sigma, travel_links_only)
            with self._lock:
                self._memo[key] = hit
        return hit

    def all_route_sets(self, beta: float = 2.0, sigma: int = 2,
                       travel_links_only: bool = False) -> dict[tuple[str, str], RouteChoiceSet]:
        return {od: self.route_set(*od, beta=beta, sigma=sigma, travel_links_only=travel_links_only)
                for od in self.od_pairs()}

    def line_edge_order(self, line_id: str) -> tuple[list[str], list[str]]:
        """Edges of one line in running order plus the station sequence.

        Open lines start at the lexicographically smaller terminus; loop lines
        start at their smallest station id.
        """
        line_edges = [e for e in self.edges.values() if e.line == line_id]
        if not line_edges:
            raise NetworkError(f"line {line_id} has no edges")
        deg: dict[str, int] = defaultdict(int)
        for e in line_edges:
            deg[e.a] += 1
            deg[e.b] += 1
        termini = sorted(s for s, d in deg.items() if d == 1)
        start = termini[0] if termini else min(deg)
        order, stations, used = [], [start], set()
        cur = start
        while True:
            nxt = sorted((e for e in line_edges if cur in (e.a, e.b) and e.id not in used),
                         key=lambda e: e.id)
            if not nxt:
                break
            e = nxt[0]
            used.add(e.id)
            order.append(e.id)
            cur = e.other(cur)
            stations.append(cur)
        if len(order) != len(line_edges):
            raise NetworkError(f"line {line_id} is not a simple path or loop")
        return order, stations


def _require(rec: dict, key: str, kind: str):
    if key not in rec or rec[key] in (None, ""):
        raise NetworkError(f"{kind} record {rec!r} is missing '{key}'")
    return rec[key]


def _positive(rec: dict, key: str, kind: str) -> float:
    val = float(_require(rec, key, kind))
    if not val > 0:
        raise NetworkError(f"{kind} record {rec!r}: '{key}' must be positive")
    return val


def network_from_dict(doc: dict) -> MetroNetwork:
    lines: dict[str, Line] = {}
    for rec in doc.get("lines", []):
        lid = str(_require(rec, "id", "line"))
        if lid in lines:
            raise NetworkError(f"duplicate line id {lid!r}")
        vmax = _positive(rec, "vmax_kmpm", "line")
        vmin = _positive(rec, "vmin_kmpm", "line") if "vmin_kmpm" in rec else vmax / 2
        if vmin > vmax:
            raise NetworkError(f"line record {rec!r}: vmin_kmpm exceeds vmax_kmpm")
        lines[lid] = Line(lid, _positive(rec, "headway_min", "line"), vmax, vmin)

    names: dict[str, str] = {}
    for rec in doc.get("stations", []):
        sid = str(_require(rec, "id", "station"))
        if sid in names:
            raise NetworkError(f"duplicate station id {sid!r}")
        names[sid] = str(rec.get("name", sid))

    edges: dict[str, Edge] = {}
    seen_pairs: set[tuple[frozenset, str]] = set()
    station_lines: dict[str, set[str]] = defaultdict(set)
    for rec in doc.get("edges", []):
        eid = str(_require(rec, "id", "edge"))
        if eid in edges:
            raise NetworkError(f"duplicate edge id {eid!r}")
        a, b = str(_require(rec, "a", "edge")), str(_require(rec, "b", "edge"))
        for s in (a, b):
            if s not in names:
                raise NetworkError(f"edge {eid!r} references unknown station {s!r}")
        if a == b:
            raise NetworkError(f"edge {eid!r} has identical endpoints {a!r}")
        line = str(_require(rec, "line", "edge"))
        if line not in lines:
            raise NetworkError(f"edge {eid!r} references unknown line {line!r}")
        key = (frozenset((a, b)), line)
        if key in seen_pairs:
            raise NetworkError(f"edge {eid!r} duplicates station pair {a!r}-{b!r} on line {line!r}")
        seen_pairs.add(key)
        edges[eid] = Edge(eid, a, b, line, _positive(rec, "length_km", "edge"))
        station_lines[a].add(line)
        station_lines[b].add(line)

    stations = {}
    for sid, name in names.items():
        if not station_lines[sid]:
            raise NetworkError(f"station {sid!r} is not served by any edge")
        stations[sid] = Station(sid, name, frozenset(station_lines[sid]))

    if not stations:
        raise NetworkError("network has no stations")
    net = MetroNetwork(stations, lines, edges)
    # connectivity
    start = net.station_ids[0]
    seen, stack = {start}, [start]
    while stack:
        s = stack.pop()
        for e in net.incident(s):
            o = e.other(s)
            if o not in seen:
                seen.add(o)
                stack.append(o)
    missing = sorted(set(stations) - seen)
    if missing:
        raise NetworkError(f"network is disconnected; unreachable from {start!r}: {missing}")
    return net


def load_network(path: str | Path) -> MetroNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def network_to_dict(net: MetroNetwork) -> dict:
    return {
        "stations": [{"id": s.id, "name": s.name} for s in sorted(net.stations.values(), key=lambda s: s.id)],
        "lines": [{"id": l.id, "headway_min": l.headway, "vmax_kmpm": l.max_speed, "vmin_kmpm": l.min_speed}
                  for l in sorted(net.lines.values(), key=lambda l: l.id)],
        "edges": [{"id": e.id, "a": e.a, "b": e.b, "line": e.line, "length_km": e.length}
                  for e in sorted(net.edges.values(), key=lambda e: e.id)],
    }


def route_links(net: MetroNetwork, origin: str, edge_ids: tuple[str, ...] | list[str]) -> tuple[TransitLink, ...]:
    """Entry, one travel link per edge with transfers at line changes, exit."""
    links = [TransitLink(LinkKind.ENTRY, origin)]
    cur = origin
    prev_line = None
    for eid in edge_ids:
        e = net.edges[eid]
        if prev_line is not None and e.line != prev_line:
            links.append(TransitLink(LinkKind.TRANSFER, cur))
        links.append(TransitLink(LinkKind.TRAVEL, eid))
        prev_line = e.line
        cur = e.other(cur)
    links.append(TransitLink(LinkKind.EXIT, cur))
    return tuple(links)


def make_route(net: MetroNetwork, origin: str, edge_ids) -> Route:
    edge_ids = tuple(edge_ids)
    stations = [origin]
    for eid in edge_ids:
        stations.append(net.edges[eid].other(stations[-1]))
    return Route(origin, stations[-1], edge_ids, tuple(stations), route_links(net, origin, edge_ids))


def _bfs_path(net: MetroNetwork, origin: str, dest: str) -> list[str] | None:
    prev: dict[str, tuple[str, str]] = {}
    frontier, seen = [origin], {origin}
    while frontier:
        nxt = []
        for s in frontier:
            for e in net.incident(s):
                o = e.other(s)
                if o not in seen:
                    seen.add(o)
                    prev[o] = (s, e.id)
                    nxt.append(o)
        frontier = nxt
    if dest not in seen:
        return None
    path, cur = [], dest
    while cur != origin:
        cur, eid = prev[cur]
        path.append(eid)
    return path[::-1]


def _simple_paths(net: MetroNetwork, origin: str, dest: str, max_edges: int) -> Iterator[list[str]]:
    path: list[str] = []
    visited = {origin}

    def dfs(s: str):
        if s == dest:
            yield list(path)
            return
        if len(path) >= max_edges:
            return
        for e in net.incident(s):
            o = e.other(s)
            if o in visited:
                continue
            visited.add(o)
            path.append(e.id)
            yield from dfs(o)
            path.pop()
            visited.discard(o)

    yield from dfs(origin)


def enumerate_routes(net: MetroNetwork, origin: str, dest: str, beta: float = 2.0, sigma: int = 2,
                     travel_links_only: bool = False) -> RouteChoiceSet:
    """Depth-first search over simple routes followed by the length and transfer filters.

    A route is dropped if it is not a minimum-link route and has more than
    ``sigma`` transfers, or if its link count exceeds ``beta`` times the minimum.
    """
    if origin == dest:
        raise NetworkError("origin and destination must differ")
    for s in (origin, dest):
        if s not in net.stations:
            raise NetworkError(f"unknown station {s!r}")
    if not beta > 1:
        raise NetworkError("beta must exceed 1")
    seed = _bfs_path(net, origin, dest)
    if seed is None:
        raise NoRouteError(f"no route from {origin!r} to {dest!r}")
    count = lambda r: r.n_links(travel_only=travel_links_only)
    # Any simple route bounds the minimum link count from above, so paths
    # longer than beta times its count can never survive the length filter.
    bound = beta * count(make_route(net, origin, seed))
    max_edges = int(bound) if travel_links_only else int(bound) - 2
    routes = [make_route(net, origin, p) for p in _simple_paths(net, origin, dest, max_edges)]
    shortest = min(count(r) for r in routes)
    kept = [r for r in routes
            if count(r) <= beta * shortest and (count(r) == shortest or r.n_transfers <= sigma)]
    kept.sort(key=lambda r: (count(r), r.edges))
    return RouteChoiceSet((origin, dest), tuple(kept))
