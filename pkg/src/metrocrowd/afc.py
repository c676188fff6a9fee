"""Smart-card trip log ingestion: parsing, cleaning and windowed flow counts."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .network import MetroNetwork

COLUMNS = ("card_id", "category", "entry_datetime", "exit_datetime", "origin_id", "dest_id")
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_CATEGORIES = ("adult", "child", "senior", "student")
DEFAULT_WINDOW = 20.0
MIN_IQR_GROUP = 4


class IngestError(ValueError):
    """Fatal input problem (bad header, empty file)."""


@dataclass(frozen=True, order=True)
class TripRecord:
    card_id: str
    category: str
    origin: str
    dest: str
    t_in: datetime
    t_out: datetime

    @property
    def travel_time(self) -> float:
        return (self.t_out - self.t_in).total_seconds() / 60.0

    def row(self) -> tuple[str, ...]:
        return (self.card_id, self.category, self.t_in.strftime(TIME_FORMAT),
                self.t_out.strftime(TIME_FORMAT), self.origin, self.dest)


@dataclass
class RejectReport:
    parsed: int = 0
    reasons: Counter = field(default_factory=Counter)
    examples: dict[str, list[int]] = field(default_factory=lambda: defaultdict(list))
    near_duplicates: int = 0

    def reject(self, reason: str, line_no: int) -> None:
        self.reasons[reason] += 1
        if len(self.examples[reason]) < 10:
            self.examples[reason].append(line_no)

    def as_dict(self) -> dict:
        return {"parsed": self.parsed, "rejected": dict(sorted(self.reasons.items())),
                "near_duplicates_flagged": self.near_duplicates,
                "example_lines": {k: v for k, v in sorted(self.examples.items())}}


def _parse_time(text: str) -> datetime:
    # fromisoformat is much faster than strptime; the shape check keeps it strict.
    if len(text) != 19 or text[10] != " " or text[4] != "-" or text[13] != ":":
        raise ValueError(text)
    return datetime.fromisoformat(text)


def parse_trips(source: TextIO | str | Path, net: MetroNetwork,
                categories: Iterable[str] = DEFAULT_CATEGORIES) -> tuple[list[TripRecord], RejectReport]:
    """Read a trip CSV; bad rows are rejected and tallied, only a bad header is fatal."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return parse_trips(fh, net, categories)
    cats = set(categories)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise IngestError("empty trip file (no header)")
    if tuple(h.strip() for h in header) != COLUMNS:
        raise IngestError(f"malformed header {header!r}; expected {','.join(COLUMNS)}")
    report = RejectReport()
    seen: set[tuple[str, ...]] = set()
    trips: list[TripRecord] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        report.parsed += 1
        if len(row) != len(COLUMNS) or any(not v.strip() for v in row):
            report.reject("missing", line_no)
            continue
        row = tuple(v.strip() for v in row)
        if row in seen:
            report.reject("duplicate", line_no)
            continue
        seen.add(row)
        card, cat, tin, tout, o, d = row
        try:
            t_in, t_out = _parse_time(tin), _parse_time(tout)
        except ValueError:
            report.reject("bad_timestamp", line_no)
            continue
        if o not in net.stations or d not in net.stations:
            report.reject("unknown_station", line_no)
            continue
        if cat not in cats:
            report.reject("unknown_category", line_no)
            continue
        if o == d:
            report.reject("same_station", line_no)
            continue
        if t_out <= t_in:
            report.reject("non_positive_duration", line_no)
            continue
        trips.append(TripRecord(card, cat, o, d, t_in, t_out))
    report.near_duplicates = count_near_duplicates(trips)
    return trips, report


def count_near_duplicates(trips: list[TripRecord]) -> int:
    """Trips of one card whose [t_in, t_out] overlaps the card's previous trip."""
    by_card: dict[str, list[TripRecord]] = defaultdict(list)
    for t in trips:
        by_card[t.card_id].append(t)
    n = 0
    for recs in by_card.values():
        if len(recs) < 2:
            continue
        recs.sort(key=lambda t: t.t_in)
        for prev, cur in zip(recs, recs[1:]):
            if cur.t_in < prev.t_out:
                n += 1
    return n


def write_trips(trips: Iterable[TripRecord], dest: TextIO | str | Path) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_trips(trips, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(COLUMNS)
    for t in trips:
        w.writerow(t.row())


def trips_to_csv(trips: Iterable[TripRecord]) -> str:
    buf = io.StringIO()
    write_trips(trips, buf)
    return buf.getvalue()


def iqr_threshold(times: np.ndarray) -> float:
    """Upper fence Q3 + 1.5 IQR with linearly interpolated quartiles."""
    q1, q3 = np.percentile(times, [25, 75], method="linear")
    return float(q3 + 1.5 * (q3 - q1))


def remove_outliers(trips: list[TripRecord]) -> tuple[list[TripRecord], list[TripRecord]]:
    """Drop extremely long trips per OD pair; groups under four records pass through."""
    groups: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, t in enumerate(trips):
        groups[(t.origin, t.dest)].append(i)
    drop = np.zeros(len(trips), dtype=bool)
    for idx in groups.values():
        if len(idx) < MIN_IQR_GROUP:
            continue
        times = np.array([trips[i].travel_time for i in idx])
        fence = iqr_threshold(times)
        for i, tt in zip(idx, times):
            if tt > fence:
                drop[i] = True
    kept = [t for t, d in zip(trips, drop) if not d]
    removed = [t for t, d in zip(trips, drop) if d]
    return kept, removed


def window_index(ts: datetime, width: float = DEFAULT_WINDOW) -> int:
    """Window of a timestamp, windows anchored at midnight."""
    minutes = ts.hour * 60 + ts.minute + ts.second / 60.0
    return int(minutes // width)


def minutes_of_day(ts: datetime) -> float:
    return ts.hour * 60 + ts.minute + ts.second / 60.0 + ts.microsecond / 6e7


@dataclass
class FlowSeries:
    """Windowed counts per day.

    ``inflow``/``outflow`` have shape (days, windows, stations); ``od`` has
    shape (days, windows, od pairs, categories) keyed by the tap-in window.
    """

    days: list[date]
    width: float
    stations: list[str]
    od_pairs: list[tuple[str, str]]
    categories: list[str]
    inflow: np.ndarray
    outflow: np.ndarray
    od: np.ndarray

    @property
    def n_windows(self) -> int:
        return self.inflow.shape[1]

    def od_total(self) -> np.ndarray:
        """OD counts summed over categories, shape (days, windows, od)."""
        return self.od.sum(axis=-1)

    def od_index(self) -> dict[tuple[str, str], int]:
        return {od: k for k, od in enumerate(self.od_pairs)}

    def category_shares(self) -> np.ndarray:
        """Per-OD category split over all days and windows, shape (od, categories).

        OD pairs never observed fall back to the overall category mix.
        """
        tot = self.od.sum(axis=(0, 1)).astype(float)
        overall = tot.sum(axis=0)
        overall = overall / overall.sum() if overall.sum() > 0 else np.full(len(self.categories), 1 / len(self.categories))
        rows = tot.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            shares = np.where(rows > 0, tot / np.where(rows > 0, rows, 1), overall)
        return shares

    def select_days(self, idx: list[int]) -> "FlowSeries":
        return FlowSeries([self.days[i] for i in idx], self.width, self.stations, self.od_pairs, self.categories,
                          self.inflow[idx], self.outflow[idx], self.od[idx])

    def write(self, directory: str | Path) -> None:
        """Columnar CSV dump: station flows and non-zero OD cells."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "station_flows.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", "window", "station", "inflow", "outflow"])
            for k, d in enumerate(self.days):
                for t in range(self.n_windows):
                    for s, sid in enumerate(self.stations):
                        i, o = self.inflow[k, t, s], self.outflow[k, t, s]
                        if i or o:
                            w.writerow([d.isoformat(), t, sid, int(i), int(o)])
        with open(directory / "od_flows.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", "window", "origin", "dest", "category", "count"])
            for k, t, p, c in zip(*np.nonzero(self.od)):
                o, d = self.od_pairs[p]
                w.writerow([self.days[k].isoformat(), t, o, d, self.categories[c], int(self.od[k, t, p, c])])


def aggregate_flows(trips: list[TripRecord], net: MetroNetwork, width: float = DEFAULT_WINDOW,
                    categories: Iterable[str] = DEFAULT_CATEGORIES,
                    days: list[date] | None = None) -> FlowSeries:
    """Count inflow by tap-in window, outflow by tap-out window, OD by tap-in window.

    Days default to the tap-in dates; tap-outs on a date outside ``days`` are dropped.
    """
    n_windows = 1440.0 / width
    if abs(n_windows - round(n_windows)) > 1e-9:
        raise ValueError("window width must divide the 24 h day")
    n_windows = int(round(n_windows))
    cats = list(categories)
    stations = net.station_ids
    ods = net.od_pairs()
    if days is None:
        days = sorted({t.t_in.date() for t in trips})
    day_idx = {d: k for k, d in enumerate(days)}
    s_idx = {s: k for k, s in enumerate(stations)}
    od_idx = {od: k for k, od in enumerate(ods)}
    c_idx = {c: k for k, c in enumerate(cats)}
    inflow = np.zeros((len(days), n_windows, len(stations)), dtype=np.int64)
    outflow = np.zeros_like(inflow)
    od = np.zeros((len(days), n_windows, len(ods), len(cats)), dtype=np.int64)
    for t in trips:
        k_in = day_idx.get(t.t_in.date())
        w_in = window_index(t.t_in, width)
        if k_in is not None:
            inflow[k_in, w_in, s_idx[t.origin]] += 1
            od[k_in, w_in, od_idx[(t.origin, t.dest)], c_idx[t.category]] += 1
        k_out = day_idx.get(t.t_out.date())
        if k_out is not None:
            outflow[k_out, window_index(t.t_out, width), s_idx[t.dest]] += 1
    return FlowSeries(days, width, stations, ods, cats, inflow, outflow, od)


def write_manifest(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def day_start(d: date) -> datetime:
    return datetime(d.year, d.month, d.day)


def at_minutes(d: date, minutes: float) -> datetime:
    return day_start(d) + timedelta(minutes=minutes)
