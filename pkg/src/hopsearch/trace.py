"""Contact traces: CSV adapters, GPS-to-contact conversion and synthetic generators."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8

INTERVAL_HEADER = ["start_s", "end_s", "node_a", "node_b"]
EVENT_HEADER = ["t_s", "node_a", "node_b", "state"]
GPS_HEADER = ["node", "t_s", "lat", "lon"]
IDMAP_HEADER = ["original_id", "dense_id"]


class TraceParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


class WindowTooLong(ValueError):
    pass


@dataclass(frozen=True, order=True)
class ContactEvent:
    start: float
    end: float
    a: int
    b: int

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError("self-contact")
        if self.start > self.end:
            raise ValueError("contact ends before it starts")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    def active_at(self, t: float) -> bool:
        """Half-open [start, end) membership; an instantaneous contact is active at its instant."""
        return self.start <= t and (t < self.end or t == self.start)


def _event_key(e: ContactEvent):
    return (e.start, e.a, e.b)


@dataclass(frozen=True)
class ContactTrace:
    events: tuple
    n_nodes: int
    horizon: tuple = None
    id_map: tuple = field(default=None, compare=False)  # original id per dense id

    def __post_init__(self):
        evs = tuple(sorted(self.events, key=_event_key))
        object.__setattr__(self, "events", evs)
        for e in evs:
            if e.b >= self.n_nodes:
                raise ValueError(f"node id {e.b} outside 0..{self.n_nodes - 1}")
        if self.horizon is None:
            if evs:
                hz = (evs[0].start, max(e.end for e in evs))
            else:
                hz = (0.0, 0.0)
            object.__setattr__(self, "horizon", hz)
        else:
            object.__setattr__(self, "horizon", (float(self.horizon[0]), float(self.horizon[1])))

    def __len__(self):
        return len(self.events)

    @property
    def duration(self) -> float:
        return self.horizon[1] - self.horizon[0]

    @cached_property
    def starts(self) -> np.ndarray:
        return np.array([e.start for e in self.events], dtype=float)

    @cached_property
    def max_contact_length(self) -> float:
        return max((e.end - e.start for e in self.events), default=0.0)

    def window(self, t0: float, t1: float) -> list:
        """Contacts active at some instant of [t0, t1], in canonical order."""
        lo = int(np.searchsorted(self.starts, t0 - self.max_contact_length, side="left"))
        hi = int(np.searchsorted(self.starts, t1, side="right"))
        return [e for e in self.events[lo:hi] if e.start >= t0 or e.active_at(t0)]

    def pair_counts(self) -> dict:
        out: dict = {}
        for e in self.events:
            out[(e.a, e.b)] = out.get((e.a, e.b), 0) + 1
        return out


# --- CSV adapters --------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _dense_ids(raw_ids: Iterable[str]) -> list:
    ids = sorted(set(raw_ids))
    try:
        return sorted(ids, key=int)
    except ValueError:
        return ids


def read_id_map(path) -> list:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != IDMAP_HEADER:
        raise TraceParseError(path, 1, f"expected header {','.join(IDMAP_HEADER)}")
    pairs = sorted(((int(r[1]), r[0]) for r in rows[1:] if r), key=lambda p: p[0])
    if [d for d, _ in pairs] != list(range(len(pairs))):
        raise TraceParseError(path, 2, "dense ids must be 0..N-1")
    return [o for _, o in pairs]


def write_id_map(id_map: Sequence, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(IDMAP_HEADER)
        for dense, orig in enumerate(id_map):
            w.writerow([orig, dense])


def id_map_path(trace_path) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + ".ids.csv")


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        first = next(reader, None)
        if first is None:
            return
        if [c.strip() for c in first[: len(header)]] != header:
            raise TraceParseError(path, 1, f"expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, [c.strip() for c in row]


def parse_contact_trace(path, format: str = "interval", id_map=None) -> ContactTrace:
    """Read an interval-CSV or event-CSV contact trace.

    Node ids are re-indexed densely (numeric order when all ids are integers).
    With an id-map sidecar (``id_map``, or ``<stem>.ids.csv`` next to the
    trace) the node columns are taken as dense ids and the sidecar supplies
    the original ids, including those of isolated nodes.
    """
    path = Path(path)
    raw = []
    if format == "interval":
        for lineno, row in _read_rows(path, INTERVAL_HEADER):
            try:
                s, e, a, b = float(row[0]), float(row[1]), row[2], row[3]
            except (IndexError, ValueError) as exc:
                raise TraceParseError(path, lineno, f"bad row {row!r}") from exc
            if a == b or s > e:
                raise TraceParseError(path, lineno, "self-contact or negative duration")
            raw.append((s, e, a, b, lineno))
    elif format == "event":
        open_: dict = {}
        for lineno, row in _read_rows(path, EVENT_HEADER):
            try:
                t, a, b, state = float(row[0]), row[1], row[2], row[3].upper()
            except (IndexError, ValueError) as exc:
                raise TraceParseError(path, lineno, f"bad row {row!r}") from exc
            if a == b:
                raise TraceParseError(path, lineno, "self-contact")
            key = tuple(sorted((a, b)))
            if state == "UP":
                if key in open_:
                    raise TraceParseError(path, lineno, f"UP for already-open pair {key}")
                open_[key] = (t, lineno)
            elif state == "DOWN":
                if key not in open_:
                    raise TraceParseError(path, lineno, f"DOWN without matching UP for {key}")
                t0, l0 = open_.pop(key)
                if t < t0:
                    raise TraceParseError(path, lineno, "DOWN precedes UP")
                raw.append((t0, t, key[0], key[1], l0))
            else:
                raise TraceParseError(path, lineno, f"unknown state {row[3]!r}")
        if open_:
            key, (_, l0) = min(open_.items(), key=lambda kv: kv[1][1])
            raise TraceParseError(path, l0, f"UP without matching DOWN for {key}")
        raw.sort(key=lambda r: r[4])
    else:
        raise ValueError(f"unknown trace format {format!r}")

    sidecar = Path(id_map) if id_map is not None else id_map_path(path)
    if sidecar.exists():
        # canonical file: node columns already hold dense ids
        ids = read_id_map(sidecar)
        dense = {str(d): d for d in range(len(ids))}
    else:
        ids = _dense_ids([r[2] for r in raw] + [r[3] for r in raw])
        dense = {o: d for d, o in enumerate(ids)}
    events = []
    for s, e, a, b, lineno in raw:
        if a not in dense or b not in dense:
            raise TraceParseError(path, lineno, f"node {a if a not in dense else b!r} missing from id map")
        events.append(ContactEvent(s, e, dense[a], dense[b]))
    return ContactTrace(tuple(events), len(ids), id_map=tuple(ids))


def write_contact_trace(trace: ContactTrace, path, with_id_map: bool = True) -> None:
    """Write the canonical interval-CSV (dense ids) plus the id-map sidecar."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(INTERVAL_HEADER)
        for e in trace.events:
            w.writerow([_fmt(e.start), _fmt(e.end), e.a, e.b])
    if with_id_map:
        ids = trace.id_map if trace.id_map is not None else tuple(str(i) for i in range(trace.n_nodes))
        write_id_map(ids, id_map_path(path))


# --- GPS --------------------------------------------------------------------


@dataclass(frozen=True)
class GpsRecord:
    node: object
    t: float
    lat: float
    lon: float


def read_gps_csv(path, bbox=None) -> list:
    """Read ``node,t_s,lat,lon[,...]`` rows; extra columns are ignored.

    ``bbox`` = (lat_min, lat_max, lon_min, lon_max) keeps only records inside.
    """
    out = []
    for lineno, row in _read_rows(path, GPS_HEADER):
        try:
            rec = GpsRecord(row[0], float(row[1]), float(row[2]), float(row[3]))
        except (IndexError, ValueError) as exc:
            raise TraceParseError(path, lineno, f"bad row {row!r}") from exc
        if bbox is not None:
            la0, la1, lo0, lo1 = bbox
            if not (la0 <= rec.lat <= la1 and lo0 <= rec.lon <= lo1):
                continue
        out.append(rec)
    return out


class InsufficientRecords(UserWarning):
    pass


def contacts_from_positions(times: np.ndarray, pos: np.ndarray, present: np.ndarray, range_m: float):
    """Threshold pairwise distances on a time grid into contact intervals.

    ``pos`` has shape (T, N, 2) in metres, ``present`` (T, N) booleans.  A
    contact is a maximal run of grid instants within range, reported half-open
    as [first in range, first out of range); a run still open at the last
    instant ends there.
    """
    open_: dict = {}
    events = []
    idx_all = np.arange(pos.shape[1])
    for k, t in enumerate(times):
        live = idx_all[present[k]]
        now = set()
        if len(live) >= 2:
            pairs = cKDTree(pos[k, live]).query_pairs(range_m, output_type="ndarray")
            for i, j in pairs:
                a, b = live[i], live[j]
                now.add((a, b) if a < b else (b, a))
        for pair in list(open_):
            if pair not in now:
                events.append(ContactEvent(open_.pop(pair), float(t), int(pair[0]), int(pair[1])))
        for pair in now:
            if pair not in open_:
                open_[pair] = float(t)
    t_last = float(times[-1]) if len(times) else 0.0
    for pair, t0 in open_.items():
        events.append(ContactEvent(t0, t_last, int(pair[0]), int(pair[1])))
    return events


def equirectangular(lat, lon, lat0):
    """Project degrees to local metres around reference latitude ``lat0``."""
    lat = np.radians(lat)
    lon = np.radians(lon)
    x = EARTH_RADIUS_M * lon * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * lat
    return x, y


def gps_to_contacts(records: Sequence[GpsRecord], range_m: float = 40.0, step_s: float = 10.0) -> ContactTrace:
    """Interpolate GPS tracks on a shared grid and extract range-threshold contacts.

    Nodes with fewer than two distinct timestamps are dropped (counted in a
    warning).  The grid is anchored at the earliest record so the result is
    invariant to global time shifts.
    """
    if step_s <= 0:
        raise ValueError("step_s must be positive")
    by_node: dict = {}
    for r in records:
        by_node.setdefault(r.node, {}).setdefault(r.t, r)  # first record wins on duplicate time
    ids = _dense_ids([str(n) for n in by_node]) if by_node else []
    key_of = {str(n): n for n in by_node}
    tracks = []
    dropped = 0
    kept_ids = []
    for sid in ids:
        recs = by_node[key_of[sid]]
        if len(recs) < 2:
            dropped += 1
            continue
        ts = np.array(sorted(recs))
        tracks.append((ts, np.array([recs[t].lat for t in ts]), np.array([recs[t].lon for t in ts])))
        kept_ids.append(sid)
    if dropped:
        log.warning("dropped %d node(s) with fewer than two GPS records", dropped)
    n = len(tracks)
    if n == 0:
        return ContactTrace((), 0, id_map=())
    t0 = min(tr[0][0] for tr in tracks)
    t1 = max(tr[0][-1] for tr in tracks)
    steps = int(math.floor((t1 - t0) / step_s + 1e-9))
    times = t0 + step_s * np.arange(steps + 1)
    lat0 = float(np.mean(np.concatenate([tr[1] for tr in tracks])))
    pos = np.zeros((len(times), n, 2))
    present = np.zeros((len(times), n), dtype=bool)
    for i, (ts, la, lo) in enumerate(tracks):
        x, y = equirectangular(la, lo, lat0)
        mask = (times >= ts[0]) & (times <= ts[-1])
        present[:, i] = mask
        pos[mask, i, 0] = np.interp(times[mask], ts, x)
        pos[mask, i, 1] = np.interp(times[mask], ts, y)
    events = contacts_from_positions(times, pos, present, range_m)
    return ContactTrace(tuple(events), n, horizon=(float(times[0]), float(times[-1])), id_map=tuple(kept_ids))


# --- synthetic generators -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    kind: str  # "homogeneous" | "random_waypoint"
    n_nodes: int
    duration: float
    lam: float = 0.0
    area: tuple = (4500.0, 3400.0)
    speed_range: tuple = (0.5, 1.5)
    radio_range: float = 20.0
    pause: float = 0.0
    step_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("homogeneous", "random_waypoint"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if self.kind == "homogeneous" and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        lo, hi = self.speed_range
        if not (0 < lo <= hi):
            raise ValueError("speed range must be a positive interval")


def generate_homogeneous(config: SyntheticConfig) -> ContactTrace:
    """Every unordered pair meets as an independent Poisson process (instantaneous contacts)."""
    rng = np.random.default_rng([config.seed, 0x484F4D])
    n, D = config.n_nodes, config.duration
    events = []
    if config.lam > 0 and n >= 2:
        a_idx, b_idx = np.triu_indices(n, k=1)
        counts = rng.poisson(config.lam * D, size=len(a_idx))
        total = int(counts.sum())
        times = rng.uniform(0.0, D, size=total)
        pa = np.repeat(a_idx, counts)
        pb = np.repeat(b_idx, counts)
        order = np.lexsort((pb, pa, times))
        events = [ContactEvent(float(times[k]), float(times[k]), int(pa[k]), int(pb[k])) for k in order]
    return ContactTrace(tuple(events), n, horizon=(0.0, float(D)))


def _waypoint_path(rng, config: SyntheticConfig):
    w, h = config.area
    lo, hi = config.speed_range
    t = [0.0]
    p = [rng.uniform((0, 0), (w, h))]
    while t[-1] < config.duration:
        nxt = rng.uniform((0, 0), (w, h))
        speed = rng.uniform(lo, hi)
        dist = float(np.hypot(*(nxt - p[-1])))
        t.append(t[-1] + dist / speed)
        p.append(nxt)
        if config.pause > 0:
            t.append(t[-1] + config.pause)
            p.append(nxt)
    return np.array(t), np.array(p)


def random_waypoint_positions(config: SyntheticConfig):
    """Grid times and positions (T, N, 2) of random-waypoint walkers."""
    rng = np.random.default_rng([config.seed, 0x525750])
    steps = int(math.floor(config.duration / config.step_s + 1e-9))
    times = config.step_s * np.arange(steps + 1)
    pos = np.zeros((len(times), config.n_nodes, 2))
    for i in range(config.n_nodes):
        tw, pw = _waypoint_path(rng, config)
        pos[:, i, 0] = np.interp(times, tw, pw[:, 0])
        pos[:, i, 1] = np.interp(times, tw, pw[:, 1])
    return times, pos


def generate_random_waypoint(config: SyntheticConfig) -> ContactTrace:
    if config.n_nodes < 2:
        return ContactTrace((), max(config.n_nodes, 0), horizon=(0.0, float(config.duration)))
    times, pos = random_waypoint_positions(config)
    present = np.ones(pos.shape[:2], dtype=bool)
    events = contacts_from_positions(times, pos, present, config.radio_range)
    return ContactTrace(tuple(events), config.n_nodes, horizon=(0.0, float(times[-1])))


def generate(config: SyntheticConfig) -> ContactTrace:
    if config.kind == "homogeneous":
        return generate_homogeneous(config)
    return generate_random_waypoint(config)


# --- sampling -----------------------------------------------------------------

DEFAULT_SAMPLES = 500


def sample_windows(trace: ContactTrace, t_window: float, count: int = DEFAULT_SAMPLES, seed: int = 0):
    """Uniform (source, t0) draws with the whole window inside the trace horizon."""
    t_min, t_max = trace.horizon
    if t_window > t_max - t_min:
        raise WindowTooLong(f"window {t_window} longer than horizon {t_max - t_min}")
    if count == 0:
        return []
    rng = np.random.default_rng([seed, 0x57494E])
    nodes = rng.integers(0, trace.n_nodes, size=count)
    t0 = rng.uniform(t_min, t_max - t_window, size=count)
    return [(int(n), float(t)) for n, t in zip(nodes, t0)]


def mean_intercontact_time(trace: ContactTrace) -> float:
    """Mean gap between consecutive contacts of the same pair (end to next start)."""
    last: dict = {}
    gaps = []
    for e in trace.events:
        key = (e.a, e.b)
        if key in last:
            gaps.append(e.start - last[key])
        last[key] = max(e.end, last.get(key, e.end))
    return float(np.mean(gaps)) if gaps else float("inf")
