"""Two-phase (query + response) search simulation over a contact trace.

Queries flood under a hop limit (or epidemically), tagged nodes that receive a
query before the forward deadline answer with their own response, and
responses flood back toward the seeker under the same hop rule.  Three
stop schemes decide how fast carriers learn that a search is over:

* ``ORACLE`` - global, instantaneous knowledge;
* ``EXCH``   - nodes merge everything they know at every encounter;
* ``LOCAL``  - after forwarding, peers share status only for searches both
  have taken part in.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .trace import ContactTrace

STOP_SCHEMES = ("ORACLE", "EXCH", "LOCAL")
QUERY, RESPONSE = 0, 1

LOG_HEADER = ["t_s", "event", "query_id", "node_a", "node_b", "hop_label"]
SUMMARY_HEADER = [
    "query_id", "seeker", "content", "alpha", "created", "discovered", "delivered",
    "fwd_hops", "ret_hops", "spread_count",
]


class ConfigError(ValueError):
    pass


class InfeasibleAvailability(ConfigError):
    pass


@dataclass(frozen=True)
class SimConfig:
    scheme: str = "HOP"  # "HOP" or "EPID"
    h: Optional[int] = 2
    stop: str = "ORACLE"
    t_forward: float = 600.0
    t_total: Optional[float] = None  # defaults to 2 * t_forward
    n_contents: int = 5000
    availabilities: tuple = ((0.05, 1.0), (0.15, 1.0), (0.40, 1.0))  # (alpha, weight)
    query_interval: tuple = (10.0, 20.0)
    buffer_bytes: int = 10**8
    message_bytes: int = 15_000
    drop_on_satisfied: bool = False
    response_same_contact: bool = False
    record_log: bool = True
    seed: int = 0

    def __post_init__(self):
        scheme = self.scheme.upper()
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "stop", self.stop.upper())
        if scheme not in ("HOP", "EPID"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if scheme == "HOP" and (self.h is None or self.h < 1):
            raise ConfigError("HOP needs h >= 1")
        if self.stop not in STOP_SCHEMES:
            raise ConfigError(f"unknown stop scheme {self.stop!r}")
        if self.t_total is None:
            object.__setattr__(self, "t_total", 2.0 * self.t_forward)
        if not (0 < self.t_forward <= self.t_total):
            raise ConfigError("need 0 < t_forward <= t_total")
        lo, hi = self.query_interval
        if not (0 < lo <= hi):
            raise ConfigError("query interval bounds must be positive")
        object.__setattr__(self, "availabilities", tuple((float(a), float(w)) for a, w in self.availabilities))

    @property
    def hop_limit(self) -> float:
        return math.inf if self.scheme == "EPID" else self.h

    @property
    def label(self) -> str:
        return "EPID" if self.scheme == "EPID" else f"HOP{self.h}"

    @property
    def buffer_slots(self) -> int:
        return max(1, self.buffer_bytes // self.message_bytes)


def parse_scheme(text: str):
    """``"EPID"`` -> ("EPID", None); ``"HOP:3"`` or ``"HOP3"`` -> ("HOP", 3)."""
    t = text.strip().upper()
    if t == "EPID":
        return "EPID", None
    if t.startswith("HOP"):
        rest = t[3:].lstrip(":(").rstrip(")")
        try:
            return "HOP", int(rest)
        except ValueError:
            pass
    raise ConfigError(f"cannot parse scheme {text!r}")


# --- content and workload ---------------------------------------------------------


@dataclass(frozen=True)
class Ownership:
    tagged: tuple  # frozenset of tagged nodes per content id
    alpha: tuple  # availability of each content id

    def __len__(self):
        return len(self.tagged)


def _split_counts(total: int, weights: Sequence[float]) -> list:
    w = np.asarray(weights, dtype=float)
    raw = total * w / w.sum()
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts.tolist()


def assign_content(n_nodes: int, config: SimConfig, seed: int = 0) -> Ownership:
    """Give each content item a uniform random floor(alpha*N)-subset of holders.

    The catalogue is split between the availability classes in proportion to
    their weights (largest-remainder rounding), in listed order.
    """
    rng = np.random.default_rng([seed, 0x4F574E])
    alphas = [a for a, _ in config.availabilities]
    counts = _split_counts(config.n_contents, [w for _, w in config.availabilities])
    tagged, alpha_of = [], []
    for a, c in zip(alphas, counts):
        k = int(math.floor(a * n_nodes + 1e-9))
        if k < 1:
            raise InfeasibleAvailability(f"alpha={a} gives no tagged node among {n_nodes}")
        for _ in range(c):
            tagged.append(frozenset(int(x) for x in rng.choice(n_nodes, size=k, replace=False)))
            alpha_of.append(a)
    return Ownership(tuple(tagged), tuple(alpha_of))


@dataclass(frozen=True)
class QuerySpec:
    time: float
    seeker: int
    content: int


def generate_workload(duration: float, n_nodes: int, n_contents: int, interval=(10.0, 20.0),
                      seed: int = 0, ownership: Optional[Ownership] = None) -> list:
    """Queries at U[interval] gaps from a uniform seeker for a uniform content item.

    With ``ownership`` given, a seeker that already holds the item is redrawn
    among the non-holders.
    """
    lo, hi = interval
    if not (0 < lo <= hi):
        raise ConfigError("interval bounds must be positive")
    rng = np.random.default_rng([seed, 0x574B4C])
    out = []
    t = rng.uniform(lo, hi)
    while t <= duration:
        content = int(rng.integers(n_contents))
        seeker = int(rng.integers(n_nodes))
        if ownership is not None and seeker in ownership.tagged[content]:
            others = [n for n in range(n_nodes) if n not in ownership.tagged[content]]
            if not others:
                raise InfeasibleAvailability("every node holds the content")
            seeker = others[int(rng.integers(len(others)))]
        out.append(QuerySpec(float(t), seeker, content))
        t += rng.uniform(lo, hi)
    return out


# --- records ------------------------------------------------------------------------


@dataclass
class QueryRecord:
    id: int
    seeker: int
    content: int
    alpha: float
    created_at: float
    labels: dict = field(default_factory=dict)  # best hop label ever held, per carrier
    discovered_at: Optional[float] = None
    forward_hops: Optional[int] = None
    delivered_at: Optional[float] = None
    response_id: Optional[int] = None  # response that completed the search
    providers: list = field(default_factory=list)

    @property
    def spread_count(self) -> int:
        return len(self.labels)

    @property
    def discovered(self) -> bool:
        return self.discovered_at is not None

    @property
    def delivered(self) -> bool:
        return self.delivered_at is not None


@dataclass
class ResponseRecord:
    id: int
    query: int
    provider: int
    created_at: float
    fwd_hops: int  # query hops that reached this provider
    origin_contact: Optional[int] = None  # contact that carried the query in
    labels: dict = field(default_factory=dict)
    delivered_at: Optional[float] = None
    return_hops: Optional[int] = None


@dataclass
class SimResult:
    config: SimConfig
    n_nodes: int
    queries: list
    responses: list
    log: list
    evictions: int = 0

    def completed(self):
        """(query, delivered response) pairs of successful searches."""
        return [(q, self.responses[q.response_id]) for q in self.queries if q.delivered]

    def write_log(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(LOG_HEADER)
            for t, ev, qid, a, b, lab in self.log:
                w.writerow([repr(float(t)), ev, qid, a, b, lab])

    def write_summary(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            for q in self.queries:
                if q.delivered:
                    r = self.responses[q.response_id]
                    fwd, ret = r.fwd_hops, r.return_hops
                else:
                    fwd, ret = q.forward_hops, None
                w.writerow([
                    q.id, q.seeker, q.content, repr(q.alpha), repr(q.created_at),
                    "" if q.discovered_at is None else repr(q.discovered_at),
                    "" if q.delivered_at is None else repr(q.delivered_at),
                    "" if fwd is None else fwd, "" if ret is None else ret, q.spread_count,
                ])


# --- engine ---------------------------------------------------------------------------


class _Engine:
    def __init__(self, trace: ContactTrace, config: SimConfig, workload, ownership: Ownership):
        self.trace, self.cfg, self.own = trace, config, ownership
        n = trace.n_nodes
        self.n = n
        self.hmax = config.hop_limit
        self.buf = [dict() for _ in range(n)]  # (kind, id) -> label, insertion ordered
        self.version = [0] * n
        self.involved = [set() for _ in range(n)]
        self.known_done = [set() for _ in range(n)]
        self.known_sat = [set() for _ in range(n)]
        self.global_done: set = set()
        self.global_sat: set = set()
        self.knowers: dict = {}
        self.carriers: dict = {}  # (kind, id) -> set of nodes carrying it now
        self.queries: list = []
        self.responses: list = []
        self.resp_of: dict = {}
        self.log: list = []
        self.evictions = 0
        self.expiry: list = []
        self.workload = sorted(workload, key=lambda q: q.time)
        self.slots = config.buffer_slots
        self.oracle = config.stop == "ORACLE"

    # -- helpers
    def _emit(self, *row):
        if self.cfg.record_log:
            self.log.append(row)

    def _store(self, node, key, label, t):
        b = self.buf[node]
        if len(b) >= self.slots:
            old = next(iter(b))
            del b[old]
            self.carriers[old].discard(node)
            self.evictions += 1
        b[key] = label
        self.carriers.setdefault(key, set()).add(node)

    def _drop(self, node, key, t):
        lab = self.buf[node].pop(key, None)
        if lab is not None:
            self.carriers[key].discard(node)
            self._emit(t, "DROP_OBSOLETE", key[1] if key[0] == QUERY else self.responses[key[1]].query, node, "", lab)

    def _keys_of_search(self, qid):
        yield (QUERY, qid)
        for rid in self.resp_of.get(qid, ()):
            yield (RESPONSE, rid)

    def _purge_search(self, qid, t, include_responses=True, log=True):
        for key in list(self._keys_of_search(qid)):
            if key[0] == RESPONSE and not include_responses:
                continue
            for node in sorted(self.carriers.get(key, ())):
                if log:
                    self._drop(node, key, t)
                else:
                    self.buf[node].pop(key, None)
            self.carriers.pop(key, None)

    def _learn(self, node, qid, t, done: bool) -> bool:
        """Node learns that search ``qid`` is completed (done) or satisfied; drops copies."""
        store = self.known_done[node] if done else self.known_sat[node]
        if qid in store:
            return False
        store.add(qid)
        self.knowers.setdefault(qid, set()).add(node)
        self.version[node] += 1
        if done:
            for key in list(self._keys_of_search(qid)):
                if key in self.buf[node]:
                    self._drop(node, key, t)
        elif self.cfg.drop_on_satisfied and (QUERY, qid) in self.buf[node]:
            self._drop(node, (QUERY, qid), t)
        return True

    def _knows_obsolete(self, node, qid, kind) -> bool:
        if self.oracle:
            if qid in self.global_done:
                return True
            return kind == QUERY and self.cfg.drop_on_satisfied and qid in self.global_sat
        if qid in self.known_done[node]:
            return True
        return kind == QUERY and self.cfg.drop_on_satisfied and qid in self.known_sat[node]

    # -- lifecycle
    def _create(self, spec: QuerySpec, qid: int):
        t = spec.time
        q = QueryRecord(qid, spec.seeker, spec.content, self.own.alpha[spec.content], t)
        self.queries.append(q)
        self._emit(t, "CREATE", qid, spec.seeker, "", 0)
        q.labels[spec.seeker] = 0
        self.involved[spec.seeker].add(qid)
        self._store(spec.seeker, (QUERY, qid), 0, t)
        self.version[spec.seeker] += 1
        heapq.heappush(self.expiry, (t + self.cfg.t_forward, 0, qid))
        heapq.heappush(self.expiry, (t + self.cfg.t_total, 1, qid))
        if spec.seeker in self.own.tagged[spec.content]:
            # degenerate: the seeker already holds the item
            q.discovered_at = q.delivered_at = t
            q.forward_hops = 0
            rid = self._spawn_response(q, spec.seeker, t, 0)
            r = self.responses[rid]
            r.delivered_at, r.return_hops = t, 0
            q.response_id = rid
            self._complete(q, t)

    def _spawn_response(self, q: QueryRecord, provider: int, t: float, fwd_hops: int, contact=None) -> int:
        rid = len(self.responses)
        r = ResponseRecord(rid, q.id, provider, t, fwd_hops)
        if not self.cfg.response_same_contact:
            r.origin_contact = contact
        self.responses.append(r)
        self.resp_of.setdefault(q.id, []).append(rid)
        q.providers.append(provider)
        r.labels[provider] = 0
        self._emit(t, "RESP_CREATE", q.id, provider, "", 0)
        self._store(provider, (RESPONSE, rid), 0, t)
        return rid

    def _complete(self, q: QueryRecord, t: float):
        if self.oracle:
            self.global_done.add(q.id)
            self._purge_search(q.id, t)
        else:
            self._learn(q.seeker, q.id, t, done=True)

    def _satisfy(self, q: QueryRecord, provider: int, t: float):
        if self.oracle:
            self.global_sat.add(q.id)
            if self.cfg.drop_on_satisfied:
                self._purge_search(q.id, t, include_responses=False)
        else:
            self._learn(provider, q.id, t, done=False)

    def _expire_until(self, t: float, inclusive: bool = False):
        ex = self.expiry
        while ex and (ex[0][0] < t or inclusive and ex[0][0] <= t):
            deadline, stage, qid = heapq.heappop(ex)
            q = self.queries[qid]
            if stage == 0:
                self._purge_search(qid, deadline, include_responses=False, log=False)
            else:
                self._purge_search(qid, deadline, log=False)
                if not q.delivered:
                    self._emit(deadline, "EXPIRE", qid, q.seeker, "", "")
                for node in self.knowers.pop(qid, ()):
                    self.known_done[node].discard(qid)
                    self.known_sat[node].discard(qid)

    # -- contact processing
    def _send(self, u: int, v: int, t: float, kind: int, cid) -> bool:
        changed = False
        hmax = self.hmax
        cfg = self.cfg
        for key, lab in list(self.buf[u].items()):
            if key[0] != kind or lab >= hmax or key not in self.buf[u]:
                continue
            lab = self.buf[u][key]
            new = lab + 1
            if kind == QUERY:
                qid = key[1]
                q = self.queries[qid]
                if t > q.created_at + cfg.t_forward:
                    continue
                if v in q.labels:
                    cur = self.buf[v].get(key)
                    if cur is not None and cur > new:
                        self.buf[v][key] = new
                        q.labels[v] = min(q.labels[v], new)
                        self.version[v] += 1
                        self._emit(t, "FWD_RELABEL", qid, u, v, new)
                        changed = True
                    continue
                if self._knows_obsolete(v, qid, QUERY):
                    continue
                q.labels[v] = new
                self.involved[v].add(qid)
                self._store(v, key, new, t)
                self.version[v] += 1
                self._emit(t, "FWD_COPY", qid, u, v, new)
                changed = True
                if v in self.own.tagged[q.content]:
                    if q.discovered_at is None:
                        q.discovered_at, q.forward_hops = t, new
                    self._emit(t, "DISCOVER", qid, u, v, new)
                    self._satisfy(q, v, t)
                    self._spawn_response(q, v, t, new, cid)
            else:
                r = self.responses[key[1]]
                q = self.queries[r.query]
                if t > q.created_at + cfg.t_total:
                    continue
                if u == r.provider and r.origin_contact is not None and r.origin_contact == cid:
                    continue
                if v == q.seeker:
                    if q.delivered or self._knows_obsolete(v, q.id, RESPONSE):
                        continue
                    q.delivered_at, q.response_id = t, r.id
                    r.delivered_at, r.return_hops = t, new
                    self._emit(t, "DELIVER", q.id, u, v, new)
                    self._complete(q, t)
                    changed = True
                    continue
                if v in r.labels:
                    cur = self.buf[v].get(key)
                    if cur is not None and cur > new:
                        self.buf[v][key] = new
                        r.labels[v] = min(r.labels[v], new)
                        self.version[v] += 1
                        self._emit(t, "RESP_RELABEL", q.id, u, v, new)
                        changed = True
                    continue
                if self._knows_obsolete(v, q.id, RESPONSE):
                    continue
                r.labels[v] = new
                self.involved[v].add(q.id)
                self._store(v, key, new, t)
                self.version[v] += 1
                self._emit(t, "RESP_COPY", q.id, u, v, new)
                changed = True
        return changed

    def _share(self, u: int, v: int, t: float, only_shared: bool) -> bool:
        changed = False
        for src, dst in ((u, v), (v, u)):
            for store_name, done in (("known_done", True), ("known_sat", False)):
                s_src = getattr(self, store_name)[src]
                s_dst = getattr(self, store_name)[dst]
                for qid in sorted(s_src - s_dst):
                    if only_shared and qid not in self.involved[dst]:
                        continue
                    changed |= self._learn(dst, qid, t, done)
        return changed

    def exchange(self, u: int, v: int, t: float, cid=None) -> bool:
        """One encounter between ``u`` and ``v``; ``cid`` identifies the contact."""
        stop = self.cfg.stop
        changed = False
        if stop == "EXCH":
            changed |= self._share(u, v, t, only_shared=False)
        for kind in (QUERY, RESPONSE):
            changed |= self._send(u, v, t, kind, cid)
            changed |= self._send(v, u, t, kind, cid)
        # states that changed during this encounter are gossiped before it ends
        if stop == "EXCH":
            changed |= self._share(u, v, t, only_shared=False)
        elif stop == "LOCAL":
            changed |= self._share(u, v, t, only_shared=True)
        return changed

    def run(self) -> SimResult:
        events = self.trace.events
        work = self.workload
        ne, nw = len(events), len(work)
        i = j = 0
        active: list = []  # [event, version_a, version_b]
        while i < ne or j < nw:
            t_ev = events[i].start if i < ne else math.inf
            t_wk = work[j].time if j < nw else math.inf
            tau = min(t_ev, t_wk)
            self._expire_until(tau)
            while j < nw and work[j].time == tau:
                self._create(work[j], j)
                j += 1
            while i < ne and events[i].start == tau:
                active.append([events[i], -1, -1, i])
                i += 1
            active = [c for c in active if c[0].active_at(tau)]
            active.sort(key=lambda c: (c[0].a, c[0].b))
            dirty = True
            while dirty:
                dirty = False
                for c in active:
                    e = c[0]
                    if c[1] == self.version[e.a] and c[2] == self.version[e.b]:
                        continue
                    self.exchange(e.a, e.b, tau, c[3])
                    c[1], c[2] = self.version[e.a], self.version[e.b]
                    dirty = True
        self._expire_until(math.inf)
        return SimResult(self.cfg, self.n, self.queries, self.responses, self.log, self.evictions)


def run(trace: ContactTrace, config: SimConfig, workload, ownership: Ownership) -> SimResult:
    """Simulate every query of ``workload`` over ``trace``; deterministic for fixed inputs."""
    for spec in workload:
        if not (0 <= spec.seeker < trace.n_nodes):
            raise ConfigError(f"seeker {spec.seeker} outside trace of {trace.n_nodes} nodes")
        if not (0 <= spec.content < len(ownership)):
            raise ConfigError(f"content {spec.content} outside catalogue of {len(ownership)}")
    for tagged in ownership.tagged:
        if tagged and max(tagged) >= trace.n_nodes:
            raise ConfigError("ownership refers to nodes outside the trace")
    return _Engine(trace, config, workload, ownership).run()


def prepare(trace: ContactTrace, config: SimConfig, seed: Optional[int] = None):
    """Ownership and workload for ``trace``, leaving room for the last search to finish."""
    seed = config.seed if seed is None else seed
    own = assign_content(trace.n_nodes, config, seed)
    t0, t1 = trace.horizon
    work = generate_workload(t1 - t0 - config.t_total, trace.n_nodes, config.n_contents,
                             config.query_interval, seed, own)
    if t0:
        work = [QuerySpec(w.time + t0, w.seeker, w.content) for w in work]
    return own, work
