"""Exact CTMC of the hop-limited forward path and a Gillespie sampler for it.

A transient state is the occupancy vector ``(m_0, m_1, ..., m_h)`` of query
holders per hop label (``m_0 == 1`` is the seeker); ``m`` is its sum.  The
single absorbing state is "a tagged node has been reached".
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

DEFAULT_STATE_CAP = 2_000_000


class StateSpaceTooLarge(RuntimeError):
    """Enumeration would exceed the configured state cap; use the sampler."""


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True)
class CtmcParams:
    n_nodes: int
    n_tagged: int
    lam: float
    h: int

    def __post_init__(self):
        if not (1 <= self.n_tagged < self.n_nodes):
            raise ValueError("need 1 <= n_tagged < n_nodes")
        if self.lam <= 0:
            raise ValueError("meeting rate must be positive")
        if self.h < 1:
            raise ValueError("hop limit must be >= 1")


@dataclass(frozen=True)
class CtmcState:
    occupancy: tuple

    @property
    def m(self) -> int:
        return sum(self.occupancy)


@dataclass
class CtmcModel:
    params: CtmcParams
    states: list  # occupancy tuples, topologically ordered
    index: dict
    src: np.ndarray
    dst: np.ndarray  # len(states) denotes the absorbing state
    rate: np.ndarray
    out_rate: np.ndarray = field(repr=False)

    @property
    def absorbing(self) -> int:
        return len(self.states)

    @property
    def initial(self) -> int:
        return self.index[(1,) + (0,) * self.params.h]

    def transitions(self):
        """Iterate ``(from, to, rate)`` with ``to`` given as an occupancy tuple or ``"tagged"``."""
        for s, d, r in zip(self.src, self.dst, self.rate):
            yield self.states[s], ("tagged" if d == self.absorbing else self.states[d]), float(r)


def state_rates(occ: tuple, n_nodes: int, n_tagged: int, lam: float):
    """Outgoing transitions of one state as ``(kind, successor, rate)``.

    ``kind`` is ``"tagged"``, ``("1", i)`` or ``("0", i, j)``.
    """
    h = len(occ) - 1
    m = sum(occ)
    out = []
    r_tag = lam * (m - occ[h]) * n_tagged
    if r_tag > 0:
        out.append(("tagged", None, r_tag))
    free = n_nodes - n_tagged - m
    if free > 0:
        for i in range(h):
            if occ[i]:
                nxt = list(occ)
                nxt[i + 1] += 1
                out.append((("1", i), tuple(nxt), lam * occ[i] * free))
    for i in range(h - 1):
        if not occ[i]:
            continue
        for j in range(i + 2, h + 1):
            if occ[j]:
                nxt = list(occ)
                nxt[i + 1] += 1
                nxt[j] -= 1
                out.append((("0", i, j), tuple(nxt), lam * occ[i] * occ[j]))
    return out


def _order_key(occ):
    return (sum(occ), -sum(i * c for i, c in enumerate(occ)), occ)


def build_model(params: CtmcParams, cap: int = DEFAULT_STATE_CAP) -> CtmcModel:
    N, M, lam, h = params.n_nodes, params.n_tagged, params.lam, params.h
    init = (1,) + (0,) * h
    seen = {init}
    queue = deque([init])
    edges = []
    while queue:
        occ = queue.popleft()
        for _, nxt, r in state_rates(occ, N, M, lam):
            edges.append((occ, nxt, r))
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                if len(seen) > cap:
                    raise StateSpaceTooLarge(
                        f"more than {cap} states for N={N}, M={M}, h={h}; "
                        "use simulate_absorption instead"
                    )
                queue.append(nxt)
    states = sorted(seen, key=_order_key)
    index = {s: k for k, s in enumerate(states)}
    absorbing = len(states)
    src = np.fromiter((index[a] for a, _, _ in edges), dtype=np.int64, count=len(edges))
    dst = np.fromiter(
        (absorbing if b is None else index[b] for _, b, _ in edges), dtype=np.int64, count=len(edges)
    )
    rate = np.fromiter((r for _, _, r in edges), dtype=float, count=len(edges))
    out_rate = np.bincount(src, weights=rate, minlength=len(states))
    return CtmcModel(params, states, index, src, dst, rate, out_rate)


def _transient_generator(model: CtmcModel) -> sp.csr_matrix:
    n = len(model.states)
    keep = model.dst != model.absorbing
    Q = sp.coo_matrix((model.rate[keep], (model.src[keep], model.dst[keep])), shape=(n, n)).tocsr()
    return Q - sp.diags(model.out_rate)


def expected_absorption_times(model: CtmcModel) -> np.ndarray:
    """Mean time to absorption from every transient state."""
    n = len(model.states)
    if np.any(model.out_rate <= 0):
        raise SingularSystemError("a transient state has no outgoing rate")
    A = (-_transient_generator(model)).tocsc()
    b = np.ones(n)
    # states are topologically ordered, so natural ordering keeps the factor triangular
    t = spsolve(A, b, permc_spec="NATURAL")
    resid = np.max(np.abs(A @ t - b))
    if not np.all(np.isfinite(t)) or resid > 1e-12 * max(1.0, np.max(np.abs(t)) * abs(A).max()):
        raise SingularSystemError(f"first-step system residual {resid:g}")
    return np.atleast_1d(t)


def expected_absorption_time(model: CtmcModel) -> float:
    return float(expected_absorption_times(model)[model.initial])


def absorption_cdf(model: CtmcModel, t, tol: float = 1e-9):
    """P(absorbed by time t), by uniformization; ``t`` may be scalar or array."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be non-negative")
    Q = _transient_generator(model)
    Lam = float(model.out_rate.max())
    P = (sp.identity(Q.shape[0], format="csr") + Q / Lam).T.tocsr()
    v = np.zeros(Q.shape[0])
    v[model.initial] = 1.0
    kmax = int(poisson.isf(tol / 2, Lam * ts.max())) + 2 if ts.max() > 0 else 0
    survival = np.empty(kmax + 1)
    for k in range(kmax + 1):
        survival[k] = v.sum()
        v = P @ v
    ks = np.arange(kmax + 1)
    out = np.empty_like(ts)
    for n, tt in enumerate(ts):
        if tt == 0:
            out[n] = 0.0
            continue
        w = poisson.pmf(ks, Lam * tt)
        # truncated tail has survival <= 1, so mass 1 - sum(w) bounds the error
        out[n] = 1.0 - float(w @ survival) - max(0.0, 1.0 - w.sum()) * survival[-1]
    out = np.clip(out, 0.0, 1.0)
    return out if np.ndim(t) else float(out[0])


# --- sampler ---------------------------------------------------------------


def _transition_table(h: int):
    """Kinds and occupancy deltas for every transition type at hop limit h."""
    kinds, deltas = [("tagged",)], [np.zeros(h + 1, dtype=np.int64)]
    for i in range(h):
        d = np.zeros(h + 1, dtype=np.int64)
        d[i + 1] += 1
        kinds.append(("1", i))
        deltas.append(d)
    for i in range(h - 1):
        for j in range(i + 2, h + 1):
            d = np.zeros(h + 1, dtype=np.int64)
            d[i + 1] += 1
            d[j] -= 1
            kinds.append(("0", i, j))
            deltas.append(d)
    return kinds, np.array(deltas)


def _gillespie(n_nodes, n_tagged, lam, h, runs, rng, t_max=np.inf):
    """Vectorised Gillespie over ``runs`` independent chains.

    Returns absorption times (``inf`` if not absorbed by ``t_max``) and final
    occupancy vectors.
    """
    kinds, deltas = _transition_table(h)
    occ = np.zeros((runs, h + 1), dtype=np.int64)
    occ[:, 0] = 1
    clock = np.zeros(runs)
    t_abs = np.full(runs, np.inf)
    alive = np.ones(runs, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        o = occ[idx]
        m = o.sum(axis=1)
        rates = np.empty((len(idx), len(kinds)))
        for k, kind in enumerate(kinds):
            if kind[0] == "tagged":
                rates[:, k] = lam * (m - o[:, h]) * n_tagged
            elif kind[0] == "1":
                rates[:, k] = lam * o[:, kind[1]] * (n_nodes - n_tagged - m)
            else:
                rates[:, k] = lam * o[:, kind[1]] * o[:, kind[2]]
        total = rates.sum(axis=1)
        stuck = total <= 0
        dt = rng.exponential(1.0, len(idx)) / np.where(stuck, 1.0, total)
        dt[stuck] = np.inf
        u = rng.random(len(idx)) * total
        choice = (np.cumsum(rates, axis=1) <= u[:, None]).sum(axis=1)
        choice = np.minimum(choice, len(kinds) - 1)
        t_new = clock[idx] + dt
        late = t_new > t_max
        done_late = idx[late]
        alive[done_late] = False
        go = ~late
        idx, choice, t_new = idx[go], choice[go], t_new[go]
        clock[idx] = t_new
        hit = choice == 0
        t_abs[idx[hit]] = t_new[hit]
        alive[idx[hit]] = False
        moving = idx[~hit]
        occ[moving] += deltas[choice[~hit]]
    return t_abs, occ


@dataclass(frozen=True)
class AbsorptionSample:
    mean: float
    stderr: float
    quantiles: dict
    runs: int


def simulate_absorption(params: CtmcParams, runs: int, seed: int) -> AbsorptionSample:
    """Monte-Carlo estimate of the absorption time, deterministic per seed."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rng = np.random.default_rng(seed)
    t, _ = _gillespie(params.n_nodes, params.n_tagged, params.lam, params.h, runs, rng)
    qs = (0.1, 0.5, 0.9)
    stderr = float(t.std(ddof=1) / np.sqrt(runs)) if runs > 1 else float("nan")
    return AbsorptionSample(
        mean=float(t.mean()),
        stderr=stderr,
        quantiles={q: float(np.quantile(t, q)) for q in qs},
        runs=runs,
    )


def simulate_discovered(n_nodes: int, lam: float, h: int, t: float, runs: int, seed: int) -> np.ndarray:
    """Discovered-node counts at time ``t`` for a hop-limited epidemic without tagged nodes.

    This is N_h(t) under homogeneous mixing; one count per run.
    """
    rng = np.random.default_rng(seed)
    _, occ = _gillespie(n_nodes, 0, lam, h, runs, rng, t_max=t)
    return occ.sum(axis=1) - 1
