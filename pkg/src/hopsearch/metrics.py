"""Aggregate simulation records into success ratios, path statistics and cost."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .simulator import QueryRecord, SimResult


class EmptyInputError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


def success_ratios(records: Sequence[QueryRecord]):
    """(p_s, p_h): fractions of queries delivered and discovered."""
    if not records:
        raise EmptyInputError("no query records")
    n = len(records)
    p_h = sum(1 for q in records if q.discovered_at is not None) / n
    p_s = sum(1 for q in records if q.delivered_at is not None) / n
    return p_s, p_h


def effective_distance(samples: Iterable[float], quantile: float = 0.9) -> float:
    """Smallest sample v with at least ``quantile`` of the samples <= v."""
    xs = sorted(samples)
    if not xs:
        raise EmptyInputError("no samples")
    if not (0 < quantile <= 1):
        raise ValueError("quantile must be in (0, 1]")
    k = math.ceil(quantile * len(xs) - 1e-12)
    return xs[max(k, 1) - 1]


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DegenerateVarianceError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class PathSample:
    """Coupled forward/return path of one completed search."""
    fwd_hops: int
    ret_hops: int
    fwd_time: float
    ret_time: float


def path_samples(result: SimResult, alpha=None) -> list:
    out = []
    for q, r in result.completed():
        if alpha is not None and q.alpha != alpha:
            continue
        out.append(PathSample(r.fwd_hops, r.return_hops, r.created_at - q.created_at, q.delivered_at - r.created_at))
    return out


def path_ratios(samples: Sequence[PathSample]):
    """(gamma_hop, gamma_temp) as means of per-search return/forward ratios.

    Searches whose forward path took zero time (created during an ongoing
    contact with a holder) have no defined temporal ratio and are left out of
    gamma_temp only.
    """
    if not samples:
        raise EmptyInputError("no completed searches")
    hop = [s.ret_hops / s.fwd_hops for s in samples if s.fwd_hops >= 1]
    temp = [s.ret_time / s.fwd_time for s in samples if s.fwd_time > 0]
    if not hop:
        raise EmptyInputError("no completed search with a forward hop")
    return float(np.mean(hop)), (float(np.mean(temp)) if temp else math.nan)


def spread_ratio(log, n_nodes: int) -> dict:
    """Per query id: distinct nodes that ever carried the query, over N."""
    seen: dict = {}
    for row in log:
        ev, qid = row[1], row[2]
        if ev == "CREATE":
            seen.setdefault(qid, set()).add(row[3])
        elif ev == "FWD_COPY":
            seen.setdefault(qid, set()).add(row[4])
    return {qid: len(s) / n_nodes for qid, s in seen.items()}


@dataclass
class MetricsReport:
    p_s: float
    p_h: float
    mean_fwd_hops: float
    mean_ret_hops: float
    mean_total_hops: float
    effective_hop_distance_fwd: float
    effective_hop_distance_ret: float
    effective_temporal_distance_fwd: float
    effective_temporal_distance_ret: float
    rho_hop: float
    rho_temp: float
    gamma_hop: float
    gamma_temp: float
    mean_spread_ratio: float
    mean_search_time: float


REPORT_FIELDS = [f.name for f in fields(MetricsReport)]


def _safe(fn, *args):
    try:
        return fn(*args)
    except (EmptyInputError, DegenerateVarianceError, ValueError):
        return math.nan


def build_report(result: SimResult, alpha=None) -> MetricsReport:
    """Metrics over all queries of ``result`` (or those of one availability class).

    Failed searches are excluded from every path statistic.
    """
    qs = [q for q in result.queries if alpha is None or q.alpha == alpha]
    p_s, p_h = success_ratios(qs)
    paths = path_samples(result, alpha)
    disc = [q for q in qs if q.discovered_at is not None]
    fwd_h = [p.fwd_hops for p in paths]
    ret_h = [p.ret_hops for p in paths]
    nan = math.nan
    try:
        gh, gt = path_ratios(paths)
    except EmptyInputError:
        gh = gt = nan
    temp_ok = [p for p in paths if p.fwd_time > 0]
    return MetricsReport(
        p_s=p_s,
        p_h=p_h,
        mean_fwd_hops=float(np.mean(fwd_h)) if paths else nan,
        mean_ret_hops=float(np.mean(ret_h)) if paths else nan,
        mean_total_hops=float(np.mean(np.add(fwd_h, ret_h))) if paths else nan,
        effective_hop_distance_fwd=_safe(effective_distance, [q.forward_hops for q in disc]),
        effective_hop_distance_ret=_safe(effective_distance, ret_h),
        effective_temporal_distance_fwd=_safe(effective_distance, [q.discovered_at - q.created_at for q in disc]),
        effective_temporal_distance_ret=_safe(effective_distance, [p.ret_time for p in paths]),
        rho_hop=_safe(pearson, fwd_h, ret_h),
        rho_temp=_safe(pearson, [p.fwd_time for p in temp_ok], [p.ret_time for p in temp_ok]),
        gamma_hop=gh,
        gamma_temp=gt,
        mean_spread_ratio=float(np.mean([q.spread_count / result.n_nodes for q in qs])),
        mean_search_time=float(np.mean([q.delivered_at - q.created_at for q in qs if q.delivered_at is not None]))
        if p_s > 0 else nan,
    )


def write_reports(rows: Sequence[dict], path, key_fields: Sequence[str]) -> None:
    """CSV with the cell key columns followed by every MetricsReport field."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(key_fields) + REPORT_FIELDS)
        for row in rows:
            w.writerow([_cell(row[k]) for k in key_fields] + [_cell(row[k]) for k in REPORT_FIELDS])


def _cell(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return x


def report_dict(report: MetricsReport) -> dict:
    return asdict(report)
