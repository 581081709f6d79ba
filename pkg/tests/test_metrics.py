import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hopsearch.metrics import (
    DegenerateVarianceError,
    EmptyInputError,
    PathSample,
    REPORT_FIELDS,
    build_report,
    effective_distance,
    path_ratios,
    pearson,
    spread_ratio,
    success_ratios,
    write_reports,
)
from hopsearch.simulator import QueryRecord, ResponseRecord, SimConfig, SimResult


def rec(i, disc=None, deliv=None):
    return QueryRecord(i, 0, 0, 0.1, 0.0, discovered_at=disc, delivered_at=deliv)


def test_success_ratios():
    assert success_ratios([rec(0, 1, 2), rec(1, 1, 3)]) == (1.0, 1.0)
    assert success_ratios([rec(0), rec(1)]) == (0.0, 0.0)
    qs = [rec(0, 1, 2), rec(1, 1, 5), rec(2, 3), rec(3)]
    assert success_ratios(qs) == (0.5, 0.75)
    with pytest.raises(EmptyInputError):
        success_ratios([])


def test_effective_distance():
    assert effective_distance([1, 1, 2, 2, 3, 3, 4, 5, 6, 10]) == 6
    assert effective_distance([4.5] * 7) == 4.5
    assert effective_distance([3, 9, 1], quantile=1.0) == 9
    with pytest.raises(EmptyInputError):
        effective_distance([])


@given(st.lists(st.integers(0, 50), min_size=1, max_size=200), st.floats(0.01, 1.0))
def test_effective_distance_is_order_statistic(xs, q):
    v = effective_distance(xs, q)
    assert v in xs
    assert sum(x <= v for x in xs) >= q * len(xs) - 1e-9
    smaller = [x for x in xs if x < v]
    assert len(smaller) < q * len(xs) + 1e-9


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)
    with pytest.raises(DegenerateVarianceError):
        pearson([1, 1, 1], [1, 2, 3])
    rng = np.random.default_rng(0)
    assert abs(pearson(rng.random(10_000), rng.random(10_000))) < 0.05


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=50))
def test_pearson_bounded_and_symmetric(pairs):
    xs, ys = zip(*pairs)
    try:
        r = pearson(xs, ys)
    except DegenerateVarianceError:
        return
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson(ys, xs), abs=1e-9)


def test_path_ratios():
    same = [PathSample(2, 2, 50.0, 50.0), PathSample(1, 1, 10.0, 10.0)]
    assert path_ratios(same) == (1.0, 1.0)
    assert path_ratios([PathSample(2, 3, 100.0, 250.0)]) == (1.5, 2.5)
    gh, gt = path_ratios([PathSample(1, 2, 0.0, 30.0), PathSample(2, 2, 10.0, 20.0)])
    assert gh == 1.5 and gt == 2.0  # zero forward time skipped for the temporal ratio
    with pytest.raises(EmptyInputError):
        path_ratios([])


def test_spread_ratio():
    log = [(0.0, "CREATE", 0, 3, "", 0)]
    assert spread_ratio(log, 98) == {0: 1 / 98}
    full = log + [(1.0, "FWD_COPY", 0, 3, v, 1) for v in range(98) if v != 3]
    assert spread_ratio(full, 98) == {0: 1.0}
    part = log + [(1.0, "FWD_COPY", 0, 3, v, 1) for v in range(25) if v != 3]
    assert spread_ratio(part, 98)[0] == pytest.approx(0.2551, abs=1e-4)


def fake_result():
    q0 = QueryRecord(0, 0, 0, 0.05, 0.0, labels={0: 0, 1: 1, 2: 2}, discovered_at=100.0, forward_hops=2,
                     delivered_at=350.0, response_id=0)
    q1 = QueryRecord(1, 1, 1, 0.05, 10.0, labels={1: 0, 2: 1}, discovered_at=30.0, forward_hops=1,
                     delivered_at=90.0, response_id=1)
    q2 = QueryRecord(2, 2, 2, 0.40, 20.0, labels={2: 0})
    r0 = ResponseRecord(0, 0, 2, 100.0, 2, labels={}, delivered_at=350.0, return_hops=3)
    r1 = ResponseRecord(1, 1, 2, 30.0, 1, labels={}, delivered_at=90.0, return_hops=1)
    return SimResult(SimConfig(), 4, [q0, q1, q2], [r0, r1], [])


def test_build_report():
    res = fake_result()
    rep = build_report(res, 0.05)
    assert (rep.p_s, rep.p_h) == (1.0, 1.0)
    assert rep.mean_fwd_hops == 1.5 and rep.mean_ret_hops == 2.0 and rep.mean_total_hops == 3.5
    assert rep.gamma_hop == pytest.approx((1.5 + 1.0) / 2)
    assert rep.gamma_temp == pytest.approx((250 / 100 + 60 / 20) / 2)
    assert rep.mean_spread_ratio == pytest.approx((3 / 4 + 2 / 4) / 2)
    assert rep.mean_search_time == pytest.approx((350 + 80) / 2)
    assert rep.rho_hop == pytest.approx(1.0)
    empty = build_report(res, 0.40)
    assert empty.p_s == 0.0 and math.isnan(empty.gamma_hop) and math.isnan(empty.mean_search_time)


def test_write_reports(tmp_path):
    rep = build_report(fake_result(), 0.40)
    row = dict(rep.__dict__, dataset="x", alpha=0.4)
    write_reports([row], tmp_path / "r.csv", ["dataset", "alpha"])
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == ["dataset", "alpha"] + REPORT_FIELDS
    assert lines[1].startswith("x,0.4,0.0,0.0,")
