import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopsearch.analytics import (
    BenefitProfile,
    ConvergenceError,
    DomainError,
    HopTimeParams,
    ReplicationBudgetParams,
    added_benefit,
    approx_completion_time,
    forward_success_ratio,
    h_beta,
    p_h_from_neighborhood,
    search_success_closed,
    search_success_expansion,
)


# --- forward success ----------------------------------------------------------


def test_forward_trivial_ends():
    assert forward_success_ratio(0.0, 10) == 0.0
    assert forward_success_ratio(1.0, 1) == 1.0
    assert forward_success_ratio(0.3, 0) == 0.0


def test_forward_matches_monte_carlo():
    # independent Bernoulli oracle, 2e6 runs of K=20 draws
    rng = np.random.default_rng(12345)
    runs, k, alpha = 2_000_000, 20, 0.05
    hits = rng.binomial(k, alpha, size=runs) > 0
    mc = hits.mean()
    se = math.sqrt(mc * (1 - mc) / runs)
    value = forward_success_ratio(alpha, k)
    assert abs(value - mc) < 4 * se
    assert value == pytest.approx(0.6415, abs=1e-4)


@pytest.mark.parametrize("alpha,k", [(1.5, 3), (-0.1, 3), (0.5, -1)])
def test_forward_domain(alpha, k):
    with pytest.raises(DomainError):
        forward_success_ratio(alpha, k)


@given(st.floats(0, 1), st.integers(0, 500))
def test_forward_monotone_in_k(alpha, k):
    assert forward_success_ratio(alpha, k) <= forward_success_ratio(alpha, k + 1) + 1e-15


# --- search success -----------------------------------------------------------


def test_full_return_budget_reduces_to_forward():
    p = ReplicationBudgetParams(0.23, 50, 17, 49)
    assert p.gamma == 1.0
    assert search_success_closed(p) == pytest.approx(forward_success_ratio(0.23, 17), abs=1e-15)


def test_single_query_is_alpha_gamma():
    p = ReplicationBudgetParams(0.4, 11, 1, 5)
    assert search_success_closed(p) == pytest.approx(0.4 * 0.5, rel=1e-15)
    assert search_success_expansion(p) == pytest.approx(0.2, rel=1e-13)


def test_expansion_empty_sum():
    assert search_success_expansion(ReplicationBudgetParams(0.3, 10, 0, 4)) == 0.0


def test_expansion_k1_half_half():
    # K=1, alpha=0.5, gamma=0.5 with N=3, K'=1
    assert search_success_expansion(ReplicationBudgetParams(0.5, 3, 1, 1)) == pytest.approx(0.25, abs=1e-15)


def test_expansion_extended_precision():
    mp.mp.dps = 50
    p = ReplicationBudgetParams(0.4, 98, 10, 10)
    ref = 1 - (1 - mp.mpf("0.4") * 10 / 97) ** 10
    assert search_success_expansion(p) == pytest.approx(float(ref), abs=1e-14)


def test_closed_vs_expansion_fig2_point():
    p = ReplicationBudgetParams(0.15, 98, 30, 30)
    assert abs(search_success_closed(p) - search_success_expansion(p)) <= 1e-12


@settings(max_examples=300)
@given(st.floats(0, 1), st.integers(2, 400), st.data())
def test_closed_equals_expansion(alpha, n, data):
    k = data.draw(st.integers(0, 200))
    kp = data.draw(st.integers(0, n - 1))
    p = ReplicationBudgetParams(alpha, n, k, kp)
    assert abs(search_success_closed(p) - search_success_expansion(p)) <= 1e-12


def test_return_budget_domain():
    with pytest.raises(DomainError):
        ReplicationBudgetParams(0.1, 10, 3, 10)


# --- neighbourhood-based forward success and added benefit ----------------------


def test_p_h_from_neighborhood():
    assert p_h_from_neighborhood(0.3, 0.0) == 0.0
    assert p_h_from_neighborhood(1.0, 1.0) == 1.0
    mp.mp.dps = 40
    ref = 1 - mp.exp(mp.mpf("13.5") * mp.log(mp.mpf("0.85")))
    assert p_h_from_neighborhood(0.15, 13.5) == pytest.approx(float(ref), abs=1e-14)
    assert float(ref) == pytest.approx(0.8886, abs=1e-4)


def test_added_benefit():
    assert added_benefit([0.3, 0.6, 0.7]) == pytest.approx([0.3, 0.1])
    assert added_benefit([0.4] * 5) == [0.0] * 4
    assert added_benefit([0.35, 0.42, 0.48]) == pytest.approx([0.07, 0.06])
    with pytest.raises(DomainError):
        added_benefit([0.5])


def test_h_beta_examples():
    assert h_beta(BenefitProfile((0.3, 0.6, 0.7, 0.72), 0.1)) == 3
    assert h_beta(BenefitProfile((0.5, 0.5, 0.5), 1e-9)) == 1


@given(st.lists(st.floats(0, 1), min_size=2, max_size=12, unique=True))
def test_h_beta_tiny_threshold_on_increasing_profile(ps):
    ps = sorted(ps)
    assert h_beta(BenefitProfile(tuple(ps), 1e-15)) == len(ps)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.floats(1e-6, 1))
def test_h_beta_range(ps, beta):
    hb = h_beta(BenefitProfile(tuple(ps), beta))
    assert 1 <= hb <= max(1, len(ps))


# --- approximate completion time -------------------------------------------------


def test_h1_is_geometric():
    p = HopTimeParams(0.2, 2.0, 1)
    assert approx_completion_time(p) == pytest.approx(1 / (2.0 * (1 - p.q)), rel=1e-9)
    assert approx_completion_time(p) == pytest.approx(1 / 0.2, rel=1e-9)


def test_large_h_limit():
    q = 0.9
    limit = -math.log(1 - q) / q  # sum q^i / (1 + i)
    assert approx_completion_time(HopTimeParams(0.1, 1.0, 10**9, 1e-15)) == pytest.approx(limit, rel=1e-8)


def test_regression_constant():
    # mpmath nsum of q^i/(1 + 2i/3) with q = 0.95
    ref = 3.899558313844354992473066236773268639424
    assert approx_completion_time(HopTimeParams(0.05, 1.0, 3)) == pytest.approx(ref, rel=1e-10)
    assert approx_completion_time(HopTimeParams(0.05, 1.0, 3, 1e-15)) == pytest.approx(ref, rel=1e-12)


def test_divergent_series():
    with pytest.raises(ConvergenceError):
        approx_completion_time(HopTimeParams(0.0, 1.0, 2))
    with pytest.raises(ConvergenceError):
        approx_completion_time(HopTimeParams(2.0, 1.0, 2))


@given(st.floats(0.01, 1.0), st.floats(0.5, 4.0), st.integers(1, 30))
def test_approx_time_nonincreasing_in_h(alpha, lam, h):
    if alpha > lam:
        return
    a = approx_completion_time(HopTimeParams(alpha, lam, h))
    b = approx_completion_time(HopTimeParams(alpha, lam, h + 1))
    assert b <= a * (1 + 1e-9)
