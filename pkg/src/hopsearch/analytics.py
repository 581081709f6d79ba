"""Closed-form success and completion-time models for hop-limited search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class ConvergenceError(ArithmeticError):
    pass


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class ReplicationBudgetParams:
    alpha: float
    n_nodes: int
    k_forward: int
    k_return: int

    def __post_init__(self):
        _check_prob("alpha", self.alpha)
        if self.n_nodes < 2:
            raise DomainError("n_nodes must be >= 2")
        if self.k_forward < 0 or self.k_return < 0:
            raise DomainError("replication budgets must be non-negative")
        if self.k_return > self.n_nodes - 1:
            raise DomainError("k_return must not exceed n_nodes - 1")

    @property
    def gamma(self) -> float:
        """Probability that a single response reaches the seeker."""
        return self.k_return / (self.n_nodes - 1)


@dataclass(frozen=True)
class HopTimeParams:
    alpha: float
    lam: float
    h: int
    truncation_tol: float = 1e-10

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("meeting rate must be positive")
        if self.h < 1:
            raise DomainError("hop limit must be >= 1")
        if self.truncation_tol <= 0:
            raise DomainError("truncation_tol must be positive")

    @property
    def q(self) -> float:
        return 1.0 - self.alpha / self.lam


@dataclass(frozen=True)
class BenefitProfile:
    p_by_hop: tuple
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "p_by_hop", tuple(float(p) for p in self.p_by_hop))
        for p in self.p_by_hop:
            _check_prob("P_h", p)


def forward_success_ratio(alpha: float, k: int) -> float:
    """Probability that at least one of ``k`` query holders is tagged."""
    _check_prob("alpha", alpha)
    if k < 0:
        raise DomainError("k must be non-negative")
    if k == 0 or alpha == 0.0:
        return 0.0
    # -expm1(k log1p(-a)) keeps precision for tiny alpha
    if alpha == 1.0:
        return 1.0
    return -math.expm1(k * math.log1p(-alpha))


def search_success_closed(params: ReplicationBudgetParams) -> float:
    """Search success 1 - (1 - alpha*gamma)^K."""
    ag = params.alpha * params.gamma
    _check_prob("alpha*gamma", ag)
    if params.k_forward == 0 or ag == 0.0:
        return 0.0
    if ag == 1.0:
        return 1.0
    return -math.expm1(params.k_forward * math.log1p(-ag))


def search_success_expansion(params: ReplicationBudgetParams) -> float:
    """Search success as the binomial sum over the number of discovered providers.

    Terms are accumulated in log space so that K in the thousands does not
    overflow the binomial coefficients.
    """
    K = params.k_forward
    a, g = params.alpha, params.gamma
    if K == 0 or a == 0.0 or g == 0.0:
        return 0.0
    if a == 1.0:
        # only the k = K term survives
        return -math.expm1(K * math.log1p(-g)) if g < 1.0 else 1.0
    k = np.arange(1, K + 1, dtype=float)
    log_binom = gammaln(K + 1) - gammaln(k + 1) - gammaln(K - k + 1)
    log_pmf = log_binom + k * math.log(a) + (K - k) * math.log1p(-a)
    if g == 1.0:
        log_hit = np.zeros_like(k)
    else:
        # log(1 - (1-g)^k)
        log_hit = np.log(-np.expm1(k * math.log1p(-g)))
    return float(np.exp(logsumexp(log_pmf + log_hit)))


def p_h_from_neighborhood(alpha: float, expected_nh: float) -> float:
    """Forward success 1 - (1-alpha)^E[N_h(T)]; an upper bound by Jensen."""
    _check_prob("alpha", alpha)
    if expected_nh < 0:
        raise DomainError("expected neighborhood size must be non-negative")
    if expected_nh == 0 or alpha == 0.0:
        return 0.0
    if alpha == 1.0:
        return 1.0
    return -math.expm1(expected_nh * math.log1p(-alpha))


def added_benefit(p_by_hop: Sequence[float]) -> list[float]:
    if len(p_by_hop) < 2:
        raise DomainError("need at least two hop values to take differences")
    return [p_by_hop[i + 1] - p_by_hop[i] for i in range(len(p_by_hop) - 1)]


def h_beta(profile: BenefitProfile) -> int:
    """Largest hop h (1-based) with P_{h+1} - P_h >= beta, plus one.

    Returns 1 when no difference reaches ``beta``.  Differences within 1e-12
    of ``beta`` count as reaching it, so 0.7 - 0.6 qualifies for beta = 0.1.
    """
    p = profile.p_by_hop
    if len(p) < 2:
        return 1
    best = 0
    for h, d in enumerate(added_benefit(p), start=1):
        if d >= profile.beta - 1e-12:
            best = h
    return best + 1


def approx_completion_time(params: HopTimeParams) -> float:
    """Series approximation sum_i q^i / (lam (1 + i (1 - 1/h))) of T_h.

    Terms decrease at least geometrically, so the tail after term t is at
    most t q / (1 - q); summation stops once that bound falls below
    ``truncation_tol`` times the running sum.
    """
    q = params.q
    if not (0.0 <= q < 1.0):
        raise ConvergenceError(f"series diverges: q = 1 - alpha/lam = {q!r}")
    lam, c = params.lam, 1.0 - 1.0 / params.h
    total = 0.0
    qi = 1.0
    i = 0
    while True:
        term = qi / (lam * (1.0 + i * c))
        total += term
        if term * q <= params.truncation_tol * total * (1.0 - q):
            break
        i += 1
        qi *= q
        if qi == 0.0:
            break
    return total
