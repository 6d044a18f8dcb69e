"""Exogenous parameters, derived constants, network and shock sampling.

Agent convention used across the package: agents 0..n1-1 are risk-free
lenders (group 1), agents n1..n-1 are risky borrowers/lenders (group 2).
Only group-2 agents borrow, so every edge terminates at a risky agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _scalar

GROUP_RISK_FREE = 0
GROUP_RISKY = 1

# spawn-key domain tags so the streams of different sampling purposes never collide
DOMAIN_NETWORK = 1
DOMAIN_SHOCKS = 2
DOMAIN_TRAJECTORY = 3


def seed_sequence(seed, key=()):
    """SeedSequence keyed by (seed, *key); extends an existing spawn key."""
    if isinstance(seed, np.random.SeedSequence):
        if not key:
            return seed
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key)
        )
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def make_rng(seed, key=()) -> np.random.Generator:
    """Generator from an int seed, a SeedSequence, or a Generator (passthrough)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed_sequence(seed, key))


@dataclass(frozen=True, slots=True)
class MarketParams:
    """All exogenous constants of the market.

    w: initial wealth per agent; alpha: fraction of accumulated risky-group
    wealth reinvested as inter-bank loans; r_s / r_b: risk-free and borrowing
    rates; u / d: up and down return rates of the risky investment; delta:
    probability of the up move; v: taxes per agent; p_ss: edge probability;
    c_bar: observation precision of the average dynamics.
    """

    w: float
    alpha: float
    r_s: float
    r_b: float
    u: float
    d: float
    delta: float
    v: float
    p_ss: float = 0.5
    c_bar: float = 1e5

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError(f"w must be positive, got {self.w}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.p_ss <= 1:
            raise ValueError(f"p_ss must lie in (0, 1], got {self.p_ss}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c_bar > 0:
            raise ValueError(f"c_bar must be positive, got {self.c_bar}")
        if not self.v >= 0:
            raise ValueError(f"v must be nonnegative, got {self.v}")
        if not self.d > -1:
            raise ValueError(f"d must exceed -1, got {self.d}")
        if not self.d < self.r_s:
            raise ValueError(f"rate ordering requires d < r_s, got d={self.d}, r_s={self.r_s}")
        if not self.r_s <= self.r_b:
            raise ValueError(f"rate ordering requires r_s <= r_b, got r_s={self.r_s}, r_b={self.r_b}")
        if not self.r_b < self.u:
            raise ValueError(f"rate ordering requires r_b < u, got r_b={self.r_b}, u={self.u}")

    def as_tuple(self):
        """(w, alpha, r_s, r_b, u, d, delta, v), the scalar-kernel argument order."""
        return (self.w, self.alpha, self.r_s, self.r_b, self.u, self.d,
                self.delta, self.v)


@dataclass(frozen=True, slots=True)
class DerivedQuantities:
    """Analytic constants at a fixed risk-free fraction eps."""

    eps: float
    w_tilde: float   # accumulated wealth per risky agent
    y: float         # total liability per risky agent
    c_eps: float     # asymptotic claims coefficient, in (0, 1]
    k_u: float       # risky return after an up move
    k_d: float       # risky return after a down move
    w_lo: float      # k_d - v
    w_hi: float      # k_u - v
    ew: float        # expected risky return
    rr_bar: float    # expected risky rate, u delta + d (1 - delta)


def derive(params: MarketParams, eps: float) -> DerivedQuantities:
    """Evaluate all derived constants at eps. Pure; rejects eps outside [0, 1]."""
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    w_tilde, y, c_eps, k_u, k_d = _scalar.derived_values(
        eps, params.w, params.alpha, params.r_b, params.u, params.d, params.delta
    )
    return DerivedQuantities(
        eps=eps, w_tilde=w_tilde, y=y, c_eps=c_eps, k_u=k_u, k_d=k_d,
        w_lo=k_d - params.v, w_hi=k_u - params.v,
        ew=params.delta * k_u + (1 - params.delta) * k_d,
        rr_bar=params.u * params.delta + params.d * (1 - params.delta),
    )


@dataclass(frozen=True, slots=True)
class LiabilityNetwork:
    """A sampled finite network: group labels plus a sparse edge list.

    Edge k means lender[k] lent principal[k] to borrower[k] during the
    investment phase; borrower[k] is always a risky agent.
    """

    n: int
    n1: int
    n2: int
    group: np.ndarray      # int8, GROUP_RISK_FREE or GROUP_RISKY per agent
    lender: np.ndarray     # int64 agent ids
    borrower: np.ndarray   # int64 agent ids, all >= n1
    principal: np.ndarray  # float64, amount lent on each edge
    eps_realized: float    # n1 / n

    @property
    def edge_count(self) -> int:
        return self.lender.shape[0]


def sample_network(params: MarketParams, n1: int, n2: int, seed) -> LiabilityNetwork:
    """Sample the lending network on n1 risk-free and n2 risky agents.

    Every admissible (lender, risky borrower) pair except self-loops carries
    an edge independently with probability p_ss.  Principals follow the
    wealth-apportioning rule at the realized fraction n1/n, so a borrower's
    total liability concentrates on y as the network grows.
    """
    if n2 < 1:
        raise ValueError(f"need at least one risky agent, got n2={n2}")
    if n1 < 0:
        raise ValueError(f"n1 must be nonnegative, got {n1}")
    n = n1 + n2
    eps_r = n1 / n
    rng = make_rng(seed, (DOMAIN_NETWORK,))
    p = params.p_ss
    c1 = params.w / (n * p)
    c2 = params.alpha * params.w * (1 + eps_r) / (n * p * (1 - params.alpha) * (1 - eps_r))

    lenders = []
    borrowers = []
    chunk = max(1, int(4_000_000 // n2))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        mask = rng.random((stop - start, n2)) < p
        li, bj = np.nonzero(mask)
        li = li + start
        bj = bj + n1
        keep = li != bj  # a risky agent never lends to itself
        lenders.append(li[keep])
        borrowers.append(bj[keep])
    lender = np.concatenate(lenders) if lenders else np.empty(0, dtype=np.int64)
    borrower = np.concatenate(borrowers) if borrowers else np.empty(0, dtype=np.int64)
    principal = np.where(lender < n1, c1, c2)

    group = np.empty(n, dtype=np.int8)
    group[:n1] = GROUP_RISK_FREE
    group[n1:] = GROUP_RISKY
    return LiabilityNetwork(
        n=n, n1=n1, n2=n2, group=group,
        lender=lender.astype(np.int64), borrower=borrower.astype(np.int64),
        principal=principal, eps_realized=eps_r,
    )


@dataclass(frozen=True, slots=True)
class ShockVector:
    """Realized risky returns, K[i] in {k_u, k_d} for each risky agent."""

    up: np.ndarray   # bool per risky agent
    k_u: float
    k_d: float
    K: np.ndarray    # float64 realized returns

    @property
    def n2(self) -> int:
        return self.K.shape[0]


def sample_shocks(params: MarketParams, n2: int, eps: float, seed) -> ShockVector:
    """Draw i.i.d. binomial-model shocks for n2 risky agents at fraction eps."""
    if n2 < 1:
        raise ValueError(f"need at least one risky agent, got n2={n2}")
    dq = derive(params, eps)
    rng = make_rng(seed, (DOMAIN_SHOCKS,))
    up = rng.random(n2) < params.delta
    K = np.where(up, dq.k_u, dq.k_d)
    return ShockVector(up=up, k_u=dq.k_u, k_d=dq.k_d, K=K)
