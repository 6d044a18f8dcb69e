"""Replicator processes on the growing population.

Both dynamics add one agent per round.  The average dynamics lets a
mixed-pair newcomer compare noisy group-mean payoffs; the random dynamics
compares the realized returns of the two contacted agents.  simulate runs
on the asymptotic return formulas (jitted loops); simulate_finite settles a
freshly sampled network every round instead.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _scalar
from .clearing import solve_clearing_finite
from .model import (DOMAIN_TRAJECTORY, GROUP_RISK_FREE, GROUP_RISKY,
                    LiabilityNetwork, MarketParams, ShockVector, derive,
                    make_rng)

KIND_AVERAGE = "average"
KIND_RANDOM = "random"

OBS_ANALYTIC = "analytic"
OBS_SAMPLED = "sampled"


@dataclass(frozen=True, slots=True)
class PopulationState:
    t: int
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 < 1:
            raise ValueError(f"invalid population sizes n1={self.n1}, n2={self.n2}")

    @property
    def eps(self) -> float:
        return self.n1 / (self.n1 + self.n2)


@dataclass(frozen=True, slots=True)
class Trajectory:
    """Sampled time series of one run; eps[k] is n1/(n1+n2) at t[k]."""

    kind: str                  # average or random
    mode: str                  # asymptotic or finite
    seed: object
    params: MarketParams
    eps0: float                # requested initial fraction
    n0: int
    T: int
    stride: int
    t: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    eps: np.ndarray
    truncated: bool = False    # True when a wall-clock budget cut the run short
    observation_model: str = OBS_ANALYTIC

    @property
    def final(self) -> PopulationState:
        return PopulationState(int(self.t[-1]), int(self.n1[-1]), int(self.n2[-1]))


def g_average(params: MarketParams, eps: float) -> float:
    """Probability a mixed-pair newcomer picks risk-free under noisy group means.

    Returns 1/2 at eps in {0, 1} by convention; there the value is inert
    because the mixed-pair probability vanishes.
    """
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    return float(_scalar.g_average_at(eps, *params.as_tuple(), params.c_bar))


def expected_G_random(params: MarketParams, eps: float) -> float:
    """Mean of the return-comparison indicator; one of 0, 1 - delta, 1."""
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    return float(_scalar.expected_g_random_at(eps, *params.as_tuple()))


def step_average(state: PopulationState, params: MarketParams, rng,
                 observation_model: str = OBS_ANALYTIC) -> PopulationState:
    """One round of the average dynamics."""
    rng = make_rng(rng)
    eps = state.eps
    if observation_model == OBS_ANALYTIC:
        g = g_average(params, eps)
        p1 = eps * eps + 2 * eps * (1 - eps) * g
        z = 1 if rng.random() < p1 else 0
    elif observation_model == OBS_SAMPLED:
        u1 = rng.random()
        if u1 < eps * eps:
            z = 1
        elif u1 < eps * eps + (1 - eps) * (1 - eps):
            z = 0
        else:
            phi1, phi2 = _scalar.phi_pair(eps, *params.as_tuple())
            o1 = phi1 + rng.normal(0.0, 1.0 / math.sqrt(params.c_bar * eps))
            o2 = phi2 + rng.normal(0.0, 1.0 / math.sqrt(params.c_bar * (1 - eps)))
            z = 1 if o1 > o2 else 0
    else:
        raise ValueError(f"unknown observation model {observation_model!r}")
    return PopulationState(state.t + 1, state.n1 + z, state.n2 + 1 - z)


def step_random(state: PopulationState, params: MarketParams, rng) -> PopulationState:
    """One round of the random dynamics; fresh shock per mixed-pair decision."""
    rng = make_rng(rng)
    eps = state.eps
    u1 = rng.random()
    if u1 < eps * eps:
        z = 1
    elif u1 < eps * eps + (1 - eps) * (1 - eps):
        z = 0
    else:
        w, alpha, r_s, r_b, u, d, delta, v = params.as_tuple()
        xbar, _, _ = _scalar.xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v)
        r1, r2u, r2d = _scalar.limiting_returns_at(
            eps, xbar, w, alpha, r_s, r_b, u, d, delta, v)
        r2 = r2u if rng.random() < delta else r2d
        z = 1 if r1 >= r2 else 0
    return PopulationState(state.t + 1, state.n1 + z, state.n2 + 1 - z)


@njit(cache=True, nogil=True)
def _run_average(gen, n1_0, n0, T, stride, w, alpha, r_s, r_b, u, d, delta, v,
                 c_bar, sampled):
    ts = np.empty(T // stride + 2, np.int64)
    n1s = np.empty(T // stride + 2, np.int64)
    n1 = n1_0
    ts[0] = 0
    n1s[0] = n1
    k = 1
    for t in range(T):
        eps = n1 / (n0 + t)
        if sampled:
            u1 = gen.random()
            if u1 < eps * eps:
                z = 1
            elif u1 < eps * eps + (1.0 - eps) * (1.0 - eps):
                z = 0
            else:
                phi1, phi2 = _scalar.phi_pair(eps, w, alpha, r_s, r_b, u, d, delta, v)
                o1 = phi1 + gen.normal(0.0, 1.0 / math.sqrt(c_bar * eps))
                o2 = phi2 + gen.normal(0.0, 1.0 / math.sqrt(c_bar * (1.0 - eps)))
                z = 1 if o1 > o2 else 0
        else:
            g = _scalar.g_average_at(eps, w, alpha, r_s, r_b, u, d, delta, v, c_bar)
            p1 = eps * eps + 2.0 * eps * (1.0 - eps) * g
            z = 1 if gen.random() < p1 else 0
        n1 += z
        tt = t + 1
        if tt % stride == 0 and tt != T:
            ts[k] = tt
            n1s[k] = n1
            k += 1
    ts[k] = T
    n1s[k] = n1
    k += 1
    return ts[:k], n1s[:k]


@njit(cache=True, nogil=True)
def _run_random(gen, n1_0, n0, T, stride, w, alpha, r_s, r_b, u, d, delta, v):
    ts = np.empty(T // stride + 2, np.int64)
    n1s = np.empty(T // stride + 2, np.int64)
    n1 = n1_0
    ts[0] = 0
    n1s[0] = n1
    k = 1
    for t in range(T):
        eps = n1 / (n0 + t)
        u1 = gen.random()
        if u1 < eps * eps:
            z = 1
        elif u1 < eps * eps + (1.0 - eps) * (1.0 - eps):
            z = 0
        else:
            xbar, _, _ = _scalar.xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v)
            r1, r2u, r2d = _scalar.limiting_returns_at(
                eps, xbar, w, alpha, r_s, r_b, u, d, delta, v)
            r2 = r2u if gen.random() < delta else r2d
            z = 1 if r1 >= r2 else 0
        n1 += z
        tt = t + 1
        if tt % stride == 0 and tt != T:
            ts[k] = tt
            n1s[k] = n1
            k += 1
    ts[k] = T
    n1s[k] = n1
    k += 1
    return ts[:k], n1s[:k]


def _initial_n1(eps0: float, n0: int) -> int:
    if not 0 < eps0 < 1:
        raise ValueError(f"eps0 must lie in (0, 1), got {eps0}")
    if n0 < 2:
        raise ValueError(f"n0 must be at least 2, got {n0}")
    return min(max(int(round(eps0 * n0)), 1), n0 - 1)


def simulate(params: MarketParams, kind: str, eps0: float, n0: int, T: int,
             seed, stride: int = 1,
             observation_model: str = OBS_ANALYTIC) -> Trajectory:
    """Run one trajectory on the asymptotic return formulas.

    Deterministic given (params, seed); eps is recorded every stride rounds
    plus the initial and final states.
    """
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    n1_0 = _initial_n1(eps0, n0)
    gen = make_rng(seed, (DOMAIN_TRAJECTORY,))
    args = params.as_tuple()
    if kind == KIND_AVERAGE:
        ts, n1s = _run_average(gen, n1_0, n0, T, stride, *args, params.c_bar,
                               observation_model == OBS_SAMPLED)
    elif kind == KIND_RANDOM:
        if observation_model != OBS_ANALYTIC:
            raise ValueError("observation models apply to the average dynamics only")
        ts, n1s = _run_random(gen, n1_0, n0, T, stride, *args)
    else:
        raise ValueError(f"unknown dynamics kind {kind!r}")
    n = n0 + ts
    return Trajectory(
        kind=kind, mode="asymptotic", seed=seed, params=params, eps0=eps0,
        n0=n0, T=T, stride=stride, t=ts, n1=n1s, n2=n - n1s, eps=n1s / n,
        observation_model=observation_model,
    )


def _settle_round(gen, params: MarketParams, m1: int, m2: int):
    """Sample and settle one capped network; returns (R1, R2) per agent.

    Out-degrees of distinct lenders are independent binomials, so the round
    draws degrees first.  When nobody defaults (full repayment satisfies
    every budget) the claims follow from the degrees alone; otherwise the
    round materializes a graph conditioned on those degrees (uniform
    borrower subsets, exact by exchangeability) and iterates the fixed
    point on it.
    """
    m = m1 + m2
    eps_m = m1 / m
    dq = derive(params, eps_m)
    p = params.p_ss
    gross = 1 + params.r_b
    c1 = params.w / (m * p)
    c2 = params.alpha * params.w * (1 + eps_m) / (m * p * (1 - params.alpha) * (1 - eps_m))
    deg1 = gen.binomial(m2, p, size=m1)
    deg2 = gen.binomial(m2 - 1, p, size=m2)
    up = gen.random(m2) < params.delta
    K = np.where(up, dq.k_u, dq.k_d)
    v, y = params.v, dq.y

    claims2 = deg2 * (c2 * gross)
    resources = K + claims2 - v
    if resources.min() >= y - 1e-12 * y:
        # nobody defaults: X = y exactly, claims need degrees only
        claims1 = deg1 * (c1 * gross)
        R2 = resources - y
        np.maximum(R2, 0.0, out=R2)
        R1 = np.maximum(params.w * eps_m * (1 + params.r_s) + claims1 - v, 0.0)
        return R1, R2

    # default round: materialize the conditioned graph, hand the exact
    # solver a network whose weights match sampling at size m
    lender_parts: list[np.ndarray] = []
    borrower_parts: list[np.ndarray] = []
    others = np.arange(m2 - 1)
    for j in range(m2):
        dj = deg2[j]
        if dj:
            pick = gen.choice(others, size=dj, replace=False)
            pick += pick >= j  # skip the lender itself
            lender_parts.append(np.full(dj, m1 + j, dtype=np.int64))
            borrower_parts.append(m1 + pick)
    for i in range(m1):
        di = deg1[i]
        if di:
            lender_parts.append(np.full(di, i, dtype=np.int64))
            borrower_parts.append(m1 + gen.choice(m2, size=di, replace=False))
    empty = np.empty(0, dtype=np.int64)
    lender = np.concatenate(lender_parts) if lender_parts else empty
    borrower = np.concatenate(borrower_parts) if borrower_parts else empty
    group = np.empty(m, dtype=np.int8)
    group[:m1] = GROUP_RISK_FREE
    group[m1:] = GROUP_RISKY
    net = LiabilityNetwork(
        n=m, n1=m1, n2=m2, group=group, lender=lender, borrower=borrower,
        principal=np.where(lender < m1, c1, c2), eps_realized=eps_m,
    )
    shocks = ShockVector(up=up, k_u=dq.k_u, k_d=dq.k_d, K=K)
    out = solve_clearing_finite(net, shocks, params)
    return out.R1, out.R2


def simulate_finite(params: MarketParams, kind: str, eps0: float, n0: int,
                    T: int, seed, stride: int = 1, n_cap: int = 5000,
                    budget_s: float | None = None) -> Trajectory:
    """Full Monte Carlo: every round settles a freshly sampled network.

    The simulated network size is capped at n_cap (group sizes kept
    proportional to the true population); the contacted pair is drawn
    uniformly without replacement from the true population and reads its
    returns from the matching group pools.  A wall-clock budget, when set,
    truncates the run with truncated=True.
    """
    if kind not in (KIND_AVERAGE, KIND_RANDOM):
        raise ValueError(f"unknown dynamics kind {kind!r}")
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if n_cap < 2:
        raise ValueError(f"n_cap must be at least 2, got {n_cap}")
    n1 = _initial_n1(eps0, n0)
    gen = make_rng(seed, (DOMAIN_TRAJECTORY,))
    start = time.monotonic()
    ts = [0]
    n1s = [n1]
    truncated = False
    t_done = 0
    for t in range(T):
        if budget_s is not None and time.monotonic() - start > budget_s:
            truncated = True
            break
        n = n0 + t
        m = min(n, n_cap)
        m1 = min(max(int(round(m * n1 / n)), 1), m - 1)
        m2 = m - m1
        R1, R2 = _settle_round(gen, params, m1, m2)

        n2 = n - n1
        p11 = n1 * (n1 - 1) / (n * (n - 1))
        p22 = n2 * (n2 - 1) / (n * (n - 1))
        if kind == KIND_AVERAGE:
            eps_t = n1 / n
            zarg = (float(R1.mean()) - float(R2.mean())) * math.sqrt(
                params.c_bar * eps_t * (1 - eps_t))
            g = _scalar.norm_cdf(zarg)
            z = 1 if gen.random() < p11 + (1 - p11 - p22) * g else 0
        else:
            u1 = gen.random()
            if u1 < p11:
                z = 1
            elif u1 < p11 + p22:
                z = 0
            else:
                r1 = R1[gen.integers(m1)]
                r2 = R2[gen.integers(m2)]
                z = 1 if r1 >= r2 else 0
        n1 += z
        t_done = t + 1
        if t_done % stride == 0 and t_done != T:
            ts.append(t_done)
            n1s.append(n1)
    if not truncated or ts[-1] != t_done:
        ts.append(t_done)
        n1s.append(n1)
    ts = np.asarray(ts, dtype=np.int64)
    n1s = np.asarray(n1s, dtype=np.int64)
    n = n0 + ts
    return Trajectory(
        kind=kind, mode="finite", seed=seed, params=params, eps0=eps0,
        n0=n0, T=T, stride=stride, t=ts, n1=n1s, n2=n - n1s, eps=n1s / n,
        truncated=truncated,
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write (t, n1, n2, eps) rows; the comment header snapshots the run."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# kind = {traj.kind}\n")
        fh.write(f"# mode = {traj.mode}\n")
        fh.write(f"# seed = {_seed_repr(traj.seed)}\n")
        fh.write(f"# eps0 = {traj.eps0:.6g}\n")
        fh.write(f"# n0 = {traj.n0}\n")
        fh.write(f"# T = {traj.T}\n")
        fh.write(f"# stride = {traj.stride}\n")
        fh.write(f"# truncated = {int(traj.truncated)}\n")
        for name in ("w", "alpha", "r_s", "r_b", "u", "d", "delta", "v", "p_ss", "c_bar"):
            fh.write(f"# {name} = {getattr(traj.params, name):.6g}\n")
        fh.write("t,n1,n2,eps\n")
        for i in range(traj.t.shape[0]):
            fh.write(f"{traj.t[i]},{traj.n1[i]},{traj.n2[i]},{traj.eps[i]:.6g}\n")


def _seed_repr(seed) -> str:
    if isinstance(seed, np.random.SeedSequence):
        if seed.spawn_key:
            return f"{seed.entropy} / {list(seed.spawn_key)}"
        return str(seed.entropy)
    return str(seed)
