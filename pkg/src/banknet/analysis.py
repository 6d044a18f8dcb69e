"""Deterministic side of the dynamics: drifts, equilibria, limit rules, ODE.

The mean drift of either process factors as eps*(1-eps)*(2q-1) where q is
the mixed-pair win probability of the risk-free side.  Equilibrium finding
for the average dynamics reduces to locating sign changes of the payoff
gap phi1 - phi2, which is piecewise smooth with kinks where the settlement
regime or a positive-part clip switches; the random dynamics has a
piecewise-constant comparison term and only boundary equilibria.
"""

from __future__ import annotations

import logging
from bisect import insort
from dataclasses import dataclass

import numpy as np

from . import _scalar
from .model import MarketParams

logger = logging.getLogger(__name__)

EQ_ALL_RISKY = "all_risky"          # eps* = 0: everyone invests in the market
EQ_ALL_RISK_FREE = "all_risk_free"  # eps* = 1: everyone lends risk-free
EQ_MIXED = "mixed"

STABLE = "stable"
UNSTABLE = "unstable"

ROOT_TOL = 1e-6
GRID_POINTS = 1001
_PROBE = 1e-7


@dataclass(frozen=True, slots=True)
class Equilibrium:
    eps_star: float
    kind: str        # all_risky / all_risk_free / mixed
    stability: str   # stable / unstable
    phi_gap: float | None  # phi1 - phi2 at eps_star; None where phi2 is absent


@dataclass(frozen=True, slots=True)
class LimitPrediction:
    predicted: Equilibrium | None
    rule: str | None               # 1a/1b/1c or 2a/2b/2c; None when no clause applies
    approx_eps_star: float | None  # closed-form root estimate, clause 1c only


def _gap(params: MarketParams, eps: float) -> float:
    phi1, phi2 = _scalar.phi_pair(eps, *params.as_tuple())
    return phi1 - phi2


def drift_average(params: MarketParams, eps: float) -> float:
    """Mean one-step change of eps under the average dynamics, times (t+n0+1)."""
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if eps == 0 or eps == 1:
        return 0.0
    g = _scalar.g_average_at(eps, *params.as_tuple(), params.c_bar)
    return eps * (1 - eps) * (2 * g - 1)


def drift_random(params: MarketParams, eps: float) -> float:
    """Mean one-step change of eps under the random dynamics, times (t+n0+1)."""
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if eps == 0 or eps == 1:
        return 0.0
    eg = _scalar.expected_g_random_at(eps, *params.as_tuple())
    return eps * (1 - eps) * (2 * eg - 1)


def _comparison(params: MarketParams, kind: str):
    # sign(drift) on (0,1) equals sign of the returned function
    if kind == "average":
        return lambda e: _gap(params, e)
    if kind == "random":
        return lambda e: 2 * _scalar.expected_g_random_at(e, *params.as_tuple()) - 1
    raise ValueError(f"unknown dynamics kind {kind!r}")


def _piece_signature(params: MarketParams, eps: float) -> tuple:
    w, alpha, r_s, r_b, u, d, delta, v = params.as_tuple()
    xbar, _, regime = _scalar.xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v)
    r1, r2u, r2d = _scalar.limiting_returns_at(
        eps, xbar, w, alpha, r_s, r_b, u, d, delta, v)
    return (regime, r1 > 0, r2u > 0, r2d > 0)


def _grid_with_breakpoints(params: MarketParams) -> list[float]:
    """Uniform grid refined with the kinks of the piecewise payoff gap."""
    grid = list(np.linspace(0.0, 1.0, GRID_POINTS))
    sigs = [_piece_signature(params, e) for e in grid]
    for i in range(GRID_POINTS - 1):
        if sigs[i] == sigs[i + 1]:
            continue
        lo, hi = grid[i], grid[i + 1]
        s_lo = sigs[i]
        for _ in range(50):  # bisect the signature change to machine precision
            mid = 0.5 * (lo + hi)
            if _piece_signature(params, mid) == s_lo:
                lo = mid
            else:
                hi = mid
        insort(grid, lo)
        insort(grid, hi)
    return grid


def _bisect_root(f, lo: float, hi: float, f_lo: float) -> float:
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 1e-14:
            break
    return 0.5 * (lo + hi)


def _boundary_equilibria(cmp_fn) -> list[Equilibrium]:
    out = []
    slope0 = cmp_fn(_PROBE)
    out.append(Equilibrium(0.0, EQ_ALL_RISKY,
                           STABLE if slope0 <= 0 else UNSTABLE, None))
    slope1 = cmp_fn(1 - _PROBE)
    out.append(Equilibrium(1.0, EQ_ALL_RISK_FREE,
                           STABLE if slope1 >= 0 else UNSTABLE, None))
    return out


def find_equilibria(params: MarketParams, kind: str = "average") -> list[Equilibrium]:
    """All equilibria of the drift ODE, endpoints always included.

    Interior roots exist only for the average dynamics (the random
    comparison term is piecewise constant in {0, 1-delta, 1} and cannot
    vanish); they are bracketed on the refined grid and bisected.
    """
    cmp_fn = _comparison(params, kind)
    lo_eq, hi_eq = _boundary_equilibria(cmp_fn)
    interior: list[float] = []
    if kind == "average":
        grid = _grid_with_breakpoints(params)
        vals = [cmp_fn(e) for e in grid]
        for i in range(len(grid) - 1):
            a, b = grid[i], grid[i + 1]
            fa, fb = vals[i], vals[i + 1]
            if fa == 0.0 and 0 < a < 1:
                interior.append(a)
            elif fa * fb < 0:
                interior.append(_bisect_root(cmp_fn, a, b, fa))
        if vals[-1] == 0.0 and 0 < grid[-1] < 1:
            interior.append(grid[-1])
    roots: list[float] = []
    for r in sorted(interior):
        if not roots or r - roots[-1] > 1e-9:
            roots.append(r)
    eqs = [lo_eq]
    for r in roots:
        left = cmp_fn(max(r - _PROBE, 0.0))
        right = cmp_fn(min(r + _PROBE, 1.0))
        stab = STABLE if (left > 0 and right < 0) else UNSTABLE
        eqs.append(Equilibrium(r, EQ_MIXED, stab, _gap(params, r)))
    eqs.append(hi_eq)
    return eqs


def _grid_all(params: MarketParams, pred) -> bool:
    # "for all eps" hypotheses, checked on the refined grid; eps = 1 is
    # excluded (phi2 is absent there) and replaced by a near-boundary probe
    grid = [e for e in _grid_with_breakpoints(params) if e < 1.0]
    grid.append(1.0 - 1e-6)
    return all(pred(e) for e in grid)


def _pure(eps_star: float, stability: str = STABLE) -> Equilibrium:
    kind = EQ_ALL_RISKY if eps_star == 0.0 else EQ_ALL_RISK_FREE
    return Equilibrium(eps_star, kind, stability, None)


def predict_limit(params: MarketParams, kind: str = "average") -> LimitPrediction:
    """Classify the almost-sure limit by the closed-form rules when one applies.

    Average rules (all gated on w(1+d) > v) are tried in order: rr_bar >
    r_b with the payoff gap negative everywhere -> 0; gap positive
    everywhere -> 1; r_b > rr_bar > r_s without an everywhere-positive gap
    -> the unique interior root, with the closed-form estimate
    (r_b - rr_bar)/(rr_bar - r_s).  Random rules check the constant value
    of the comparison probability.  Hypotheses are evaluated at the given
    delta; when none holds the prediction is deferred (rule None).
    """
    w, alpha, r_s, r_b, u, d, delta, v = params.as_tuple()
    rr_bar = u * delta + d * (1 - delta)
    wealth_ok = w * (1 + d) > v
    if kind == "average":
        if wealth_ok and rr_bar > r_b > r_s and \
                _grid_all(params, lambda e: _gap(params, e) < 0):
            return LimitPrediction(_pure(0.0), "1a", None)
        if wealth_ok and _grid_all(params, lambda e: _gap(params, e) > 0):
            return LimitPrediction(_pure(1.0), "1b", None)
        if wealth_ok and r_b > rr_bar > r_s:
            mixed = [e for e in find_equilibria(params, "average")
                     if e.kind == EQ_MIXED]
            if len(mixed) == 1:
                approx = (r_b - rr_bar) / (rr_bar - r_s)
                return LimitPrediction(mixed[0], "1c", approx)
        return LimitPrediction(None, None, None)
    if kind == "random":
        def eg(e):
            return _scalar.expected_g_random_at(e, *params.as_tuple())
        if delta > 0.5 and wealth_ok and u > r_b and r_s > d and \
                _grid_all(params, lambda e: abs(eg(e) - (1 - delta)) < 1e-12):
            return LimitPrediction(_pure(0.0), "2c", None)
        if _grid_all(params, lambda e: eg(e) == 0.0) or (
                delta > 0.5 and
                _grid_all(params, lambda e: abs(eg(e) - (1 - delta)) < 1e-12)):
            return LimitPrediction(_pure(0.0), "2a", None)
        if _grid_all(params, lambda e: eg(e) == 1.0):
            return LimitPrediction(_pure(1.0), "2b", None)
        return LimitPrediction(None, None, None)
    raise ValueError(f"unknown dynamics kind {kind!r}")


@dataclass(frozen=True, slots=True)
class ODEPath:
    tau: np.ndarray
    eps: np.ndarray
    clamped: int  # steps whose endpoint had to be projected back into [0,1]


def integrate_ode(params: MarketParams, kind: str, eps0: float,
                  horizon: float, dt: float) -> ODEPath:
    """Classic fourth-order integration of the drift ODE on [0, horizon].

    In the time scale of the ODE, T rounds from population n0 span
    ln((n0+T)/n0).  The state is projected back into [0,1] after each
    step; projections are counted and logged.
    """
    if not 0 <= eps0 <= 1:
        raise ValueError(f"eps0 must lie in [0, 1], got {eps0}")
    if dt <= 0 or horizon < 0:
        raise ValueError("horizon must be >= 0 and dt > 0")
    if kind not in ("average", "random"):
        raise ValueError(f"unknown dynamics kind {kind!r}")
    f = drift_average if kind == "average" else drift_random

    def f_clip(x):
        return f(params, min(max(x, 0.0), 1.0))

    n_steps = int(np.ceil(horizon / dt - 1e-12)) if horizon > 0 else 0
    tau = np.empty(n_steps + 1)
    eps = np.empty(n_steps + 1)
    tau[0], eps[0] = 0.0, eps0
    clamped = 0
    x = eps0
    t = 0.0
    for i in range(n_steps):
        h = min(dt, horizon - t)
        k1 = f_clip(x)
        k2 = f_clip(x + 0.5 * h * k1)
        k3 = f_clip(x + 0.5 * h * k2)
        k4 = f_clip(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if x < 0.0 or x > 1.0:
            clamped += 1
            x = min(max(x, 0.0), 1.0)
        t += h
        tau[i + 1], eps[i + 1] = t, x
    if clamped:
        logger.warning("ODE state projected back into [0,1] on %d steps", clamped)
    return ODEPath(tau, eps, clamped)


def nearest_stable(eqs: list[Equilibrium], eps_final: float) -> Equilibrium:
    """The stable equilibrium closest to a trajectory endpoint."""
    stable = [e for e in eqs if e.stability == STABLE]
    pool = stable if stable else eqs
    return min(pool, key=lambda e: abs(e.eps_star - eps_final))


def equilibria_to_csv(params: MarketParams, eqs: list[Equilibrium], path,
                      clause: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("eps_star,kind,stability,phi1,phi2,clause\n")
        for e in eqs:
            phi1, phi2 = _scalar.phi_pair(e.eps_star, *params.as_tuple())
            phi2_txt = "" if e.eps_star == 1.0 else f"{phi2:.6g}"
            fh.write(f"{e.eps_star:.6g},{e.kind},{e.stability},"
                     f"{phi1:.6g},{phi2_txt},{clause or ''}\n")
