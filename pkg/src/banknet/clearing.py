"""Settlement solvers: finite clearing vectors and the asymptotic fixed point.

Two independent routes compute the asymptotic expected clearing value:
solve_xbar_closed_form (piecewise enumeration) and solve_xbar_iterative
(monotone iteration, plain Python). They are kept separate so each can act
as an oracle for the other; do not merge them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _scalar
from .model import (GROUP_RISK_FREE, LiabilityNetwork, MarketParams,
                    ShockVector, derive)

REGIME_NAMES = {
    _scalar.NO_DEFAULT: "NoDefault",
    _scalar.SHOCK_DEFAULT: "ShockDefault",
    _scalar.ALL_DEFAULT: "AllDefault",
}

MAX_ITERATIONS = 1_000_000


@dataclass(frozen=True, slots=True)
class FiniteClearingOutcome:
    """Converged clearing state of one sampled network."""

    X: np.ndarray          # cleared amount per risky agent, in [0, y]
    defaults: np.ndarray   # bool per risky agent, X_i < y
    P_d: float             # defaulting fraction of risky agents
    R1: np.ndarray         # surplus per risk-free agent
    R2: np.ndarray         # surplus per risky agent
    iterations: int
    residual: float        # max fixed-point violation at return


@dataclass(frozen=True, slots=True)
class AsymptoticOutcome:
    """Limit of the clearing system at fixed eps."""

    x_bar: float
    P_d: float             # 0, 1 - delta, or 1
    regime: str            # NoDefault / ShockDefault / AllDefault
    phi1: float
    phi2: float | None     # None at eps = 1 (no risky agents remain)
    claims_g1: float
    claims_g2: float


@dataclass(frozen=True, slots=True)
class LimitingReturns:
    r1: float
    r2_u: float
    r2_d: float


def solve_clearing_finite(net: LiabilityNetwork, shocks: ShockVector,
                          params: MarketParams, tol: float | None = None,
                          x_init: np.ndarray | None = None) -> FiniteClearingOutcome:
    """Maximal clearing vector of the sampled network by monotone iteration.

    Starts from full repayment (X = y) and applies
    X <- min{(K + claims(X) - v)^+, y} until the sup-norm change drops
    below tol; claims route each payment pro rata, X_j * L_ji (1+r_b) / y
    to creditor i.  x_init (componentwise >= the fixed point) can replace
    the start for perturbed-start validation.
    """
    if shocks.n2 != net.n2:
        raise ValueError(f"shock vector has {shocks.n2} entries for {net.n2} risky agents")
    dq = derive(params, net.eps_realized)
    y = dq.y
    if abs(shocks.k_u - dq.k_u) > 1e-9 * max(1.0, dq.k_u):
        raise ValueError("shock magnitudes were sampled at a different eps than the network")
    if tol is None:
        tol = 1e-9 * y

    pi = net.principal * (1 + params.r_b) / y
    jb = net.borrower - net.n1
    K = shocks.K
    v = params.v

    if x_init is None:
        X = np.full(net.n2, y)
    else:
        X = np.asarray(x_init, dtype=float).copy()
        if X.shape != (net.n2,):
            raise ValueError(f"x_init must have shape ({net.n2},), got {X.shape}")

    iterations = 0
    while True:
        claims = np.bincount(net.lender, weights=X[jb] * pi, minlength=net.n)
        X_new = np.minimum(np.maximum(K + claims[net.n1:] - v, 0.0), y)
        step = float(np.max(np.abs(X_new - X))) if net.n2 else 0.0
        X = X_new
        iterations += 1
        if step <= tol:
            break
        if iterations >= MAX_ITERATIONS:
            raise RuntimeError(
                f"clearing iteration did not converge within {MAX_ITERATIONS} sweeps, "
                f"residual {step:.3e}"
            )

    claims = np.bincount(net.lender, weights=X[jb] * pi, minlength=net.n)
    residual = float(np.max(np.abs(
        np.minimum(np.maximum(K + claims[net.n1:] - v, 0.0), y) - X
    ))) if net.n2 else 0.0
    pay_tol = max(10 * tol, 1e-9 * y)
    defaults = X < y - pay_tol
    R2 = np.maximum(K + claims[net.n1:] - v - y, 0.0)
    R1 = np.maximum(
        params.w * net.eps_realized * (1 + params.r_s) + claims[:net.n1] - v, 0.0
    )
    return FiniteClearingOutcome(
        X=X, defaults=defaults, P_d=float(defaults.mean()),
        R1=R1, R2=R2, iterations=iterations, residual=residual,
    )


def solve_xbar_iterative(params: MarketParams, eps: float,
                         tol: float | None = None) -> float:
    """Largest fixed point of x -> E(min{K + c_eps x - v, y})^+ by iteration.

    Monotone descent from x = y; the map contracts with modulus c_eps, so
    the stop rule uses the bound |x_k - x*| <= step * c/(1-c).  This is the
    independent oracle for solve_xbar_closed_form and deliberately shares no
    code with it.
    """
    if not 0 <= eps < 1:
        raise ValueError(f"eps must lie in [0, 1), got {eps}")
    w, alpha, delta, v = params.w, params.alpha, params.delta, params.v
    y = w * (eps + alpha) * (1 + params.r_b) / (1 - alpha)
    c = alpha * (1 + eps) / (alpha + eps)
    k_u = w * (1 + eps) * (1 + params.u)
    k_d = w * (1 + eps) * (1 + params.d)
    if tol is None:
        tol = 1e-9 * y

    x = y
    for _ in range(MAX_ITERATIONS):
        pay_u = max(min(k_u + c * x - v, y), 0.0)
        pay_d = max(min(k_d + c * x - v, y), 0.0)
        x_new = delta * pay_u + (1 - delta) * pay_d
        step = abs(x - x_new)
        x = x_new
        # contraction bound when c < 1; plain Cauchy stop at c = 1 (eps = 0)
        if step * c <= tol * (1 - c) or (c >= 1 and step <= tol):
            return x
    raise RuntimeError(f"fixed-point iteration exceeded {MAX_ITERATIONS} steps at eps={eps}")


def solve_xbar_closed_form(params: MarketParams, eps: float) -> AsymptoticOutcome:
    """Asymptotic clearing value, default probability, regime and payoffs.

    Enumerates the linear pieces of the one-dimensional fixed-point map from
    the largest candidate down; threshold ties resolve to the higher-x piece.
    """
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    x_bar, p_d, regime = _scalar.xbar_piecewise(
        eps, params.w, params.alpha, params.r_b, params.u, params.d,
        params.delta, params.v,
    )
    r1, r2u, r2d = _scalar.limiting_returns_at(
        eps, x_bar, params.w, params.alpha, params.r_s, params.r_b,
        params.u, params.d, params.delta, params.v,
    )
    dq = derive(params, eps)
    phi1 = r1
    phi2 = None if eps >= 1 else params.delta * r2u + (1 - params.delta) * r2d
    return AsymptoticOutcome(
        x_bar=x_bar, P_d=p_d, regime=REGIME_NAMES[regime],
        phi1=phi1, phi2=phi2,
        claims_g1=(1 - params.alpha) * (1 - eps) / (params.alpha + eps) * x_bar,
        claims_g2=dq.c_eps * x_bar,
    )


def limiting_returns(params: MarketParams, eps: float, x_bar: float) -> LimitingReturns:
    """Limiting per-agent returns at a given asymptotic clearing value."""
    dq = derive(params, eps)
    if not 0 <= x_bar <= dq.y * (1 + 1e-12):
        raise ValueError(f"x_bar must lie in [0, y={dq.y:.6g}], got {x_bar}")
    r1, r2u, r2d = _scalar.limiting_returns_at(
        eps, x_bar, params.w, params.alpha, params.r_s, params.r_b,
        params.u, params.d, params.delta, params.v,
    )
    return LimitingReturns(r1=r1, r2_u=r2u, r2_d=r2d)


def expected_surplus(params: MarketParams, eps: float) -> tuple[float, float | None]:
    """(phi1, phi2) at eps; phi2 is None at eps = 1 where no risky agents remain."""
    out = solve_xbar_closed_form(params, eps)
    return out.phi1, out.phi2


def dump_outcome_csv(net: LiabilityNetwork, shocks: ShockVector,
                     outcome: FiniteClearingOutcome, path) -> None:
    """Write per-agent settlement results as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent_id", "group", "K", "X", "default", "surplus"])
        for i in range(net.n):
            if net.group[i] == GROUP_RISK_FREE:
                writer.writerow([i, "risk_free", "", "", "", f"{outcome.R1[i]:.6g}"])
            else:
                j = i - net.n1
                writer.writerow([
                    i, "risky", f"{shocks.K[j]:.6g}", f"{outcome.X[j]:.6g}",
                    int(outcome.defaults[j]), f"{outcome.R2[j]:.6g}",
                ])
