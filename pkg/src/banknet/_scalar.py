"""Scalar asymptotic formulas shared by the public API and the numba kernels.

Everything here is njit-compiled once (cached) and safe to call from other
jitted code. The independent iterative oracle lives in clearing.py on purpose
and must not call into this module.
"""

import math

from numba import njit

NO_DEFAULT = 0
SHOCK_DEFAULT = 1
ALL_DEFAULT = 2


@njit(cache=True, nogil=True)
def derived_values(eps, w, alpha, r_b, u, d, delta):
    w_tilde = w * (1.0 + eps) / (1.0 - alpha)
    y = w * (eps + alpha) * (1.0 + r_b) / (1.0 - alpha)
    c_eps = alpha * (1.0 + eps) / (alpha + eps)
    k_u = w * (1.0 + eps) * (1.0 + u)
    k_d = w * (1.0 + eps) * (1.0 + d)
    return w_tilde, y, c_eps, k_u, k_d


@njit(cache=True, nogil=True)
def xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v):
    """Largest solution of x = E(min{K + c_eps x - v, y})^+ as (x, P_d, regime).

    The map is piecewise linear in x; cases are ordered from the largest
    candidate down, so the first consistent one is the maximal fixed point.
    Exact threshold ties resolve to the earlier (higher-x) case.
    """
    _, y, c, k_u, k_d = derived_values(eps, w, alpha, r_b, u, d, delta)
    eta = 1e-12 * (y if y > 1.0 else 1.0)
    # both shock branches repay in full
    if k_d + c * y - v >= y - eta:
        return y, 0.0, NO_DEFAULT
    # up branch repays y, down branch pays its interior value
    x = (delta * y + (1.0 - delta) * (k_d - v)) / (1.0 - (1.0 - delta) * c)
    if k_u + c * x - v >= y - eta and k_d + c * x - v >= -eta:
        x = min(max(x, 0.0), y)
        return x, 1.0 - delta, SHOCK_DEFAULT
    # up branch repays y, down branch wiped out
    x = delta * y
    if k_u + c * x - v >= y - eta and k_d + c * x - v <= eta:
        return x, 1.0 - delta, SHOCK_DEFAULT
    # both branches interior; no solution on this piece when c = 1
    if c < 1.0 - 1e-14:
        ew = delta * k_u + (1.0 - delta) * k_d
        x = (ew - v) / (1.0 - c)
        if x >= -eta and k_u + c * x - v <= y + eta and k_d + c * x - v >= -eta:
            x = min(max(x, 0.0), y)
            return x, 1.0, ALL_DEFAULT
    # up branch interior, down branch wiped out
    x = delta * (k_u - v) / (1.0 - delta * c)
    if (k_u + c * x - v >= -eta and k_u + c * x - v <= y + eta
            and k_d + c * x - v <= eta):
        x = min(max(x, 0.0), y)
        return x, 1.0, ALL_DEFAULT
    # nothing can be paid
    return 0.0, 1.0, ALL_DEFAULT


@njit(cache=True, nogil=True)
def limiting_returns_at(eps, xbar, w, alpha, r_s, r_b, u, d, delta, v):
    _, y, c, k_u, k_d = derived_values(eps, w, alpha, r_b, u, d, delta)
    r1 = w * eps * (1.0 + r_s) + (1.0 - alpha) * (1.0 - eps) / (alpha + eps) * xbar - v
    r2u = k_u + c * xbar - v - y
    r2d = k_d + c * xbar - v - y
    return max(r1, 0.0), max(r2u, 0.0), max(r2d, 0.0)


@njit(cache=True, nogil=True)
def phi_pair(eps, w, alpha, r_s, r_b, u, d, delta, v):
    """Expected per-agent surpluses (phi1, phi2); phi2 is vacuous at eps = 1."""
    xbar, _, _ = xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v)
    r1, r2u, r2d = limiting_returns_at(eps, xbar, w, alpha, r_s, r_b, u, d, delta, v)
    return r1, delta * r2u + (1.0 - delta) * r2d


@njit(cache=True, nogil=True)
def norm_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@njit(cache=True, nogil=True)
def g_average_at(eps, w, alpha, r_s, r_b, u, d, delta, v, c_bar):
    """Probability that a mixed-pair newcomer adopts the risk-free strategy."""
    if eps <= 0.0 or eps >= 1.0:
        # inert convention: the drift multiplies this by eps(1-eps) = 0
        return 0.5
    phi1, phi2 = phi_pair(eps, w, alpha, r_s, r_b, u, d, delta, v)
    return norm_cdf((phi1 - phi2) * math.sqrt(c_bar * eps * (1.0 - eps)))


@njit(cache=True, nogil=True)
def expected_g_random_at(eps, w, alpha, r_s, r_b, u, d, delta, v):
    """E[1{R1 >= R2}] over the shock; ties prefer the risk-free strategy."""
    xbar, _, _ = xbar_piecewise(eps, w, alpha, r_b, u, d, delta, v)
    r1, r2u, r2d = limiting_returns_at(eps, xbar, w, alpha, r_s, r_b, u, d, delta, v)
    gu = 1.0 if r1 >= r2u else 0.0
    gd = 1.0 if r1 >= r2d else 0.0
    return delta * gu + (1.0 - delta) * gd
