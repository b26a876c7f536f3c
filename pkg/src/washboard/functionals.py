"""Orbit functionals: singular quadratures, offset propagation, variances.

The nested integrals are never evaluated by brute-force double quadrature;
each one satisfies a small ODE system in the position variable, which an
adaptive solver integrates to well below the contract tolerances.  The
innermost exponent has integrable power singularities at the saddles, so
quadrature ranges are expected to stay a window-width away from them, and
the orbit itself is represented by the table's solver-dense callable when
available (its rows near the saddles come from the linear asymptotics).

Variance profiles are computed twice: as time integrals along the
deterministic path (Lyapunov form) and as position-space integrals.  The
two are related by an exact change of variables, so their agreement is a
sharp internal consistency oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .deterministic import OrbitTable, _vprime
from .params import ModelParams, ParameterError, TWO_PI

__all__ = [
    "QuadratureError",
    "NumericalConsistencyError",
    "TrappingError",
    "RhoProfile",
    "VarianceProfile",
    "sigma_functional",
    "rho_propagation",
    "sigma_r_profile",
    "sigma_y_profile",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach its tolerance."""


class NumericalConsistencyError(RuntimeError):
    """Two mathematically identical routes disagreed beyond tolerance."""


class TrappingError(RuntimeError):
    """An offset orbit crossed p=0: the initial offset was too large."""


def _solve(rhs, x_span, y0, rtol, name):
    sol = solve_ivp(rhs, x_span, y0, method="DOP853", rtol=rtol,
                    atol=rtol * 1e-4, dense_output=True)
    if not sol.success:
        raise QuadratureError(f"{name} quadrature failed at rtol={rtol:g}: {sol.message}")
    return sol


def sigma_functional(kind: str, n: int, table: OrbitTable,
                     x_start: float, x_end: float, rtol: float = 1e-10) -> float:
    """Nested orbit functional of order ``n`` between two positions.

    ``kind='r'`` integrates du/p(u) against the n-th power of the inner
    exponential weight exp(int V'/p^2); ``kind='y'`` is the doubly nested
    variant carrying an extra p(x)^n prefactor.  Deterministic to solver
    tolerance and independent of the table's grid refinement.
    """
    if n not in (1, 2):
        raise ParameterError(f"order n must be 1 or 2, got {n!r}")
    if kind not in ("r", "y"):
        raise ParameterError(f"kind must be 'r' or 'y', got {kind!r}")
    lo, hi = table.window
    if not (lo <= x_start <= hi and lo <= x_end <= hi):
        raise ParameterError(f"integration range outside table window [{lo:.6g}, {hi:.6g}]")
    if x_end < x_start:
        raise ParameterError("x_end must be >= x_start")
    if x_end == x_start:
        return 0.0

    p = table.orbit_callable()
    a = table.alpha_used

    if kind == "r":
        def rhs(x, y):
            px = p(x)
            j = _vprime(x, a) / (px * px)
            return (j, math.exp(-n * y[0]) / px)

        sol = _solve(rhs, (x_start, x_end), (0.0, 0.0), rtol, "sigma_r")
        j_end, r_end = sol.y[0, -1], sol.y[1, -1]
        return float(math.exp(n * j_end) * r_end)

    # kind == "y": moments of the inner weight W accumulated alongside it.
    def rhs(x, y):
        px = p(x)
        j = _vprime(x, a) / (px * px)
        w = y[1]
        e_minus = math.exp(-n * y[0]) / px
        out = [j, math.exp(y[0]) / (px * px), e_minus, w * e_minus]
        if n == 2:
            out.append(w * w * e_minus)
        return out

    y0 = [0.0] * (4 if n == 1 else 5)
    sol = _solve(rhs, (x_start, x_end), y0, rtol, "sigma_y")
    p_end = float(p(x_end))
    if n == 1:
        _, w, m0, m1 = sol.y[:, -1]
        return float(p_end * (w * m0 - m1))
    _, w, m0, m1, m2 = sol.y[:, -1]
    return float(p_end**2 * (w * w * m0 - 2.0 * w * m1 + m2))


@dataclass
class RhoProfile:
    """Offset p(x) - p*(x) between a nearby orbit and the heteroclinic."""

    xs: np.ndarray
    rho: np.ndarray
    rho0: float

    @property
    def ratio(self) -> float:
        """|rho at the far end| over |rho at the near end|."""
        return abs(self.rho[-1]) / abs(self.rho[0])


def rho_propagation(table_star: OrbitTable, rho0: float,
                    x_start: float, x_end: float, n_out: int = 513) -> RhoProfile:
    """Propagate a small initial offset from the heteroclinic orbit.

    The offset orbit starts at ``(x_start, p*(x_start) + rho0)`` and is
    integrated with the same orbit equation; the returned profile is the
    pointwise difference from the connection.  ``|rho0|`` is capped at
    one percent of the launch distance from the left saddle so the
    offset stays perturbative.
    """
    if table_star.kind != "heteroclinic":
        raise ParameterError("rho propagation needs a heteroclinic reference table")
    lo, hi = table_star.window
    if not (lo < x_start < x_end < hi):
        raise ParameterError("need window-left < x_start < x_end < window-right")
    eta_loc = x_start - lo
    if abs(rho0) > 0.01 * eta_loc:
        raise ParameterError(
            f"|rho0|={abs(rho0):.3e} exceeds 1% of the saddle distance {eta_loc:.3e}"
        )

    p_star = table_star.orbit_callable()
    g, a = table_star.gamma_used, table_star.alpha_used

    def rhs(x, y):
        return (-g - _vprime(x, a) / y[0],)

    def ev_trap(x, y):
        return y[0]

    ev_trap.terminal = True
    ev_trap.direction = -1.0

    sol = solve_ivp(rhs, (x_start, x_end), (float(p_star(x_start)) + rho0,),
                    method="DOP853", rtol=1e-12, atol=1e-14,
                    dense_output=True, events=ev_trap)
    if sol.t_events[0].size:
        raise TrappingError(
            f"offset orbit crossed p=0 at x={sol.t_events[0][0]:.6f}: offset too large"
        )
    if not sol.success:
        raise RuntimeError(f"offset orbit integration failed: {sol.message}")

    xs = np.linspace(x_start, x_end, n_out)
    rho = sol.sol(xs)[0] - np.asarray(p_star(xs), dtype=float)
    return RhoProfile(xs=xs, rho=rho, rho0=rho0)


@dataclass
class VarianceProfile:
    """Linearized-fluctuation variance along one deterministic transit."""

    ts: np.ndarray
    xs: np.ndarray
    sigma2: np.ndarray          # time-integral route, per sample time
    sigma2_end_time: float
    sigma2_end_space: float
    rel_mismatch: float

    @property
    def sup_sigma(self) -> float:
        return float(math.sqrt(np.max(self.sigma2)))


def _profile_common(params: ModelParams, table: OrbitTable, x_span):
    x_start, x_end = float(x_span[0]), float(x_span[1])
    lo, hi = table.window
    if not (lo <= x_start < x_end <= hi):
        raise ParameterError("x_span must be increasing and inside the table window")
    p = table.orbit_callable()
    a = table.alpha_used
    g = params.gamma
    if table._dense is not None:
        # Solver-grade orbit: its slope equals the orbit-equation RHS.
        def omega(x):
            return -g - _vprime(x, a) / p(x)
    else:
        d = table.interpolator().derivative()

        def omega(x):
            return float(d(x))
    return x_start, x_end, p, omega


def _transit(p, x_start, x_end, extra_rhs, y0, rtol, name):
    """Integrate d/dt [x, extra...] until the position reaches x_end."""

    def rhs(t, y):
        px = p(y[0])
        return (px, *extra_rhs(y, px))

    def ev_arrive(t, y):
        return y[0] - x_end

    ev_arrive.terminal = True
    ev_arrive.direction = 1.0

    # Transit time is logarithmic in the saddle distances; 1e4 is generous.
    sol = solve_ivp(rhs, (0.0, 1e4), (x_start, *y0), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-4, dense_output=True,
                    events=ev_arrive)
    if not sol.success or not sol.t_events[0].size:
        raise QuadratureError(f"{name}: transit integration failed or never arrived")
    return sol, float(sol.t_events[0][0])


def sigma_r_profile(params: ModelParams, table: OrbitTable, x_span,
                    rtol: float = 1e-11, mismatch_tol: float = 1e-6,
                    n_out: int = 257) -> VarianceProfile:
    """Variance of the momentum-like linearized fluctuation along a transit.

    Computed as a time integral along the deterministic path and,
    independently, as a position-space integral; the exact
    change-of-variables identity between the two must hold to
    ``mismatch_tol`` or a consistency error is raised.
    """
    x_start, x_end, p, omega = _profile_common(params, table, x_span)
    g, eps2 = params.gamma, params.epsilon**2

    def extra(y, px):
        return (1.0 - 2.0 * (omega(y[0]) + g) * y[1],)

    sol, t_end = _transit(p, x_start, x_end, extra, (0.0,), rtol, "sigma_r time route")
    ts = np.linspace(0.0, t_end, n_out)
    dense = sol.sol(ts)
    xs, i_vals = dense[0], dense[1]
    sigma2 = eps2 * np.maximum(i_vals, 0.0)
    sigma2_time = eps2 * float(sol.sol(t_end)[1])

    if table._dense is not None:
        a = table.alpha_used

        def rhs_space(x, y):
            px = p(x)
            j = _vprime(x, a) / (px * px)
            return (j, math.exp(-2.0 * y[0]) / px)

        s = _solve(rhs_space, (x_start, x_end), (0.0, 0.0), rtol, "sigma_r space route")
        sigma2_space = eps2 * math.exp(2.0 * s.y[0, -1]) * s.y[1, -1]
    else:
        # Ratio form driven by the interpolant's own slope, so the identity
        # holds for the tabulated orbit exactly.
        def rhs_space(x, y):
            px = p(x)
            return (1.0 / px, px * math.exp(2.0 * g * y[0]))

        s = _solve(rhs_space, (x_start, x_end), (0.0, 0.0), rtol, "sigma_r space route")
        d_end, q_end = s.y[0, -1], s.y[1, -1]
        p_end = float(p(x_end))
        sigma2_space = eps2 * math.exp(-2.0 * g * d_end) * q_end / (p_end * p_end)

    rel = abs(sigma2_time - sigma2_space) / max(abs(sigma2_space), 1e-300)
    if rel > mismatch_tol:
        raise NumericalConsistencyError(
            f"sigma_r time/space mismatch {rel:.3e} exceeds {mismatch_tol:g}"
        )
    return VarianceProfile(ts=ts, xs=xs, sigma2=sigma2,
                           sigma2_end_time=sigma2_time,
                           sigma2_end_space=sigma2_space, rel_mismatch=rel)


def sigma_y_profile(params: ModelParams, table: OrbitTable, x_span,
                    rtol: float = 1e-12, mismatch_tol: float = 1e-6,
                    n_out: int = 257) -> VarianceProfile:
    """Variance of the position-like linearized fluctuation along a transit.

    Time route: joint covariance of the (position, momentum) fluctuation
    pair evolved by the Lyapunov equations.  Space route: the doubly
    nested position integral.  Same consistency contract as
    :func:`sigma_r_profile`.
    """
    x_start, x_end, p, omega = _profile_common(params, table, x_span)
    g, eps2 = params.gamma, params.epsilon**2

    def extra(y, px):
        w = omega(y[0])
        p11, p12, p22 = y[1], y[2], y[3]
        return (2.0 * (w * p11 + p12), p22 - g * p12,
                -2.0 * (w + g) * p22 + eps2)

    sol, t_end = _transit(p, x_start, x_end, extra, (0.0, 0.0, 0.0), rtol,
                          "sigma_y time route")
    ts = np.linspace(0.0, t_end, n_out)
    dense = sol.sol(ts)
    xs, p11 = dense[0], dense[1]
    sigma2 = np.maximum(p11, 0.0)
    sigma2_time = float(sol.sol(t_end)[1])

    if table._dense is not None:
        a = table.alpha_used

        def rhs_space(x, y):
            px = p(x)
            j = _vprime(x, a) / (px * px)
            w = y[1]
            e_minus = math.exp(-2.0 * y[0]) / px
            return (j, math.exp(y[0]) / (px * px), e_minus, w * e_minus,
                    w * w * e_minus)

        s = _solve(rhs_space, (x_start, x_end), (0.0,) * 5, rtol, "sigma_y space route")
        _, w, m0, m1, m2 = s.y[:, -1]
        p_end = float(p(x_end))
        sigma2_space = eps2 * p_end**2 * (w * w * m0 - 2.0 * w * m1 + m2)
    else:
        # States: transit time D, inner weight K, and moments N_j of K.
        def rhs_space(x, y):
            px = p(x)
            grow = math.exp(2.0 * g * y[0])
            kk = y[1]
            return (1.0 / px, math.exp(-g * y[0]) / px**3,
                    px * grow, px * grow * kk, px * grow * kk * kk)

        s = _solve(rhs_space, (x_start, x_end), (0.0,) * 5, rtol, "sigma_y space route")
        _, k_end, n0, n1, n2 = s.y[:, -1]
        p_end = float(p(x_end))
        sigma2_space = eps2 * p_end**2 * (k_end * k_end * n0 - 2.0 * k_end * n1 + n2)

    rel = abs(sigma2_time - sigma2_space) / max(abs(sigma2_space), 1e-300)
    if rel > mismatch_tol:
        raise NumericalConsistencyError(
            f"sigma_y time/space mismatch {rel:.3e} exceeds {mismatch_tol:g}"
        )
    return VarianceProfile(ts=ts, xs=xs, sigma2=sigma2,
                           sigma2_end_time=sigma2_time,
                           sigma2_end_space=sigma2_space, rel_mismatch=rel)
