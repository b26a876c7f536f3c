"""Noiseless dynamics: phase-plane orbits, the critical tilt, orbit tables.

The unstable manifold of a saddle is launched with a small offset along
the expanding eigendirection and either stalls inside the well (locked),
passes the next saddle (running), or connects to it (critical).  The
critical tilt is found by bisection on that classification.  Heteroclinic
orbits are tabulated by integrating the first-order orbit equation

    dp/dx = -gamma - V'(x)/p

in position rather than time, since the time parameterization diverges
logarithmically at the saddles.  Each half of the connection is
integrated in its numerically stable direction (left half forward, right
half backward) so the table is solver-grade accurate all the way into the
saddle corners.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from .params import ModelParams, ParameterError, TWO_PI

__all__ = [
    "OrbitClass",
    "DetState",
    "DetPath",
    "OrbitTable",
    "ShootingError",
    "integrate_det",
    "classify_orbit",
    "critical_tilt",
    "heteroclinic_table",
    "omega_along",
    "orbit_ode_residuals",
    "riccati_residuals",
    "save_orbit",
    "load_orbit",
]

# Launch offset for unstable-manifold shooting: below the orbit-ODE
# tolerance impact, above rounding noise.
DELTA0 = 1e-8


class ShootingError(RuntimeError):
    """Orbit construction failed (bad bracket, stalled shot, mismatch)."""


class OrbitClass(enum.Enum):
    LOCKED = "locked"
    RUNNING = "running"
    CRITICAL = "critical"


def _x_alpha_cont(alpha: float) -> float:
    # Saddle-free continuation: for alpha >= 1 the shift saturates at pi/2.
    return math.asin(alpha) if alpha < 1.0 else 0.5 * math.pi


def _vprime(x, alpha: float):
    return -np.sin(x - _x_alpha_cont(alpha)) - alpha


@dataclass(frozen=True)
class DetState:
    """One point of a deterministic trajectory."""

    t: float
    x: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.x) and math.isfinite(self.p)):
            raise ValueError(f"non-finite deterministic state {self!r}")


class DetPath:
    """Dense deterministic trajectory with interpolation for event work."""

    def __init__(self, sol, gamma: float, alpha: float):
        self._sol = sol
        self.gamma = gamma
        self.alpha = alpha
        self.t0 = float(sol.t[0])
        self.t1 = float(sol.t[-1])

    @property
    def times(self) -> np.ndarray:
        return self._sol.t

    @property
    def states(self) -> list[DetState]:
        return [DetState(float(t), float(x), float(p))
                for t, (x, p) in zip(self._sol.t, self._sol.y.T)]

    def __call__(self, t: float) -> DetState:
        if not self.t0 <= t <= self.t1:
            raise ValueError(f"t={t} outside integrated range [{self.t0}, {self.t1}]")
        x, p = self._sol.sol(t)
        return DetState(float(t), float(x), float(p))


def integrate_det(params, s0: DetState, t_end: float, tol: float = 1e-10) -> DetPath:
    """Integrate the noiseless flow (x' = p, p' = -gamma*p - V'(x)).

    ``params`` needs only ``gamma`` and ``alpha`` attributes, so fully
    frictionless or untilted systems can be explored without building a
    full parameter bundle.  Adaptive high-order explicit stepping with
    dense output; local tolerance ``tol``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    g, a = params.gamma, params.alpha

    def rhs(t, y):
        return (y[1], -g * y[1] - _vprime(y[0], a))

    sol = solve_ivp(rhs, (s0.t, t_end), (s0.x, s0.p), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"deterministic integration failed: {sol.message}")
    return DetPath(sol, g, a)


def _launch_manifold(gamma: float, alpha: float, delta0: float, t_max: float):
    """Shoot the unstable manifold of the saddle at x=0 toward x=2*pi.

    Returns the scipy solution with terminal events for a momentum stall
    (p crossing zero downward) and for arrival at the next saddle.
    """
    beta = math.sqrt(max(1.0 - alpha * alpha, 0.0))
    lam_p = 0.5 * (-gamma + math.sqrt(gamma * gamma + 4.0 * beta))

    def rhs(t, y):
        return (y[1], -gamma * y[1] - _vprime(y[0], alpha))

    def ev_stall(t, y):
        return y[1]

    ev_stall.terminal = True
    ev_stall.direction = -1.0

    def ev_arrive(t, y):
        return y[0] - TWO_PI

    ev_arrive.terminal = True
    ev_arrive.direction = 1.0

    sol = solve_ivp(rhs, (0.0, t_max), (delta0, lam_p * delta0), method="DOP853",
                    rtol=1e-12, atol=1e-14, events=(ev_stall, ev_arrive),
                    dense_output=False)
    if not sol.success:
        raise RuntimeError(f"manifold shot failed: {sol.message}")
    return sol


def classify_orbit(gamma: float, alpha: float, tol: float = 1e-9,
                   delta0: float = DELTA0, t_max: float = 600.0,
                   p_run_threshold: float | None = None) -> OrbitClass:
    """Classify the unstable manifold launched from a saddle.

    Locked if the momentum stalls before the next saddle, Running if the
    next saddle is passed with momentum above ``p_run_threshold``
    (default ``tol``), Critical in the ambiguous band.  Tilts at or above
    one have no saddles and are Running unconditionally.
    """
    if alpha >= 1.0:
        return OrbitClass.RUNNING
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"classification needs 0 < alpha < 1, got {alpha!r}")
    if p_run_threshold is None:
        p_run_threshold = tol

    sol = _launch_manifold(gamma, alpha, delta0, t_max)
    stalled = sol.t_events[0].size > 0
    arrived = sol.t_events[1].size > 0
    if arrived:
        p_arr = float(sol.y_events[1][0][1])
        if p_arr < tol:
            return OrbitClass.CRITICAL
        return OrbitClass.RUNNING if p_arr > p_run_threshold else OrbitClass.CRITICAL
    if stalled:
        x_st = float(sol.y_events[0][0][0])
        if TWO_PI - x_st < tol:
            return OrbitClass.CRITICAL
        return OrbitClass.LOCKED
    raise ShootingError(
        f"manifold shot undecided within t_max={t_max} (gamma={gamma}, alpha={alpha})"
    )


@functools.lru_cache(maxsize=64)
def critical_tilt(gamma: float, tol_alpha: float = 1e-10) -> float:
    """Tilt at which the unstable manifold connects saddle to saddle.

    Bisection on :func:`classify_orbit` over the bracket
    ``(0, min(1 - 1e-6, 4*gamma))``; the upper end exploits that the
    critical tilt stays of order ``gamma`` with constant near ``4/pi``.
    """
    if not 0.0 < gamma <= 0.5:
        raise ParameterError(f"critical_tilt supports gamma in (0, 0.5], got {gamma!r}")
    if tol_alpha < 1e-12:
        raise ParameterError("tol_alpha below 1e-12 exceeds shooting accuracy")

    lo = 1e-9
    hi = min(1.0 - 1e-6, 4.0 * gamma)
    cls_tol = 1e-13  # bisection wants strict locked/running verdicts
    if classify_orbit(gamma, lo, tol=cls_tol) is not OrbitClass.LOCKED:
        raise ShootingError(f"no sign change: alpha={lo} is not locked at gamma={gamma}")
    if classify_orbit(gamma, hi, tol=cls_tol) is not OrbitClass.RUNNING:
        raise ShootingError(f"no sign change: alpha={hi} is not running at gamma={gamma}")

    while hi - lo > tol_alpha:
        mid = 0.5 * (lo + hi)
        verdict = classify_orbit(gamma, mid, tol=cls_tol)
        if verdict is OrbitClass.CRITICAL:
            return mid
        if verdict is OrbitClass.LOCKED:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(eq=False)
class OrbitTable:
    """Tabulated phase-plane orbit p(x) on one saddle-to-saddle window."""

    k: int
    grid: np.ndarray
    p_values: np.ndarray
    left_slope: float
    right_slope: float
    kind: str  # "heteroclinic" | "generic"
    alpha_used: float
    gamma_used: float
    flux: float | None = None
    _dense: Callable | None = field(default=None, repr=False)
    _pchip: PchipInterpolator | None = field(default=None, repr=False)

    @property
    def window(self) -> tuple[float, float]:
        return TWO_PI * (self.k - 1), TWO_PI * self.k

    def interpolator(self) -> PchipInterpolator:
        """Monotone cubic through the table rows (preserves positivity)."""
        if self._pchip is None:
            self._pchip = PchipInterpolator(self.grid, self.p_values, extrapolate=False)
        return self._pchip

    def p_at(self, x):
        lo, hi = self.window
        xs = np.asarray(x, dtype=float)
        if np.any(xs < lo) or np.any(xs > hi):
            raise ValueError(f"position outside table window [{lo:.6g}, {hi:.6g}]")
        out = self.interpolator()(xs)
        return float(out) if np.ndim(x) == 0 else out

    def orbit_callable(self) -> Callable:
        """Best available representation: solver-dense if present, else PCHIP."""
        if self._dense is not None:
            return self._dense
        interp = self.interpolator()
        lo, hi = self.window
        left, right = self.left_slope, self.right_slope

        def p_of_x(x):
            xs = np.asarray(x, dtype=float)
            out = np.empty_like(xs)
            low = xs <= self.grid[1]
            high = xs >= self.grid[-2]
            mid = ~(low | high)
            out[low] = left * (xs[low] - lo)
            out[high] = right * (xs[high] - hi)
            out[mid] = interp(xs[mid])
            return out if out.ndim else float(out)

        return p_of_x


def heteroclinic_table(params: ModelParams, n_grid: int = 4097,
                       delta0: float = DELTA0, k: int = 1,
                       match_tol: float = 1e-6) -> OrbitTable:
    """Tabulate the saddle-to-saddle connection for a critical parameter set.

    Both halves are shot from their saddle (seeded on the linear
    asymptote ``p = slope * distance``) and matched at the midpoint; a
    midpoint mismatch above ``match_tol`` or a momentum stall in the
    interior means the stored tilt is not critical enough and asks for a
    tighter ``tol_alpha`` upstream.  Rows inside ``delta0`` of a saddle
    are filled from the linear asymptotics.
    """
    if n_grid < 256:
        raise ParameterError("n_grid must be at least 256")
    g, a = params.gamma, params.alpha
    lam_p, lam_m = params.lambda_plus, params.lambda_minus

    def rhs(x, y):
        return (-g - _vprime(x, a) / y[0], y[0])

    def ev_stall(x, y):
        return y[0] - 1e-12

    ev_stall.terminal = True

    # The halves overlap on [mid-blend, mid+blend] and are cross-faded
    # there, so the table is C^1-smooth across the matching point and the
    # midpoint-stencil residual does not see the O(tol_alpha) jump.
    mid, blend = math.pi, 0.8
    left = solve_ivp(rhs, (delta0, mid + blend), (lam_p * delta0, 0.0),
                     method="DOP853", rtol=1e-12, atol=1e-14,
                     dense_output=True, events=ev_stall)
    right = solve_ivp(rhs, (TWO_PI - delta0, mid - blend), (-lam_m * delta0, 0.0),
                      method="DOP853", rtol=1e-12, atol=1e-14,
                      dense_output=True, events=ev_stall)
    for half, name in ((left, "left"), (right, "right")):
        if half.t_events[0].size:
            raise ShootingError(
                f"momentum stalled in the {name} half at x={half.t_events[0][0]:.6f}: "
                "tilt is not critical enough; recompute with tighter tol_alpha"
            )
        if not half.success:
            raise RuntimeError(f"orbit integration failed ({name}): {half.message}")

    p_mid_l = float(left.sol(mid)[0])
    p_mid_r = float(right.sol(mid)[0])
    mismatch = abs(p_mid_l - p_mid_r)
    if mismatch > match_tol:
        raise ShootingError(
            f"half-orbit mismatch {mismatch:.3e} at the midpoint exceeds "
            f"{match_tol:.1e}: recompute the tilt with tighter tol_alpha"
        )

    def dense_canonical(xc):
        xs = np.atleast_1d(np.asarray(xc, dtype=float))
        out = np.empty_like(xs)
        m_asym_l = xs <= delta0
        m_asym_r = xs >= TWO_PI - delta0
        m_left = (~m_asym_l) & (xs < mid - blend)
        m_right = (~m_asym_r) & (xs > mid + blend)
        m_mix = ~(m_asym_l | m_asym_r | m_left | m_right)
        out[m_asym_l] = lam_p * xs[m_asym_l]
        out[m_asym_r] = lam_m * (xs[m_asym_r] - TWO_PI)
        if np.any(m_left):
            out[m_left] = left.sol(xs[m_left])[0]
        if np.any(m_right):
            out[m_right] = right.sol(xs[m_right])[0]
        if np.any(m_mix):
            xm = xs[m_mix]
            u = (xm - (mid - blend)) / (2.0 * blend)
            w_right = u * u * (3.0 - 2.0 * u)
            out[m_mix] = ((1.0 - w_right) * left.sol(xm)[0]
                          + w_right * right.sol(xm)[0])
        return out if np.ndim(xc) else float(out[0])

    offset = TWO_PI * (k - 1)

    def dense(x):
        return dense_canonical(np.asarray(x, dtype=float) - offset)

    # Flux accumulated as a quadrature state, split at the matching point;
    # the right half integrates in decreasing x, so its contribution
    # enters with a sign flip.
    flux = float(left.sol(mid)[1]) - float(right.sol(mid)[1])
    flux += 0.5 * (lam_p - lam_m) * delta0 * delta0  # linear end caps

    grid = np.linspace(offset, offset + TWO_PI, n_grid)
    p_values = dense(grid)
    p_values[0] = 0.0
    p_values[-1] = 0.0

    probe = 1e-6
    left_slope = dense_canonical(probe) / probe
    right_slope = dense_canonical(TWO_PI - probe) / (-probe)

    return OrbitTable(k=k, grid=grid, p_values=p_values,
                      left_slope=float(left_slope), right_slope=float(right_slope),
                      kind="heteroclinic", alpha_used=a, gamma_used=g,
                      flux=flux, _dense=dense)


def omega_along(table: OrbitTable, x):
    """Slope of the tabulated orbit via monotone cubic interpolation."""
    lo, hi = table.window
    xs = np.asarray(x, dtype=float)
    if np.any(xs < lo) or np.any(xs > hi):
        raise ValueError(f"position outside table window [{lo:.6g}, {hi:.6g}]")
    out = table.interpolator().derivative()(xs)
    return float(out) if np.ndim(x) == 0 else out


def orbit_ode_residuals(table: OrbitTable, gamma: float | None = None) -> np.ndarray:
    """Orbit-equation residual |dp/dx + gamma + V'(x)/p| at grid midpoints.

    Works from the table rows alone with fourth-order midpoint stencils,
    so it genuinely cross-checks the stored data rather than the solver
    that produced them.  The two saddle-touching intervals are skipped:
    their rows are asymptotic fills and 1/p is singular there.
    """
    if gamma is None:
        gamma = table.gamma_used
    x, p = table.grid, table.p_values
    h = np.diff(x)
    if not np.allclose(h, h[0], rtol=1e-9):
        raise ValueError("residual stencils require a uniform grid")
    h = float(h[0])
    pm1, p0, p1, p2 = p[:-3], p[1:-2], p[2:-1], p[3:]
    p_mid = (-pm1 + 9.0 * p0 + 9.0 * p1 - p2) / 16.0
    dp_mid = (pm1 - 27.0 * p0 + 27.0 * p1 - p2) / (24.0 * h)
    x_mid = 0.5 * (x[1:-2] + x[2:-1])
    return np.abs(dp_mid + gamma + _vprime(x_mid, table.alpha_used) / p_mid)


def riccati_residuals(table: OrbitTable, gamma: float | None = None) -> np.ndarray:
    """Residual of p*(dw/dx) + w^2 + gamma*w + V'' for w = omega_along.

    Evaluated at interior grid midpoints.  Accuracy is limited by the
    monotone cubic's second derivative, so this is a sanity check rather
    than a tight one.
    """
    if gamma is None:
        gamma = table.gamma_used
    x = table.grid
    x_mid = 0.5 * (x[1:-2] + x[2:-1])
    h = float(x[1] - x[0])
    w_mid = omega_along(table, x_mid)
    dw_mid = (omega_along(table, x[2:-1]) - omega_along(table, x[1:-2])) / h
    p_mid = table.interpolator()(x_mid)
    d2v = -np.cos(x_mid - math.asin(table.alpha_used))
    return np.abs(p_mid * dw_mid + w_mid**2 + gamma * w_mid + d2v)


def save_orbit(table: OrbitTable, csv_path, header_lines: Sequence[str] = ()):
    """Write the table as `x,p` CSV plus a JSON sidecar with its metadata."""
    csv_path = str(csv_path)
    lines = [f"# {h}" for h in header_lines]
    lines.append("# schema: orbit-v1")
    lines.append("x,p")
    lines += [f"{float(x)!r},{float(p)!r}" for x, p in zip(table.grid, table.p_values)]
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {
        "schema": "orbit-sidecar-v1",
        "k": table.k,
        "kind": table.kind,
        "alpha_used": table.alpha_used,
        "gamma_used": table.gamma_used,
        "left_slope": table.left_slope,
        "right_slope": table.right_slope,
        "flux": table.flux,
        "n_grid": int(table.grid.size),
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(csv_path: str) -> str:
    return csv_path[:-4] + ".json" if csv_path.endswith(".csv") else csv_path + ".json"


def load_orbit(csv_path) -> OrbitTable:
    """Rebuild an :class:`OrbitTable` from its CSV and JSON sidecar."""
    csv_path = str(csv_path)
    xs, ps = [], []
    with open(csv_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("x,"):
                continue
            sx, sp = line.split(",")
            xs.append(float(sx))
            ps.append(float(sp))
    with open(_sidecar_path(csv_path)) as fh:
        meta = json.load(fh)
    return OrbitTable(k=int(meta["k"]), grid=np.asarray(xs), p_values=np.asarray(ps),
                      left_slope=float(meta["left_slope"]),
                      right_slope=float(meta["right_slope"]),
                      kind=str(meta["kind"]), alpha_used=float(meta["alpha_used"]),
                      gamma_used=float(meta["gamma_used"]),
                      flux=meta.get("flux"))
