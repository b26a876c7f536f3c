"""Noisy dynamics: Euler-Maruyama paths, saddle coordinates, stopping times.

A trial follows the Langevin pair (x' = p, p' = -gamma*p - V'(x) + eps*dW)
from the heteroclinic initial condition and alternates between two
phases: *approaching* a saddle until the contracting coordinate v drops
to the window width eta (time S_k), then *critical* until the expanding
coordinate z leaves the window (time T_{k+1}).  The sign of z at exit
decides whether the saddle was passed.  Trials are bit-reproducible: all
randomness comes from a counter-based per-trial stream, and the same
compiled kernel advances one lane or ten thousand in lockstep with
identical per-lane arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit, prange

from .params import ModelParams, ParameterError, TWO_PI

__all__ = [
    "SimulationError",
    "SdeState",
    "CrossingEvent",
    "TrialRecord",
    "APPROACHING",
    "CRITICAL",
    "TRAPPED",
    "CAP_HIT",
    "KMAX_REACHED",
    "default_dt",
    "default_t_max",
    "trial_stream",
    "zv_transform",
    "zv_inverse",
    "em_step",
    "ou_exact_step",
    "advance_to_stop",
    "simulate_trial",
    "initial_condition",
    "simulate_lanes",
]

APPROACHING = "approaching"
CRITICAL = "critical"

TRAPPED = "trapped"
CAP_HIT = "cap_hit"
KMAX_REACHED = "k_max"

_ACTIVE, _ST_TRAPPED, _ST_CAP, _ST_KMAX, _ST_NONFINITE, _ST_OVERFLOW = 0, 1, 2, 3, 4, 5
_EV_SLOTS = 16


class SimulationError(RuntimeError):
    """A path became non-finite or the kernel hit an internal limit."""


@dataclass(frozen=True)
class SdeState:
    """Instantaneous trial state plus bookkeeping for the active phase.

    ``rng_cursor`` counts Brownian increments consumed so far, so a fresh
    stream advanced by that many draws reproduces the continuation.
    ``s_k``/``z_at_s`` hold the pending window-entry data while the phase
    is critical.
    """

    t: float
    x: float
    p: float
    k: int = 0
    phase: str = APPROACHING
    rng_cursor: int = 0
    s_k: float = math.nan
    z_at_s: float = math.nan


@dataclass(frozen=True)
class CrossingEvent:
    """One saddle encounter: window entry at s_k, exit at t_k1."""

    k: int
    s_k: float
    t_k1: float
    z_at_s: float
    v_at_t: float
    crossed: bool
    coupling_sup: float = math.nan


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one stochastic trial; a pure function of its inputs."""

    seed: object
    n_wells: int | None
    events: tuple[CrossingEvent, ...]
    outcome: str
    t_final: float
    x_final: float
    p_final: float
    n_steps: int
    trace: np.ndarray | None = None


def default_dt(params: ModelParams) -> float:
    """Step size keeping the integrator's transverse drift well below the
    entry spread.

    The Euler drift bias at window entry measures ~2.3*dt*eta**(-1/(1+theta)),
    i.e. ~0.7*(dt/epsilon) of the entry spread, so dt is capped at
    epsilon/8 (on top of the window-resolution caps) to keep the
    crossing statistics unbiased at the few-percent level.
    """
    return min(1e-3, 0.25 * params.eta_eps**2, params.epsilon / 8.0)


def default_t_max(params: ModelParams) -> float:
    """Trial cap: crossing times are logarithmic in 1/eps, 200x that is ample."""
    return 200.0 * math.log(1.0 / params.epsilon) / params.lambda_plus


def trial_stream(seed) -> np.random.Generator:
    """Counter-based stream for one trial; seed may be an int or a tuple."""
    if isinstance(seed, (tuple, list)):
        entropy = [int(s) for s in seed]
    else:
        entropy = int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def zv_transform(x, p, k, params: ModelParams):
    """Saddle coordinates: expanding z and contracting v at saddle k."""
    off = np.asarray(x, dtype=float) - TWO_PI * np.asarray(k)
    z = np.asarray(p, dtype=float) - params.lambda_minus * off
    v = np.asarray(p, dtype=float) - params.lambda_plus * off
    if np.ndim(x) == 0 and np.ndim(p) == 0:
        return float(z), float(v)
    return z, v


def zv_inverse(z, v, k, params: ModelParams):
    """Invert :func:`zv_transform`: x - 2k*pi = (z - v)/(lam+ - lam-)."""
    span = params.lambda_plus - params.lambda_minus
    off = (np.asarray(z, dtype=float) - np.asarray(v, dtype=float)) / span
    x = off + TWO_PI * np.asarray(k)
    p = (params.lambda_plus * np.asarray(z, dtype=float)
         - params.lambda_minus * np.asarray(v, dtype=float)) / span
    if np.ndim(z) == 0 and np.ndim(v) == 0:
        return float(x), float(p)
    return x, p


def em_step(state: SdeState, params: ModelParams, dt: float, dw: float) -> SdeState:
    """One Euler-Maruyama step; a deterministic function of (state, dw)."""
    if dt <= 0.0:
        raise ParameterError("dt must be positive")
    x1 = state.x + state.p * dt
    p1 = (state.p
          + (-params.gamma * state.p
             + math.sin(state.x - params.x_alpha) + params.alpha) * dt
          + params.epsilon * dw)
    if not (math.isfinite(x1) and math.isfinite(p1)):
        raise SimulationError(
            f"non-finite state after step at t={state.t:.6g}: x={x1!r}, p={p1!r}"
        )
    return replace(state, t=state.t + dt, x=x1, p=p1,
                   rng_cursor=state.rng_cursor + 1)


def ou_exact_step(z, v, params: ModelParams, dt: float, dw):
    """Exact one-step update of the linearized saddle pair.

    Mean factors exp(lam*dt); the noise term carries the exact one-step
    variance eps^2 (exp(2*lam*dt) - 1)/(2*lam), and both components are
    driven by the same standardized increment dw/sqrt(dt), mirroring the
    shared-noise coupling of the nonlinear pair.  Accepts scalars or
    arrays for ``z``, ``v`` and ``dw``.
    """
    lp, lm, eps = params.lambda_plus, params.lambda_minus, params.epsilon
    xi = np.asarray(dw) / math.sqrt(dt)
    sz = math.sqrt((math.exp(2.0 * lp * dt) - 1.0) / (2.0 * lp))
    sv = math.sqrt((1.0 - math.exp(2.0 * lm * dt)) / (2.0 * -lm))
    z1 = np.asarray(z) * math.exp(lp * dt) + eps * sz * xi
    v1 = np.asarray(v) * math.exp(lm * dt) + eps * sv * xi
    if np.ndim(z) == 0 and np.ndim(dw) == 0:
        return float(z1), float(v1)
    return z1, v1


@njit(cache=True, parallel=True)
def _advance_block(x, p, t, k, phase, s_k, z_at_s, zbar, msup, steps,
                   status, n_wells, t_fin, x_fin, p_fin,
                   ev_count, ev_data, noise,
                   gamma, x_alpha, alpha, eps, dt, eta, lam_p, lam_m,
                   t_max, k_max, couple, oz_mean, oz_noise, trace):
    n, ncols = noise.shape
    sqrt_dt = math.sqrt(dt)
    do_trace = trace.shape[0] > 0
    for i in prange(n):
        if status[i] != 0:
            continue
        xi_ = x[i]
        pi_ = p[i]
        ti_ = t[i]
        ki_ = k[i]
        ph_ = phase[i]
        sk_ = s_k[i]
        zs_ = z_at_s[i]
        zb_ = zbar[i]
        ms_ = msup[i]
        st_ = 0
        nev = ev_count[i]
        for c in range(ncols):
            off0 = xi_ - TWO_PI * ki_
            z0 = pi_ - lam_m * off0
            v0 = pi_ - lam_p * off0
            x1 = xi_ + pi_ * dt
            p1 = (pi_ + (-gamma * pi_ + math.sin(xi_ - x_alpha) + alpha) * dt
                  + eps * sqrt_dt * noise[i, c])
            t1 = ti_ + dt
            if not (math.isfinite(x1) and math.isfinite(p1)):
                st_ = 4
                t_fin[i] = ti_
                x_fin[i] = xi_
                p_fin[i] = pi_
                break
            off1 = x1 - TWO_PI * ki_
            z1 = p1 - lam_m * off1
            v1 = p1 - lam_p * off1
            if ph_ == 0:
                if v1 <= eta:
                    tau = (v0 - eta) / (v0 - v1)
                    sk_ = ti_ + tau * dt
                    zs_ = z0 + tau * (z1 - z0)
                    ph_ = 1
                    zb_ = z1
                    ms_ = 0.0
                    if zs_ >= eta or zs_ <= -eta:
                        # window exit infimum attained at entry itself
                        crossed = zs_ >= eta
                        if nev >= ev_data.shape[1]:
                            st_ = 5
                            break
                        ev_data[i, nev, 0] = ki_
                        ev_data[i, nev, 1] = sk_
                        ev_data[i, nev, 2] = sk_
                        ev_data[i, nev, 3] = zs_
                        ev_data[i, nev, 4] = eta
                        ev_data[i, nev, 5] = 1.0 if crossed else 0.0
                        ev_data[i, nev, 6] = 0.0
                        nev += 1
                        if crossed:
                            ki_ += 1
                            ph_ = 0
                            if ki_ >= k_max:
                                st_ = 3
                                t_fin[i] = sk_
                                x_fin[i] = xi_ + tau * (x1 - xi_)
                                p_fin[i] = pi_ + tau * (p1 - pi_)
                                break
                        else:
                            st_ = 1
                            n_wells[i] = ki_
                            t_fin[i] = sk_
                            x_fin[i] = xi_ + tau * (x1 - xi_)
                            p_fin[i] = pi_ + tau * (p1 - pi_)
                            break
            else:
                if couple:
                    zb_ = zb_ * oz_mean + eps * oz_noise * noise[i, c]
                    gap = abs(z1 - zb_) * math.exp(-lam_p * (t1 - sk_))
                    if gap > ms_:
                        ms_ = gap
                if z1 >= eta or z1 <= -eta:
                    crossed = z1 >= eta
                    thr = eta if crossed else -eta
                    tau = (thr - z0) / (z1 - z0)
                    t_ev = ti_ + tau * dt
                    if nev >= ev_data.shape[1]:
                        st_ = 5
                        break
                    ev_data[i, nev, 0] = ki_
                    ev_data[i, nev, 1] = sk_
                    ev_data[i, nev, 2] = t_ev
                    ev_data[i, nev, 3] = zs_
                    ev_data[i, nev, 4] = v0 + tau * (v1 - v0)
                    ev_data[i, nev, 5] = 1.0 if crossed else 0.0
                    ev_data[i, nev, 6] = ms_
                    nev += 1
                    if crossed:
                        ki_ += 1
                        ph_ = 0
                        if ki_ >= k_max:
                            st_ = 3
                            t_fin[i] = t_ev
                            x_fin[i] = xi_ + tau * (x1 - xi_)
                            p_fin[i] = pi_ + tau * (p1 - pi_)
                            break
                        offn = x1 - TWO_PI * ki_
                        vn = p1 - lam_p * offn
                        if vn <= eta:
                            # window entered at the grid point itself
                            sk_ = t1
                            zs_ = p1 - lam_m * offn
                            ph_ = 1
                            zb_ = zs_
                            ms_ = 0.0
                            if zs_ >= eta or zs_ <= -eta:
                                crossed = zs_ >= eta
                                if nev >= ev_data.shape[1]:
                                    st_ = 5
                                    break
                                ev_data[i, nev, 0] = ki_
                                ev_data[i, nev, 1] = sk_
                                ev_data[i, nev, 2] = sk_
                                ev_data[i, nev, 3] = zs_
                                ev_data[i, nev, 4] = vn
                                ev_data[i, nev, 5] = 1.0 if crossed else 0.0
                                ev_data[i, nev, 6] = 0.0
                                nev += 1
                                if crossed:
                                    ki_ += 1
                                    ph_ = 0
                                    if ki_ >= k_max:
                                        st_ = 3
                                        t_fin[i] = t1
                                        x_fin[i] = x1
                                        p_fin[i] = p1
                                        break
                                else:
                                    st_ = 1
                                    n_wells[i] = ki_
                                    t_fin[i] = t1
                                    x_fin[i] = x1
                                    p_fin[i] = p1
                                    break
                    else:
                        st_ = 1
                        n_wells[i] = ki_
                        t_fin[i] = t_ev
                        x_fin[i] = xi_ + tau * (x1 - xi_)
                        p_fin[i] = pi_ + tau * (p1 - pi_)
                        break
            xi_ = x1
            pi_ = p1
            ti_ = t1
            steps[i] += 1
            if do_trace:
                offt = xi_ - TWO_PI * ki_
                trace[c, 0] = ti_
                trace[c, 1] = xi_
                trace[c, 2] = pi_
                trace[c, 3] = pi_ - lam_m * offt
                trace[c, 4] = pi_ - lam_p * offt
                trace[c, 5] = ki_
                trace[c, 6] = ph_
            if ti_ >= t_max:
                st_ = 2
                t_fin[i] = ti_
                x_fin[i] = xi_
                p_fin[i] = pi_
                break
        x[i] = xi_
        p[i] = pi_
        t[i] = ti_
        k[i] = ki_
        phase[i] = ph_
        s_k[i] = sk_
        z_at_s[i] = zs_
        zbar[i] = zb_
        msup[i] = ms_
        status[i] = st_
        ev_count[i] = nev


class _LaneRunner:
    """Lockstep driver advancing many independent trials through the kernel."""

    def __init__(self, params: ModelParams, inits, seeds: Sequence, dt: float,
                 k_max: int, t_max: float, couple: bool = False,
                 trace: bool = False, block: int = 4096,
                 noise_pair_sum: bool = False):
        n = len(seeds)
        x0, p0 = inits
        self.params = params
        self.dt = float(dt)
        self.k_max = int(k_max)
        self.t_max = float(t_max)
        self.couple = bool(couple)
        self.block = int(block)
        # Common-random-number mode for step-halving studies: consume the
        # stream pairwise so a dt run shares its Brownian path with a dt/2
        # run driven by the same per-trial streams.
        self.noise_pair_sum = bool(noise_pair_sum)
        self.gens = [trial_stream(s) for s in seeds]
        self.lane_ids = np.arange(n)
        self.x = np.full(n, x0, dtype=float) if np.ndim(x0) == 0 else np.asarray(x0, float).copy()
        self.p = np.full(n, p0, dtype=float) if np.ndim(p0) == 0 else np.asarray(p0, float).copy()
        self.t = np.zeros(n)
        self.k = np.zeros(n, dtype=np.int64)
        self.phase = np.zeros(n, dtype=np.int64)
        self.s_k = np.full(n, np.nan)
        self.z_at_s = np.full(n, np.nan)
        self.zbar = np.zeros(n)
        self.msup = np.zeros(n)
        self.steps = np.zeros(n, dtype=np.int64)
        self.status = np.zeros(n, dtype=np.int64)
        self.n_wells = np.full(n, -1, dtype=np.int64)
        self.t_fin = np.zeros(n)
        self.x_fin = np.zeros(n)
        self.p_fin = np.zeros(n)
        self.events: list[list[CrossingEvent]] = [[] for _ in range(n)]
        self.trace_rows: list[np.ndarray] = []
        self.want_trace = trace
        if trace and n != 1:
            raise ParameterError("trace recording is only supported for single trials")
        # Entry condition may already hold at t=0 (infimum attained at once).
        z0, v0 = zv_transform(self.x, self.p, self.k, params)
        entered = v0 <= params.eta_eps
        self.phase[entered] = 1
        self.s_k[entered] = 0.0
        self.z_at_s[entered] = z0[entered]
        self.zbar[entered] = z0[entered]
        # A start with |z| already outside the window exits at t=0 as well.
        for j in np.nonzero(entered & (np.abs(z0) >= params.eta_eps))[0]:
            crossed = bool(z0[j] >= params.eta_eps)
            self.events[j].append(CrossingEvent(
                k=int(self.k[j]), s_k=0.0, t_k1=0.0, z_at_s=float(z0[j]),
                v_at_t=float(v0[j]), crossed=crossed))
            if crossed:
                self.k[j] += 1
                self.phase[j] = 0
            else:
                self.status[j] = _ST_TRAPPED
                self.n_wells[j] = int(self.k[j])
                self.t_fin[j] = 0.0
                self.x_fin[j] = float(self.x[j])
                self.p_fin[j] = float(self.p[j])
        self._finished: dict[int, dict] = {}

    def _harvest(self, ev_count, ev_data):
        for j in np.nonzero(ev_count > 0)[0]:
            lane = self.lane_ids[j]
            for e in range(ev_count[j]):
                row = ev_data[j, e]
                self.events[lane].append(CrossingEvent(
                    k=int(row[0]), s_k=float(row[1]), t_k1=float(row[2]),
                    z_at_s=float(row[3]), v_at_t=float(row[4]),
                    crossed=bool(row[5] > 0.5),
                    coupling_sup=float(row[6]) if self.couple else math.nan))

    def run(self):
        pm = self.params
        oz_mean = math.exp(pm.lambda_plus * self.dt)
        oz_noise = math.sqrt((math.exp(2.0 * pm.lambda_plus * self.dt) - 1.0)
                             / (2.0 * pm.lambda_plus))
        while self.x.size:
            n = self.x.size
            # Fewer python crossings once the cohort thins out.
            cols = min(max(self.block, (1 << 22) // max(n, 1)), 1 << 16)
            if self.noise_pair_sum:
                raw = np.empty((n, 2 * cols), dtype=np.float32)
                for i, g in enumerate(self.gens):
                    g.standard_normal(out=raw[i], dtype=np.float32)
                noise = ((raw[:, 0::2] + raw[:, 1::2])
                         / np.float32(math.sqrt(2.0))).astype(np.float32)
            else:
                noise = np.empty((n, cols), dtype=np.float32)
                for i, g in enumerate(self.gens):
                    g.standard_normal(out=noise[i], dtype=np.float32)
            trace = (np.empty((cols, 7)) if self.want_trace
                     else np.empty((0, 7)))
            ev_count = np.zeros(n, dtype=np.int64)
            ev_data = np.zeros((n, _EV_SLOTS, 7))
            steps_before = self.steps.copy()
            _advance_block(self.x, self.p, self.t, self.k, self.phase,
                           self.s_k, self.z_at_s, self.zbar, self.msup,
                           self.steps, self.status, self.n_wells,
                           self.t_fin, self.x_fin, self.p_fin,
                           ev_count, ev_data, noise,
                           pm.gamma, pm.x_alpha, pm.alpha, pm.epsilon,
                           self.dt, pm.eta_eps, pm.lambda_plus, pm.lambda_minus,
                           self.t_max, self.k_max, self.couple,
                           oz_mean, oz_noise, trace)
            self._harvest(ev_count, ev_data)
            if self.want_trace:
                used = int(self.steps[0] - steps_before[0])
                self.trace_rows.append(trace[:used].copy())
            if np.any(self.status == _ST_OVERFLOW):
                raise SimulationError("event buffer overflow; lower the block size")
            done = self.status != _ACTIVE
            for j in np.nonzero(done)[0]:
                lane = self.lane_ids[j]
                self._finished[lane] = dict(
                    status=int(self.status[j]), n_wells=int(self.n_wells[j]),
                    t=float(self.t_fin[j]), x=float(self.x_fin[j]),
                    p=float(self.p_fin[j]), steps=int(self.steps[j]))
            if np.any(done):
                keep = ~done
                for name in ("x", "p", "t", "k", "phase", "s_k", "z_at_s",
                             "zbar", "msup", "steps", "status", "n_wells",
                             "t_fin", "x_fin", "p_fin", "lane_ids"):
                    setattr(self, name, getattr(self, name)[keep])
                self.gens = [g for g, kf in zip(self.gens, keep) if kf]
        return self._finished


_STATUS_NAMES = {_ST_TRAPPED: TRAPPED, _ST_CAP: CAP_HIT, _ST_KMAX: KMAX_REACHED}


def simulate_lanes(params: ModelParams, inits, seeds: Sequence, dt: float,
                   k_max: int, t_max: float, couple: bool = False,
                   block: int = 4096, noise_pair_sum: bool = False):
    """Advance many independent trials; returns per-lane outcome dicts and events.

    Used by the batch driver; aggregation downstream is order-independent.
    """
    runner = _LaneRunner(params, inits, seeds, dt, k_max, t_max,
                         couple=couple, block=block,
                         noise_pair_sum=noise_pair_sum)
    finished = runner.run()
    out = []
    for lane in range(len(seeds)):
        info = finished[lane]
        st = info["status"]
        if st == _ST_NONFINITE:
            raise SimulationError(
                f"trial {seeds[lane]!r} became non-finite at t={info['t']:.6g}"
            )
        out.append(dict(
            outcome=_STATUS_NAMES[st],
            n_wells=info["n_wells"] if st == _ST_TRAPPED else None,
            t_final=info["t"], x_final=info["x"], p_final=info["p"],
            n_steps=info["steps"], events=tuple(runner.events[lane])))
    return out


@lru_cache(maxsize=16)
def _cached_table(params: ModelParams):
    from .deterministic import heteroclinic_table
    return heteroclinic_table(params, k=0)


def initial_condition(params: ModelParams) -> tuple[float, float]:
    """Default start on the incoming heteroclinic orbit at x = -pi."""
    table = _cached_table(params)
    return -math.pi, float(table.orbit_callable()(-math.pi))


def simulate_trial(params: ModelParams, init=None, seed=0, dt: float | None = None,
                   k_max: int = 12, t_max: float | None = None,
                   record_trace: bool = False) -> TrialRecord:
    """Run one trial to its end; bit-reproducible given (seed, dt, params).

    ``init`` defaults to the heteroclinic initial condition.  The trial
    ends at the first non-crossing window exit (trapped, with the well
    count), at ``k_max`` crossings, or at the time cap; the cap and
    ``k_max`` surface as explicit outcomes, never silently.
    """
    if k_max < 1:
        raise ParameterError("k_max must be at least 1")
    if init is None:
        init = initial_condition(params)
    if dt is None:
        dt = default_dt(params)
    if t_max is None:
        t_max = default_t_max(params)
    runner = _LaneRunner(params, (init[0], init[1]), [seed], dt, k_max, t_max,
                         trace=record_trace)
    finished = runner.run()
    info = finished[0]
    st = info["status"]
    if st == _ST_NONFINITE:
        raise SimulationError(f"trial became non-finite at t={info['t']:.6g}")
    trace = None
    if record_trace:
        head = np.array([[0.0, init[0], init[1],
                          *zv_transform(init[0], init[1], 0, params), 0.0, 0.0]])
        trace = np.vstack([head] + runner.trace_rows) if runner.trace_rows else head
    return TrialRecord(seed=seed,
                       n_wells=info["n_wells"] if st == _ST_TRAPPED else None,
                       events=tuple(runner.events[0]),
                       outcome=_STATUS_NAMES[st],
                       t_final=info["t"], x_final=info["x"], p_final=info["p"],
                       n_steps=info["steps"], trace=trace)


def advance_to_stop(state: SdeState, params: ModelParams, dt: float,
                    stream: np.random.Generator, t_max: float | None = None):
    """Step until the next stopping time for the state's current phase.

    Approaching phase: returns at the window entry S_k with the state
    switched to critical (second element ``None``).  Critical phase:
    returns at the window exit with the completed :class:`CrossingEvent`;
    a crossing increments k and resets the phase.  Exceeding ``t_max``
    returns the string ``"cap_hit"``.  Event times and coordinates are
    located by linear interpolation inside the straddling step.
    """
    if t_max is None:
        t_max = default_t_max(params)
    eta = params.eta_eps
    cur = state
    z0, v0 = zv_transform(cur.x, cur.p, cur.k, params)
    if cur.phase == APPROACHING and v0 <= eta:
        cur = replace(cur, phase=CRITICAL, s_k=cur.t, z_at_s=z0)
        return cur, None
    if cur.phase == CRITICAL and abs(z0) >= eta:
        # Exit infimum already attained where we stand.
        crossed = z0 >= eta
        event = CrossingEvent(k=cur.k, s_k=cur.s_k, t_k1=cur.t,
                              z_at_s=cur.z_at_s, v_at_t=v0, crossed=crossed)
        if crossed:
            return replace(cur, k=cur.k + 1, phase=APPROACHING,
                           s_k=math.nan, z_at_s=math.nan), event
        return cur, event
    while True:
        if cur.t >= t_max:
            return cur, CAP_HIT
        dw = stream.standard_normal() * math.sqrt(dt)
        z0, v0 = zv_transform(cur.x, cur.p, cur.k, params)
        nxt = em_step(cur, params, dt, dw)
        z1, v1 = zv_transform(nxt.x, nxt.p, nxt.k, params)
        if cur.phase == APPROACHING:
            if v1 <= eta:
                tau = (v0 - eta) / (v0 - v1)
                s_k = cur.t + tau * dt
                z_at_s = z0 + tau * (z1 - z0)
                return replace(nxt, phase=CRITICAL, s_k=s_k, z_at_s=z_at_s), None
        else:
            if abs(z1) >= eta:
                crossed = z1 >= eta
                thr = eta if crossed else -eta
                tau = (thr - z0) / (z1 - z0)
                event = CrossingEvent(
                    k=cur.k, s_k=cur.s_k, t_k1=cur.t + tau * dt,
                    z_at_s=cur.z_at_s,
                    v_at_t=v0 + tau * (v1 - v0), crossed=crossed)
                if crossed:
                    out = replace(nxt, k=cur.k + 1, phase=APPROACHING,
                                  s_k=math.nan, z_at_s=math.nan)
                else:
                    out = replace(nxt,
                                  t=event.t_k1,
                                  x=cur.x + tau * (nxt.x - cur.x),
                                  p=cur.p + tau * (nxt.p - cur.p))
                return out, event
        cur = nxt
