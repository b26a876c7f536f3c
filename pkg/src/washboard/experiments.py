"""Statistical campaigns: the crossing law, variance checks, scalings.

Every campaign is a deterministic function of its configuration and
master seed.  Per-trial randomness comes from counter-based streams keyed
by (master_seed, trial index), so batches can be farmed out in chunks and
aggregated in any order; the aggregation itself sorts by trial index and
is therefore permutation-invariant.  Two cheap internal oracles (the
saddle-coordinate round trip and the time/space variance identity) are
recomputed inside every batch as sentinels against numerical regressions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .deterministic import critical_tilt, heteroclinic_table
from .functionals import rho_propagation, sigma_functional, sigma_r_profile
from .params import ModelParams, ParameterError, TWO_PI, make_params, saddle_remainder
from .sde import (
    CAP_HIT,
    KMAX_REACHED,
    TRAPPED,
    default_dt,
    default_t_max,
    initial_condition,
    simulate_lanes,
    trial_stream,
    zv_inverse,
    zv_transform,
)

__all__ = [
    "BatchSummary",
    "wilson_interval",
    "run_batch",
    "synthetic_summary",
    "geometric_gof",
    "variance_validation",
    "timescale_scan",
    "trapping_check",
    "marcus_shepp_check",
    "comparison_lemma_check",
    "scaling_suite",
    "loglog_fit",
]

_Z95 = 1.959963984540054


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson 95% score interval for a binomial proportion."""
    if n <= 0:
        raise ParameterError("interval needs at least one observation")
    p_hat = successes / n
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)) / denom
    return center - half, center + half


def loglog_fit(xs, ys) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2 of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2)) / float(ss_tot) if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass
class BatchSummary:
    """Aggregated Monte Carlo statistics for one batch of trials."""

    config: dict
    n_trials: int
    counts: list[int]
    p_hat: list[float]
    wilson_lo: list[float]
    wilson_hi: list[float]
    outcome_tallies: dict[str, int]
    crossing_mean: float
    crossing_std: float
    n_events: int
    sentinels: dict[str, float]
    reliable: bool
    notes: list[str]
    # Per-trial and per-event raw data (kept out of the JSON summary).
    trial_n: np.ndarray = field(repr=False, default=None)
    trial_outcome: np.ndarray = field(repr=False, default=None)
    trial_t_final: np.ndarray = field(repr=False, default=None)
    trial_x_final: np.ndarray = field(repr=False, default=None)
    trial_p_final: np.ndarray = field(repr=False, default=None)
    trial_n_events: np.ndarray = field(repr=False, default=None)
    # Event columns: trial, k, s_k, t_k1, z_at_s, v_at_t, crossed.
    event_table: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> str:
        payload = {
            "schema": "batch-summary-v1",
            "config": self.config,
            "n_trials": self.n_trials,
            "counts": self.counts,
            "p_hat": self.p_hat,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "outcome_tallies": self.outcome_tallies,
            "crossing_mean": self.crossing_mean,
            "crossing_std": self.crossing_std,
            "n_events": self.n_events,
            "sentinels": self.sentinels,
            "reliable": self.reliable,
            "notes": self.notes,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _params_snapshot(params: ModelParams) -> dict:
    return {k: getattr(params, k) for k in (
        "gamma", "alpha", "epsilon", "nu", "x_alpha", "beta", "lambda_plus",
        "lambda_minus", "theta", "eta_eps", "sigma_eps", "sigma_bar_eps",
        "sigma_tilde_eps")}


def _sentinels(params: ModelParams) -> dict[str, float]:
    """Cheap internal oracles rerun inside every campaign."""
    rng = np.random.Generator(np.random.Philox(12345))
    k = rng.integers(-3, 4, size=10_000)
    x = TWO_PI * k + rng.uniform(-6.0, 6.0, size=10_000)
    p = rng.uniform(-3.0, 3.0, size=10_000)
    z, v = zv_transform(x, p, k, params)
    x2, p2 = zv_inverse(z, v, k, params)
    roundtrip = float(np.max(np.abs(x2 - x)) + np.max(np.abs(p2 - p)))

    table = heteroclinic_table(params, n_grid=1025)
    lo, hi = table.window
    eta = params.eta_eps
    span = (lo + eta, hi - eta / (2.0 * (params.lambda_plus - params.lambda_minus)))
    prof = sigma_r_profile(params, table, span)
    return {"zv_roundtrip_max": roundtrip, "sss_rel_mismatch": prof.rel_mismatch}


def _aggregate(params: ModelParams, cfg: dict, records: list[dict],
               k_max: int) -> BatchSummary:
    records = sorted(records, key=lambda r: r["trial"])
    n = len(records)
    trial_n = np.array([-1 if r["n_wells"] is None else r["n_wells"] for r in records])
    outcome = np.array([r["outcome"] for r in records], dtype=object)
    t_fin = np.array([r["t_final"] for r in records])
    x_fin = np.array([r["x_final"] for r in records])
    p_fin = np.array([r["p_final"] for r in records])
    n_ev = np.array([len(r["events"]) for r in records])

    rows = []
    for r in records:
        for e in r["events"]:
            rows.append((r["trial"], e.k, e.s_k, e.t_k1, e.z_at_s, e.v_at_t,
                         1.0 if e.crossed else 0.0))
    event_table = (np.array(rows) if rows else np.empty((0, 7)))

    counts = [int(np.sum((trial_n == k) & (outcome == TRAPPED))) for k in range(k_max)]
    tallies = {TRAPPED: int(np.sum(outcome == TRAPPED)),
               CAP_HIT: int(np.sum(outcome == CAP_HIT)),
               KMAX_REACHED: int(np.sum(outcome == KMAX_REACHED))}
    if sum(counts) + tallies[CAP_HIT] + tallies[KMAX_REACHED] != n:
        raise RuntimeError("batch bookkeeping leak: tallies do not add up")

    p_hat, lo_w, hi_w = [], [], []
    for c in counts:
        p_hat.append(c / n)
        lo, hi = wilson_interval(c, n)
        lo_w.append(lo)
        hi_w.append(hi)

    durations = event_table[:, 3] - event_table[:, 2] if len(event_table) else np.array([])
    notes = []
    cap_frac = tallies[CAP_HIT] / n
    reliable = cap_frac <= 0.01
    if not reliable:
        notes.append(f"unreliable: cap_hit fraction {cap_frac:.3%} exceeds 1%")

    return BatchSummary(
        config=cfg, n_trials=n, counts=counts, p_hat=p_hat,
        wilson_lo=lo_w, wilson_hi=hi_w, outcome_tallies=tallies,
        crossing_mean=float(durations.mean()) if durations.size else math.nan,
        crossing_std=float(durations.std()) if durations.size else math.nan,
        n_events=int(durations.size),
        sentinels=_sentinels(params),
        reliable=reliable, notes=notes,
        trial_n=trial_n, trial_outcome=outcome, trial_t_final=t_fin,
        trial_x_final=x_fin, trial_p_final=p_fin, trial_n_events=n_ev,
        event_table=event_table)


def run_batch(params: ModelParams, n_trials: int, master_seed: int,
              dt: float | None = None, k_max: int = 12,
              t_max: float | None = None, init=None,
              chunk: int = 4096, couple: bool = False,
              noise_pair_sum: bool = False) -> BatchSummary:
    """Simulate ``n_trials`` independent trials and aggregate them.

    Deterministic given ``master_seed``; trials use streams keyed by
    (master_seed, trial index) and may be chunked arbitrarily without
    changing the summary.
    """
    if n_trials < 100:
        raise ParameterError("run_batch needs at least 100 trials")
    if dt is None:
        dt = default_dt(params)
    if t_max is None:
        t_max = default_t_max(params)
    if init is None:
        init = initial_condition(params)

    cfg = {"params": _params_snapshot(params), "n_trials": n_trials,
           "master_seed": master_seed, "dt": dt, "k_max": k_max,
           "t_max": t_max, "init": list(init)}

    records: list[dict] = []
    for start in range(0, n_trials, chunk):
        stop = min(start + chunk, n_trials)
        seeds = [(master_seed, i) for i in range(start, stop)]
        for i, rec in zip(range(start, stop),
                          simulate_lanes(params, init, seeds, dt, k_max, t_max,
                                         couple=couple,
                                         noise_pair_sum=noise_pair_sum)):
            rec["trial"] = i
            records.append(rec)
    return _aggregate(params, cfg, records, k_max)


def synthetic_summary(samples, k_max: int = 12, config: dict | None = None) -> BatchSummary:
    """Summary built from externally drawn well counts (gof oracle input)."""
    samples = np.asarray(samples, dtype=int)
    records = [dict(trial=i, n_wells=int(s) if s < k_max else None,
                    outcome=TRAPPED if s < k_max else KMAX_REACHED,
                    t_final=0.0, x_final=0.0, p_final=0.0, events=())
               for i, s in enumerate(samples)]
    summary = _aggregate_synthetic(records, k_max, config or {})
    return summary


def _aggregate_synthetic(records, k_max, cfg):
    n = len(records)
    trial_n = np.array([-1 if r["n_wells"] is None else r["n_wells"] for r in records])
    outcome = np.array([r["outcome"] for r in records], dtype=object)
    counts = [int(np.sum((trial_n == k) & (outcome == TRAPPED))) for k in range(k_max)]
    tallies = {TRAPPED: int(np.sum(outcome == TRAPPED)), CAP_HIT: 0,
               KMAX_REACHED: int(np.sum(outcome == KMAX_REACHED))}
    p_hat, lo_w, hi_w = [], [], []
    for c in counts:
        p_hat.append(c / n)
        lo, hi = wilson_interval(c, n)
        lo_w.append(lo)
        hi_w.append(hi)
    return BatchSummary(
        config=cfg, n_trials=n, counts=counts, p_hat=p_hat, wilson_lo=lo_w,
        wilson_hi=hi_w, outcome_tallies=tallies, crossing_mean=math.nan,
        crossing_std=math.nan, n_events=0, sentinels={}, reliable=True,
        notes=["synthetic"], trial_n=trial_n, trial_outcome=outcome,
        trial_t_final=np.zeros(n), trial_x_final=np.zeros(n),
        trial_p_final=np.zeros(n), trial_n_events=np.zeros(n, dtype=int),
        event_table=np.empty((0, 7)))


def geometric_gof(summary: BatchSummary, slack: float = 0.06,
                  pool_from: int = 5) -> dict:
    """Per-k deviation report against the half-by-half reference law.

    Each resolved bin k carries the band max(3 * Wilson half-width,
    ``slack``); bins at and beyond ``pool_from`` are pooled for
    stability.  Also checks the tail mass and that the resolved mass
    accounts for everything but cap/k_max losses.
    """
    n = summary.n_trials
    k_bins = len(summary.counts)
    rows = []
    for k in range(min(pool_from, k_bins)):
        target = 2.0 ** -(k + 1)
        c = summary.counts[k]
        lo, hi = wilson_interval(c, n)
        half = 0.5 * (hi - lo)
        band = max(3.0 * half, slack)
        dev = abs(c / n - target)
        rows.append({"k": k, "p_hat": c / n, "target": target,
                     "deviation": dev, "band": band, "ok": bool(dev <= band)})
    pooled_count = int(sum(summary.counts[pool_from:]))
    pooled_target = 2.0 ** -pool_from - 2.0 ** -k_bins
    lo, hi = wilson_interval(pooled_count, n)
    band = max(3.0 * 0.5 * (hi - lo), slack)
    rows.append({"k": f">={pool_from}", "p_hat": pooled_count / n,
                 "target": pooled_target,
                 "deviation": abs(pooled_count / n - pooled_target),
                 "band": band,
                 "ok": bool(abs(pooled_count / n - pooled_target) <= band)})

    # Tail mass beyond the last resolved bin (k_max outcomes included).
    tail_count = pooled_count + summary.outcome_tallies.get(KMAX_REACHED, 0)
    tail_target = 2.0 ** -pool_from
    lo, hi = wilson_interval(tail_count, n)
    tail_ok = bool(abs(tail_count / n - tail_target)
                   <= max(3.0 * 0.5 * (hi - lo), slack))

    losses = (summary.outcome_tallies.get(CAP_HIT, 0)
              + summary.outcome_tallies.get(KMAX_REACHED, 0)) / n
    mass = sum(summary.p_hat)
    mass_ok = bool(abs(mass + losses - 1.0) < 1e-12)

    return {"rows": rows, "tail": {"count": tail_count, "target": tail_target,
                                   "ok": tail_ok},
            "total_mass": mass, "loss_fraction": losses, "mass_ok": mass_ok,
            "ok": bool(all(r["ok"] for r in rows) and tail_ok and mass_ok)}


def _ou_exact_paths(rate: float, eps: float, start: float, t: float,
                    n_steps: int, rng, n_samples: int) -> np.ndarray:
    """Exact-step OU ensemble at time t (vectorized over samples)."""
    h = t / n_steps
    decay = math.exp(rate * h)
    step_var = eps * eps * (math.exp(2.0 * rate * h) - 1.0) / (2.0 * rate)
    s = math.sqrt(step_var)
    x = np.full(n_samples, start)
    for _ in range(n_steps):
        x = x * decay + s * rng.standard_normal(n_samples)
    return x


def variance_validation(params: ModelParams, n_samples: int = 100_000,
                        seed: int = 0, n_paths: int = 1000,
                        batch: BatchSummary | None = None) -> dict:
    """Gaussian variance formulas against stepped ensembles and full trials.

    (a)/(b): the exact-step linear pair must reproduce its closed-form
    variances within three standard errors.  (c)/(d): the entry spread of
    the expanding coordinate is of the order of the dispersion scale (its
    mean much smaller), and the exit spread of the contracting coordinate
    is of the order of the bare noise.
    """
    if n_samples < 100_000:
        raise ParameterError("OU checks need at least 1e5 samples")
    if batch is None and n_paths < 1000:
        raise ParameterError("nonlinear spread checks need at least 1e3 paths")
    lp, lm, eps = params.lambda_plus, params.lambda_minus, params.epsilon
    eta = params.eta_eps
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    rows = []

    def add(name, value, bound, ok):
        rows.append({"name": name, "value": value, "bound": bound, "ok": bool(ok)})

    for mult in (0.5, 1.0, 2.0):
        t = mult / lp
        var_se = math.sqrt(2.0 / (n_samples - 1))
        v_fin = _ou_exact_paths(lm, eps, eta, t, 32, rng, n_samples)
        target = eps * eps / (2.0 * abs(lm)) * (1.0 - math.exp(2.0 * lm * t))
        emp = float(np.var(v_fin, ddof=1))
        add(f"var_v(t={mult}/lam+)", emp, 3.0 * var_se * emp,
            abs(emp - target) <= 3.0 * var_se * max(emp, target))
        z_fin = _ou_exact_paths(lp, eps, 0.0, t, 32, rng, n_samples)
        target_z = eps * eps / (2.0 * lp) * (math.exp(2.0 * lp * t) - 1.0)
        emp_z = float(np.var(z_fin, ddof=1))
        add(f"var_z(t={mult}/lam+)", emp_z, 3.0 * var_se * emp_z,
            abs(emp_z - target_z) <= 3.0 * var_se * max(emp_z, target_z))

    if batch is None:
        batch = run_batch(params, max(n_paths, 100), master_seed=seed + 1)
    ev = batch.event_table
    first = ev[ev[:, 1] == 0]
    z_entry = first[:, 4]
    v_exit = ev[:, 5]
    z_ratio = float(np.std(z_entry, ddof=1) / params.sigma_eps)
    add("z_entry_spread/sigma_eps", z_ratio, (0.1, 10.0), 0.1 <= z_ratio <= 10.0)
    z_mean = float(abs(np.mean(z_entry)))
    add("|mean z_entry|/sigma_tilde", z_mean / params.sigma_tilde_eps, 10.0,
        z_mean <= 10.0 * params.sigma_tilde_eps)
    # The exit-coordinate law is Gaussian about the decayed window width
    # eta*exp(lam- * duration); subtract that conditional mean, leaving a
    # spread on the bare-noise scale.
    durations = ev[:, 3] - ev[:, 2]
    v_centered = v_exit - eta * np.exp(lm * durations)
    v_ratio = float(np.std(v_centered, ddof=1) / eps)
    add("v_exit_spread/eps", v_ratio, (0.1, 10.0), 0.1 <= v_ratio <= 10.0)
    v_mean = float(abs(np.mean(v_exit)))
    add("|mean v_exit|/sigma_bar", v_mean / params.sigma_bar_eps, 10.0,
        v_mean <= 10.0 * params.sigma_bar_eps)

    failures = [r["name"] for r in rows if not r["ok"]]
    return {"rows": rows, "failures": failures, "ok": not failures}


def timescale_scan(gamma: float, nu: float, epsilons, n_trials: int,
                   master_seed: int = 0, alpha: float | None = None,
                   batches: dict | None = None) -> dict:
    """Regress the mean in-window time on log(1/eps) across noise levels.

    ``batches`` may supply already-simulated summaries keyed by epsilon;
    missing entries are simulated with ``n_trials`` trials each.
    """
    epsilons = sorted(float(e) for e in epsilons)
    if len(epsilons) < 3 or max(epsilons) / min(epsilons) < 99.0:
        raise ParameterError("need >=3 epsilon values spanning >=2 decades")
    if alpha is None:
        alpha = critical_tilt(gamma)
    means, params_last = [], None
    for e in epsilons:
        pm = make_params(gamma, alpha, e, nu)
        params_last = pm
        summ = (batches or {}).get(e)
        if summ is None:
            summ = run_batch(pm, n_trials, master_seed)
        durations = summ.event_table[:, 3] - summ.event_table[:, 2]
        means.append(float(durations.mean()))
    x = np.log(1.0 / np.asarray(epsilons))
    slope, intercept = np.polyfit(x, means, 1)
    fitted = slope * x + intercept
    ss = np.sum((np.asarray(means) - np.mean(means)) ** 2)
    r2 = 1.0 - float(np.sum((np.asarray(means) - fitted) ** 2)) / float(ss)
    th = params_last.theta
    slope_theory = (1.0 - nu * (2.0 + th) / (1.0 + th)) / params_last.lambda_plus
    # epsilons are ascending, so the means must be descending.
    monotone = bool(np.all(np.diff(means) <= 0.0))
    return {"epsilons": epsilons, "means": means, "slope": float(slope),
            "intercept": float(intercept), "r2": r2,
            "slope_theory": slope_theory,
            "slope_rel_err": abs(slope - slope_theory) / slope_theory,
            "monotone": monotone,
            "ok": bool(monotone and r2 >= 0.95
                       and abs(slope - slope_theory) <= 0.25 * slope_theory)}


def trapping_check(summary: BatchSummary, params: ModelParams,
                   slack: float | None = None) -> dict:
    """Fraction of trapped trials whose final state lies in the exit box."""
    if slack is None:
        slack = (params.sigma_bar_eps * params.epsilon ** -0.05) / params.eta_eps
    span = params.lambda_plus - params.lambda_minus
    eta = params.eta_eps
    mask = summary.trial_outcome == TRAPPED
    n_tr = int(np.sum(mask))
    if n_tr == 0:
        return {"fraction": math.nan, "n_trapped": 0, "slack": slack, "ok": False}
    n_wells = summary.trial_n[mask]
    x_fin = summary.trial_x_final[mask]
    p_fin = summary.trial_p_final[mask]
    x_edge = TWO_PI * n_wells - eta / span * (1.0 - slack)
    p_edge = -params.lambda_plus * eta / span * (1.0 - slack)
    inside = (x_fin <= x_edge) & (p_fin <= p_edge)  # closed box
    frac = float(np.mean(inside))
    return {"fraction": frac, "n_trapped": n_tr, "slack": float(slack),
            "x_margin": float(np.max(x_fin - x_edge)),
            "p_margin": float(np.max(p_fin - p_edge)),
            "ok": bool(frac >= 0.95)}


def marcus_shepp_check(params: ModelParams, lambdas=(3.0, 4.0),
                       n_samples: int = 100_000, seed: int = 0,
                       delta: float = 0.1, relax_times: float = 3.0,
                       n_steps: int = 48) -> dict:
    """Empirical supremum tail of a bounded centered Gaussian process.

    Simulates the contracting linear coordinate started at zero over a
    fixed window and compares the exceedance of sup |X|/sigma against the
    bound 2*exp(-lam^2 (1-delta)/2).
    """
    lm, eps = params.lambda_minus, params.epsilon
    t_window = relax_times / abs(lm)
    h = t_window / n_steps
    decay = math.exp(lm * h)
    step_sd = eps * math.sqrt((1.0 - math.exp(2.0 * lm * h)) / (2.0 * abs(lm)))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = np.zeros(n_samples)
    sup_ratio = np.zeros(n_samples)
    for j in range(1, n_steps + 1):
        x = x * decay + step_sd * rng.standard_normal(n_samples)
        sd_t = eps * math.sqrt((1.0 - math.exp(2.0 * lm * j * h)) / (2.0 * abs(lm)))
        np.maximum(sup_ratio, np.abs(x) / sd_t, out=sup_ratio)
    rows = []
    for lam in lambdas:
        bound = 2.0 * math.exp(-lam * lam * (1.0 - delta) / 2.0)
        emp = float(np.mean(sup_ratio >= lam))
        rows.append({"lambda": lam, "empirical": emp, "bound": bound,
                     "ok": bool(emp <= bound or bound >= 1.0)})
    return {"rows": rows, "ok": bool(all(r["ok"] for r in rows)),
            "window": t_window, "n_steps": n_steps}


def comparison_lemma_check(params: ModelParams, n_paths: int = 1000,
                           seed: int = 0, x0: float = 0.2, t_end: float = 0.5,
                           dt: float = 1e-3, nonlinearity=None) -> dict:
    """Sign identity between a scalar drifted path and its linearization.

    Both paths share increments and a common start, so their gap obeys a
    deterministic one-step recursion driven by the drift defect evaluated
    along the nonlinear path.  Up to the first sign change of the defect,
    the gap must carry the defect's sign on every step (one-step
    tolerance at the switch itself).
    """
    lp, eps = params.lambda_plus, params.epsilon
    if nonlinearity is None:
        def nonlinearity(x):
            return saddle_remainder(x, 0, params)
    n_steps = int(round(t_end / dt))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = np.full(n_paths, float(x0))      # nonlinear path
    x_lin = np.full(n_paths, float(x0))  # linear companion
    sign0 = np.zeros(n_paths)            # defect sign before first flip
    flipped = np.zeros(n_paths, dtype=bool)
    viol_before = 0
    viol_at_switch = 0
    checked = 0
    max_gap = 0.0
    sqrt_dt = math.sqrt(dt)
    for j in range(n_steps):
        delta = np.asarray(nonlinearity(x), dtype=float)
        s = np.sign(delta)
        newly = (~flipped) & (sign0 != 0.0) & (s != 0.0) & (s != sign0)
        flipped |= newly
        first = (sign0 == 0.0) & (s != 0.0)
        sign0[first] = s[first]
        dw = rng.standard_normal(n_paths) * sqrt_dt
        x = x + (lp * x + delta) * dt + eps * dw
        x_lin = x_lin + lp * x_lin * dt + eps * dw
        gap = x - x_lin
        max_gap = max(max_gap, float(np.max(np.abs(gap))))
        live = ~flipped & (sign0 != 0.0)
        bad = live & (np.sign(gap) != sign0) & (gap != 0.0)
        viol_before += int(np.sum(bad & ~newly))
        viol_at_switch += int(np.sum(bad & newly))
        checked += int(np.sum(live & ~newly))
    return {"n_paths": n_paths, "steps_checked": checked,
            "violations": viol_before, "violations_at_switch": viol_at_switch,
            "max_abs_gap": max_gap, "ok": viol_before == 0}


def scaling_suite(params_list, n_grid: int = 8193, rho_frac: float = 0.005) -> dict:
    """Log-log exponent fits of the orbit functionals across window widths."""
    if len(params_list) < 3:
        raise ParameterError("scaling fits need at least 3 window widths")
    base = params_list[0]
    if any((p.gamma, p.alpha) != (base.gamma, base.alpha) for p in params_list):
        raise ParameterError("scaling suite expects a single (gamma, alpha) family")
    table = heteroclinic_table(base, n_grid=n_grid)
    lo, hi = table.window
    span = base.lambda_plus - base.lambda_minus
    etas, sr1, sr2, sy2, rho_ratio = [], [], [], [], []
    for pm in params_list:
        eta = pm.eta_eps
        x_start, x_end = lo + eta, hi - eta / (2.0 * span)
        etas.append(eta)
        sr1.append(sigma_functional("r", 1, table, x_start, x_end))
        sr2.append(sigma_functional("r", 2, table, x_start, x_end))
        sy2.append(sigma_functional("y", 2, table, x_start, x_end))
        rho_ratio.append(rho_propagation(table, rho_frac * eta, x_start, x_end).ratio)
    th = base.theta
    fits = {}
    for name, vals, target in (
            ("sigma_r1", sr1, -1.0 / (1.0 + th)),
            ("sigma_r2", sr2, -2.0 / (1.0 + th)),
            ("sigma_y2", sy2, None),
            ("rho_ratio", rho_ratio, (2.0 + th) * th / (1.0 + th))):
        slope, _, r2 = loglog_fit(etas, vals)
        entry = {"slope": slope, "r2": r2, "values": list(map(float, vals))}
        if target is None:
            entry["bound"] = 2.2
            entry["ok"] = bool(abs(slope) <= 2.2 and r2 >= 0.95)
        else:
            entry["target"] = target
            entry["rel_err"] = abs(slope - target) / abs(target)
            entry["ok"] = bool(entry["rel_err"] <= 0.10 and r2 >= 0.95)
        fits[name] = entry
    return {"etas": etas, "fits": fits,
            "ok": bool(all(f["ok"] for f in fits.values()))}
