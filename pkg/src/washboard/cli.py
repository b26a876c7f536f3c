"""Command dispatch and file output.

Every artifact starts with a comment header embedding the fully resolved
configuration and seed, so any file on disk identifies the run that
produced it.  Machine-readable results go to ``summary.json`` (stable
key order, no timestamps: identical runs give identical bytes); bulk
numbers go to CSV with documented, versioned schemas.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .deterministic import (
    DetState,
    _vprime,
    critical_tilt,
    heteroclinic_table,
    integrate_det,
    orbit_ode_residuals,
    save_orbit,
)
from .experiments import (
    comparison_lemma_check,
    geometric_gof,
    marcus_shepp_check,
    run_batch,
    scaling_suite,
    timescale_scan,
    variance_validation,
)
from .params import ParameterError, make_params
from .sde import TRAPPED, simulate_trial
from .functionals import sigma_r_profile, sigma_y_profile

__all__ = ["dispatch", "main"]

TWO_PI = 2.0 * math.pi


class _Flow:
    """Noiseless parameter shim for portrait integration."""

    def __init__(self, gamma, alpha):
        self.gamma = gamma
        self.alpha = alpha


def _write_csv(path: Path, cfg: RunConfig, schema: str, header: str,
               rows) -> None:
    lines = [f"# washboard {schema}"]
    lines += [f"# {h}" for h in cfg.as_header_lines()]
    lines.append(header)
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_summary(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2,
                               default=float) + "\n")


def _params_for(cfg: RunConfig, epsilon: float | None = None):
    alpha = critical_tilt(cfg.gamma, cfg.tol_alpha)
    return make_params(cfg.gamma, alpha, epsilon or cfg.epsilon, cfg.nu)


def _cmd_critical_tilt(cfg: RunConfig, out: Path) -> int:
    alpha = critical_tilt(cfg.gamma, cfg.tol_alpha)
    print(f"alpha_gamma({cfg.gamma}) = {alpha!r}")
    rows = [(g, critical_tilt(g, cfg.tol_alpha)) for g in cfg.gamma_list]
    _write_csv(out / "alpha_curve.csv", cfg, "alphacurve-v1",
               "gamma,alpha_gamma", rows)
    return 0


def _cmd_heteroclinic(cfg: RunConfig, out: Path) -> int:
    params = _params_for(cfg)
    table = heteroclinic_table(params, n_grid=cfg.n_grid)
    save_orbit(table, out / "orbit.csv", header_lines=cfg.as_header_lines())
    resid = float(orbit_ode_residuals(table).max())
    flux_target = TWO_PI * params.alpha / params.gamma
    flux_rel = abs(table.flux - flux_target) / flux_target
    ok = (resid < cfg.tol_orbit
          and abs(table.left_slope - params.lambda_plus) < 1e-3
          and abs(table.right_slope - params.lambda_minus) < 1e-3
          and flux_rel < 1e-6)
    print(f"orbit table: max residual {resid:.3e}, flux residual {flux_rel:.3e}")
    return 0 if ok else 1


def _portrait_orbits(gamma: float, alpha: float, n_orbits: int = 12):
    """Sample trajectories covering one landscape period."""
    starts = []
    for i in range(n_orbits):
        frac = (i + 0.5) / n_orbits
        starts.append((-math.pi + TWO_PI * frac, 2.4 * (frac - 0.5) * 2.0))
    starts += [(-math.pi, 1.0), (-math.pi, -1.0), (0.5, 0.0), (2.0, 0.0)]
    flow = _Flow(gamma, alpha)
    rows = []
    for idx, (x0, p0) in enumerate(starts):
        path = integrate_det(flow, DetState(0.0, x0, p0), 25.0, tol=1e-9)
        for t in np.linspace(0.0, path.t1, 400):
            s = path(t)
            rows.append((idx, float(t), s.x, s.p))
    return rows


def _cmd_phase_portrait(cfg: RunConfig, out: Path) -> int:
    alpha_c = critical_tilt(cfg.gamma, cfg.tol_alpha)
    regimes = {
        "periodic": (0.0, 0.0),
        "running_only": (cfg.gamma, 1.2),
        "locked": (cfg.gamma, 0.5 * alpha_c),
        "coexist": (cfg.gamma, 0.5 * (alpha_c + 1.0)),
        "critical": (cfg.gamma, alpha_c),
    }
    for name, (g, a) in regimes.items():
        xs = np.linspace(-TWO_PI, 2.0 * TWO_PI, 3 * cfg.portrait_grid)
        ps = np.linspace(-3.0, 3.0, cfg.portrait_grid)
        rows = []
        for x in xs:
            for p in ps:
                rows.append((float(x), float(p), float(p),
                             float(-g * p - _vprime(x, a))))
        _write_csv(out / f"vectorfield_{name}.csv", cfg, "vectorfield-v1",
                   "x,p,dxdt,dpdt", rows)
        _write_csv(out / f"orbits_{name}.csv", cfg, "orbits-v1",
                   "orbit,t,x,p", _portrait_orbits(g, a))
    params = make_params(cfg.gamma, alpha_c, cfg.epsilon, cfg.nu)
    table = heteroclinic_table(params, n_grid=cfg.n_grid)
    save_orbit(table, out / "separatrix.csv", header_lines=cfg.as_header_lines())
    return 0


def _cmd_simulate(cfg: RunConfig, out: Path) -> int:
    params = _params_for(cfg)
    rec = simulate_trial(params, seed=cfg.master_seed, dt=cfg.dt,
                         k_max=cfg.k_max, t_max=cfg.t_max, record_trace=True)
    rows = [(float(t), float(x), float(p), float(z), float(v), int(k),
             "critical" if ph else "approaching")
            for t, x, p, z, v, k, ph in rec.trace]
    _write_csv(out / "trace.csv", cfg, "trace-v1", "t,x,p,z,v,k,phase", rows)
    print(f"trial outcome={rec.outcome} wells={rec.n_wells} "
          f"events={len(rec.events)} t_final={rec.t_final:.4f}")
    return 0


def _batch_rows(summary):
    rows = []
    for i in range(summary.n_trials):
        n = summary.trial_n[i]
        rows.append((i, int(n) if n >= 0 else -1,
                     float(summary.trial_t_final[i]),
                     float(summary.trial_x_final[i]),
                     float(summary.trial_p_final[i]),
                     int(summary.trial_n_events[i]),
                     str(summary.trial_outcome[i])))
    return rows


def _cmd_crossing_stats(cfg: RunConfig, out: Path) -> int:
    params = _params_for(cfg)
    summary = run_batch(params, cfg.n_trials, cfg.master_seed, dt=cfg.dt,
                        k_max=cfg.k_max, t_max=cfg.t_max)
    gof = geometric_gof(summary)
    _write_csv(out / "batch.csv", cfg, "batch-v1",
               "seed,N,T_final,x_final,p_final,n_events,outcome",
               _batch_rows(summary))
    ev_rows = [(int(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4]),
                float(r[5]), int(r[6])) for r in summary.event_table]
    _write_csv(out / "events.csv", cfg, "events-v1",
               "trial,k,S_k,T_k1,z_at_S,v_at_T,crossed", ev_rows)
    payload = json.loads(summary.to_json())
    payload["gof"] = gof
    _write_summary(out / "summary.json", payload)
    print(f"geometric check: {'pass' if gof['ok'] else 'FAIL'}; "
          f"reliable={summary.reliable}")
    return 0 if gof["ok"] and summary.reliable else 1


def _cmd_validate(cfg: RunConfig, out: Path) -> int:
    params = _params_for(cfg)
    var = variance_validation(params, seed=cfg.master_seed)
    etas = cfg.eta_list
    fam = [make_params(params.gamma, params.alpha, eta ** (1.0 / cfg.nu), cfg.nu)
           for eta in etas]
    scaling = scaling_suite(fam, n_grid=cfg.scaling_n_grid)
    scan = timescale_scan(cfg.gamma, cfg.nu, cfg.epsilon_list,
                          n_trials=max(400, cfg.n_trials // 25),
                          master_seed=cfg.master_seed, alpha=params.alpha)
    table = heteroclinic_table(params, n_grid=cfg.n_grid)
    lo, hi = table.window
    span = (lo + params.eta_eps,
            hi - params.eta_eps / (2 * (params.lambda_plus - params.lambda_minus)))
    prof_r = sigma_r_profile(params, table, span)
    prof_y = sigma_y_profile(params, table, span)
    vrows = [(float(t), float(x), float(s2), "sigma_r2")
             for t, x, s2 in zip(prof_r.ts, prof_r.xs, prof_r.sigma2)]
    vrows += [(float(t), float(x), float(s2), "sigma_y2")
              for t, x, s2 in zip(prof_y.ts, prof_y.xs, prof_y.sigma2)]
    _write_csv(out / "variance.csv", cfg, "variance-v1", "t,x,value,series", vrows)
    _write_csv(out / "timescale.csv", cfg, "timescale-v1",
               "epsilon,ln_inv_eps,mean_crossing_time",
               [(e, math.log(1.0 / e), m)
                for e, m in zip(scan["epsilons"], scan["means"])])
    payload = {"variance": var, "scaling": scaling, "timescale": scan,
               "sss_rel_mismatch": prof_r.rel_mismatch}
    _write_summary(out / "summary.json", payload)
    ok = var["ok"] and scaling["ok"] and scan["ok"]
    print(f"validate: variance={'pass' if var['ok'] else 'FAIL'} "
          f"scaling={'pass' if scaling['ok'] else 'FAIL'} "
          f"timescale={'pass' if scan['ok'] else 'FAIL'}")
    return 0 if ok else 1


def _cmd_appendix(cfg: RunConfig, out: Path) -> int:
    params = _params_for(cfg)
    ms = marcus_shepp_check(params, seed=cfg.master_seed)
    comp = comparison_lemma_check(params, seed=cfg.master_seed)
    _write_summary(out / "summary.json", {"marcus_shepp": ms, "comparison": comp})
    ok = ms["ok"] and comp["ok"]
    print(f"appendix: marcus-shepp={'pass' if ms['ok'] else 'FAIL'} "
          f"comparison={'pass' if comp['ok'] else 'FAIL'}")
    return 0 if ok else 1


_HANDLERS = {
    "critical-tilt": _cmd_critical_tilt,
    "heteroclinic": _cmd_heteroclinic,
    "phase-portrait": _cmd_phase_portrait,
    "simulate": _cmd_simulate,
    "crossing-stats": _cmd_crossing_stats,
    "validate": _cmd_validate,
    "appendix-checks": _cmd_appendix,
}


def dispatch(cfg: RunConfig) -> int:
    """Run one command; returns the process exit status."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _HANDLERS[cfg.command](cfg, out)
    except (ParameterError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="wash",
        description="Monte Carlo laboratory for a critically tilted washboard "
                    "potential: deterministic structure, noisy trials, and "
                    "statistical verification campaigns.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None,
                        help="key = value configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override master_seed")
    parser.add_argument("--out", type=str, default=None,
                        help="override output_dir")
    args = parser.parse_args(argv)
    text = args.config.read_text() if args.config else ""
    try:
        cfg = parse_config(text, command=args.command,
                           overrides={"master_seed": args.seed,
                                      "output_dir": args.out})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
