import math

import numpy as np
import pytest

from washboard import (
    ParameterError,
    TrappingError,
    make_params,
    rho_propagation,
    sigma_functional,
    sigma_r_profile,
    sigma_y_profile,
)
from washboard.experiments import loglog_fit

TWO_PI = 2.0 * math.pi


def _span(params, table, eta):
    lo, hi = table.window
    gap = params.lambda_plus - params.lambda_minus
    return lo + eta, hi - eta / (2.0 * gap)


def test_empty_range_is_zero(table_main):
    lo, _ = table_main.window
    assert sigma_functional("r", 2, table_main, lo + 0.5, lo + 0.5) == 0.0
    assert sigma_functional("y", 1, table_main, lo + 0.5, lo + 0.5) == 0.0


def test_invalid_args_rejected(table_main):
    lo, hi = table_main.window
    with pytest.raises(ParameterError):
        sigma_functional("r", 3, table_main, lo + 0.1, hi - 0.1)
    with pytest.raises(ParameterError):
        sigma_functional("q", 1, table_main, lo + 0.1, hi - 0.1)
    with pytest.raises(ParameterError):
        sigma_functional("r", 1, table_main, lo - 1.0, hi - 0.1)


def test_quadrature_refinement_independence(params_main, table_main):
    a, b = _span(params_main, table_main, 1e-3)
    coarse = sigma_functional("r", 2, table_main, a, b, rtol=1e-8)
    fine = sigma_functional("r", 2, table_main, a, b, rtol=1e-11)
    assert abs(coarse - fine) / abs(fine) < 1e-6


def test_expanding_weight_scaling_exponent(params_main, table_main):
    # Window-width scaling of the order-2 expanding-weight functional.
    th = params_main.theta
    etas = (1e-2, 3e-3, 1e-3)
    vals = [sigma_functional("r", 2, table_main, *_span(params_main, table_main, e))
            for e in etas]
    slope, _, r2 = loglog_fit(etas, vals)
    target = -2.0 / (1.0 + th)
    assert abs(slope - target) / abs(target) < 0.10
    assert r2 > 0.95


def test_nested_weight_scaling_bound(params_main, table_main):
    etas = (1e-2, 3e-3, 1e-3)
    vals = [sigma_functional("y", 2, table_main, *_span(params_main, table_main, e))
            for e in etas]
    slope, _, r2 = loglog_fit(etas, vals)
    assert abs(slope) <= 2.0 * 1.1
    assert r2 > 0.95


def test_rho_zero_offset_stays_zero(params_main, table_main):
    # Uniqueness: a zero offset reproduces the connection up to the
    # solver tolerance amplified by the contraction-then-expansion of the
    # window (measured ~1e-8 at the far edge).
    a, b = _span(params_main, table_main, 1e-2)
    prof = rho_propagation(table_main, 0.0, a, b)
    assert np.max(np.abs(prof.rho)) < 5e-8


def test_rho_offset_cap_enforced(table_main):
    lo, hi = table_main.window
    with pytest.raises(ParameterError, match="1%"):
        rho_propagation(table_main, 1e-3, lo + 1e-2, hi - 1e-2)


def test_rho_trapping_detected(table_main):
    # A large negative offset launched close to the saddle dives to p=0.
    lo, hi = table_main.window
    eta = 0.25
    with pytest.raises((TrappingError, ParameterError)):
        rho_propagation(table_main, -0.0025 * eta, lo + 0.001, hi - 0.1)


def test_rho_stays_small_and_peaks_at_launch(params_main, table_main):
    # The offset decays while the landscape pulls inward and only
    # partially regrows near the far saddle, so its sup over the window
    # sits at the launch point and stays a small fraction of the width.
    for eta in (1e-2, 3e-3):
        a, b = _span(params_main, table_main, eta)
        rho0 = 0.005 * eta
        prof = rho_propagation(table_main, rho0, a, b)
        sup = float(np.max(np.abs(prof.rho)))
        assert sup == pytest.approx(abs(rho0), rel=1e-6)
        assert sup <= 0.01 * eta
        assert abs(prof.rho[-1]) <= sup


def test_rho_ratio_scaling_exponent(params_main, table_main):
    th = params_main.theta
    target = (2.0 + th) * th / (1.0 + th)
    etas = (1e-2, 3e-3, 1e-3)
    ratios = []
    for eta in etas:
        a, b = _span(params_main, table_main, eta)
        ratios.append(rho_propagation(table_main, 0.005 * eta, a, b).ratio)
    slope, _, r2 = loglog_fit(etas, ratios)
    assert abs(slope - target) / target < 0.10
    assert r2 > 0.95
    # Two-point variant quoted alongside the fit.
    two_point = (math.log(ratios[0]) - math.log(ratios[2])) / (
        math.log(etas[0]) - math.log(etas[2]))
    assert abs(two_point - target) / target < 0.10


def test_variance_identity_and_scale(params_main, table_main):
    a, b = _span(params_main, table_main, params_main.eta_eps)
    prof = sigma_r_profile(params_main, table_main, (a, b))
    assert prof.rel_mismatch < 1e-6
    assert prof.sigma2[0] == 0.0
    assert np.all(np.diff(prof.sigma2) >= -1e-18)
    ratio = prof.sup_sigma / params_main.sigma_eps
    assert 0.1 <= ratio <= 10.0


@pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5])
def test_variance_scale_ratio_across_noise_levels(alpha_main, table_main, eps):
    params = make_params(0.1, alpha_main, eps, 0.44)
    a, b = _span(params, table_main, params.eta_eps)
    prof = sigma_r_profile(params, table_main, (a, b))
    assert 0.1 <= prof.sup_sigma / params.sigma_eps <= 10.0
    prof_y = sigma_y_profile(params, table_main, (a, b))
    assert prof_y.rel_mismatch < 1e-6
    assert 0.1 <= prof_y.sup_sigma / (eps / params.eta_eps) <= 10.0


def test_variance_identity_on_reloaded_table(tmp_path, params_main, table_main):
    # A table reloaded from CSV has no solver handle; the identity must
    # still hold through the interpolant alone.
    from washboard import load_orbit, save_orbit
    save_orbit(table_main, tmp_path / "o.csv")
    loaded = load_orbit(tmp_path / "o.csv")
    a, b = _span(params_main, table_main, params_main.eta_eps)
    ref = sigma_r_profile(params_main, table_main, (a, b))
    prof = sigma_r_profile(params_main, loaded, (a, b))
    assert prof.rel_mismatch < 1e-6
    assert prof.sigma2_end_time == pytest.approx(ref.sigma2_end_time, rel=1e-5)
