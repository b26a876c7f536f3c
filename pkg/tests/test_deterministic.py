import math

import numpy as np
import pytest

from washboard import (
    DetState,
    OrbitClass,
    ShootingError,
    classify_orbit,
    critical_tilt,
    heteroclinic_table,
    integrate_det,
    load_orbit,
    make_params,
    omega_along,
    orbit_ode_residuals,
    save_orbit,
)
from washboard.deterministic import riccati_residuals

TWO_PI = 2.0 * math.pi
FOUR_OVER_PI = 4.0 / math.pi

# Regression fixture: bisection at tol 1e-10 (first computed 2026-08).
ALPHA_GAMMA_01 = 0.12700885979719934


class Flow:
    def __init__(self, gamma, alpha):
        self.gamma = gamma
        self.alpha = alpha


def test_equilibrium_stays_put():
    # x = pi is a stationary point of the untilted landscape.
    path = integrate_det(Flow(0.0, 0.0), DetState(0.0, math.pi, 0.0), 10.0)
    end = path(10.0)
    assert abs(end.x - math.pi) < 1e-9
    assert abs(end.p) < 1e-9


def test_energy_conserved_without_friction():
    path = integrate_det(Flow(0.0, 0.0), DetState(0.0, 0.3, 0.5), 50.0, tol=1e-11)
    ts = np.linspace(0.0, 50.0, 500)
    energies = [0.5 * path(t).p**2 + math.cos(path(t).x) for t in ts]
    assert max(energies) - min(energies) < 1e-8


def test_classification_regimes():
    assert classify_orbit(0.1, 0.01) is OrbitClass.LOCKED
    assert classify_orbit(0.1, 0.99) is OrbitClass.RUNNING
    assert classify_orbit(0.1, 1.3) is OrbitClass.RUNNING  # saddle-free tilt


def test_classification_flips_across_critical_tilt():
    alpha = critical_tilt(0.1)
    assert classify_orbit(0.1, alpha - 1e-7, tol=1e-13) is OrbitClass.LOCKED
    assert classify_orbit(0.1, alpha + 1e-7, tol=1e-13) is OrbitClass.RUNNING


def test_classification_monotone_in_tilt():
    alpha = critical_tilt(0.1)
    grid = alpha + np.linspace(-5e-3, 5e-3, 10)
    verdicts = [classify_orbit(0.1, a, tol=1e-13) for a in grid]
    below = [v for a, v in zip(grid, verdicts) if a < alpha]
    above = [v for a, v in zip(grid, verdicts) if a > alpha]
    assert all(v is OrbitClass.LOCKED for v in below)
    assert all(v is OrbitClass.RUNNING for v in above)


def test_critical_tilt_regression_and_scaling():
    assert critical_tilt(0.1) == pytest.approx(ALPHA_GAMMA_01, abs=1e-9)
    assert abs(ALPHA_GAMMA_01 - 0.127) < 2e-3
    # Frictionless-limit oracle: the undamped separatrix 2|sin(x/2)| has
    # area 8 over one period, and the flux identity forces
    # alpha/gamma -> 8/(2*pi) = 4/pi.
    assert critical_tilt(0.01) / 0.01 == pytest.approx(FOUR_OVER_PI, rel=0.02)
    assert critical_tilt(0.05) / 0.05 == pytest.approx(FOUR_OVER_PI, rel=0.10)


def test_critical_tilt_rejects_bad_input():
    with pytest.raises(Exception):
        critical_tilt(0.7)
    with pytest.raises(Exception):
        critical_tilt(0.1, tol_alpha=1e-15)


def test_manifold_arrives_with_small_momentum(params_main):
    # Launched along the expanding slope at the critical tilt, the path
    # reaches the far saddle with nearly no momentum left.
    lam_p = params_main.lambda_plus
    flow = Flow(params_main.gamma, params_main.alpha)
    path = integrate_det(flow, DetState(0.0, 1e-6, lam_p * 1e-6), 60.0, tol=1e-12)
    # walk the dense solution until x reaches 2*pi - 5e-5
    lo, hi = path.t0, path.t1
    target = TWO_PI - 5e-5
    ts = np.linspace(lo, hi, 20000)
    xs = np.array([path(t).x for t in ts])
    idx = int(np.argmax(xs >= target))
    assert xs[idx] >= target
    assert abs(path(ts[idx]).p) < 1e-4


def test_heteroclinic_table_invariants(params_main, table_main):
    tab = table_main
    assert tab.kind == "heteroclinic"
    assert tab.p_values[0] <= 2e-8 and tab.p_values[-1] <= 2e-8
    assert np.all(tab.p_values[1:-1] > 0.0)
    assert tab.left_slope == pytest.approx(params_main.lambda_plus, abs=1e-3)
    assert tab.right_slope == pytest.approx(params_main.lambda_minus, abs=1e-3)
    resid = orbit_ode_residuals(tab)
    assert resid.max() < 1e-8


@pytest.mark.parametrize("gamma,nu", [(0.05, 0.45), (0.1, 0.44), (0.2, 0.47)])
def test_flux_identity(gamma, nu):
    alpha = critical_tilt(gamma)
    params = make_params(gamma, alpha, 1e-4, nu)
    tab = heteroclinic_table(params)
    target = TWO_PI * alpha / gamma
    assert abs(tab.flux - target) / target < 1e-6


def test_frictionless_limit_orbit_apex():
    # The undamped separatrix is 2|sin(x/2)| by energy conservation, so
    # the apex tends to 2 as friction vanishes.
    alpha = critical_tilt(0.01)
    params = make_params(0.01, alpha, 1e-4, 0.45)
    tab = heteroclinic_table(params)
    assert tab.orbit_callable()(math.pi) == pytest.approx(2.0, abs=5e-3)


def test_table_requires_critical_tilt(params_main):
    off = make_params(params_main.gamma, params_main.alpha + 1e-3,
                      params_main.epsilon, params_main.nu)
    with pytest.raises(ShootingError, match="tol_alpha"):
        heteroclinic_table(off)


def test_omega_endpoints_and_bound(params_main, table_main):
    lo, hi = table_main.window
    assert omega_along(table_main, lo) == pytest.approx(params_main.lambda_plus,
                                                        abs=1e-3)
    assert omega_along(table_main, hi) == pytest.approx(params_main.lambda_minus,
                                                        abs=1e-3)
    with pytest.raises(ValueError):
        omega_along(table_main, hi + 1.0)
    # The slope stays bounded uniformly in the window width.
    span = params_main.lambda_plus - params_main.lambda_minus
    sups = []
    for eta in (1e-2, 1e-3):
        xs = np.linspace(lo + eta, hi - eta / (2 * span), 20001)
        sups.append(float(np.abs(omega_along(table_main, xs)).max()))
    assert abs(sups[0] / sups[1] - 1.0) < 0.10
    assert max(sups) < 1.5


def test_riccati_relation_holds_almost_everywhere(table_main):
    # The monotone interpolant clamps its slope at the orbit's apex, so a
    # couple of midpoints there are O(1); everywhere else the relation
    # holds to interpolation accuracy.
    rr = riccati_residuals(table_main)
    assert np.median(rr) < 1e-5
    assert np.quantile(rr, 0.99) < 5e-3
    assert rr.max() < 2.0


def test_orbit_serialization_roundtrip(tmp_path, table_main):
    path = tmp_path / "orbit.csv"
    save_orbit(table_main, path, header_lines=["test = roundtrip"])
    loaded = load_orbit(path)
    assert loaded.k == table_main.k
    assert loaded.kind == "heteroclinic"
    np.testing.assert_allclose(loaded.grid, table_main.grid)
    np.testing.assert_allclose(loaded.p_values, table_main.p_values)
    assert loaded.flux == pytest.approx(table_main.flux)
    # A reloaded table has no dense handle but still interpolates.
    mid = float(loaded.p_at(loaded.grid[1234]))
    assert mid == pytest.approx(table_main.p_values[1234])
    first_line = path.read_text().splitlines()[0]
    assert first_line.startswith("# washboard") or first_line.startswith("# test")
