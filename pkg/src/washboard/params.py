"""Model parameters, derived scales, and the tilted cosine landscape.

The landscape is ``V(x) = cos(x - x_a) - alpha*(x - x_a)`` with
``x_a = arcsin(alpha)``, so its local maxima (the saddles of the phase
flow) sit exactly at even multiples of pi and the minima at
``(2k-1)*pi + 2*x_a``.  Every solver and sampler downstream consumes a
single immutable :class:`ModelParams` built here; all scale inequalities
are enforced at construction so that a bad regime fails loudly instead of
silently invalidating an experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "THETA_MAX",
    "ParameterError",
    "ModelParams",
    "potential_eval",
    "nu_window",
    "make_params",
    "saddle_remainder",
    "nonlinear_remainder",
]

TWO_PI = 2.0 * math.pi

# The admissible window for the critical-window exponent nu is
# ((1+theta)^2/(3+2*theta), 1/2).  It is nonempty iff 2*theta^2 + 2*theta - 1 < 0,
# i.e. iff theta is below the positive root (sqrt(3)-1)/2.
THETA_MAX = (math.sqrt(3.0) - 1.0) / 2.0


class ParameterError(ValueError):
    """Parameter set violates a feasibility bound or a scale ordering."""


def potential_eval(x, alpha: float):
    """Return ``(V, V', V'')`` of the tilted landscape at position ``x``.

    ``x`` may be a scalar or an array.  Requires ``0 <= alpha < 1``: at
    larger tilts the saddles disappear and arcsin is undefined.
    """
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"tilt alpha={alpha!r} outside [0, 1)")
    x_alpha = math.asin(alpha)
    u = np.asarray(x, dtype=float) - x_alpha
    value = np.cos(u) - alpha * u
    slope = -np.sin(u) - alpha
    curvature = -np.cos(u)
    if np.ndim(x) == 0:
        return float(value), float(slope), float(curvature)
    return value, slope, curvature


def nu_window(theta: float) -> tuple[float, float]:
    """Open interval of admissible critical-window exponents for ``theta``."""
    lo = (1.0 + theta) ** 2 / (3.0 + 2.0 * theta)
    return lo, 0.5


@dataclass(frozen=True)
class ModelParams:
    """Immutable bundle of a regime's scalar parameters and derived scales.

    Safe to share across any number of concurrent workers.
    """

    gamma: float
    alpha: float
    epsilon: float
    nu: float
    x_alpha: float
    beta: float
    lambda_plus: float
    lambda_minus: float
    theta: float
    eta_eps: float
    sigma_eps: float
    sigma_bar_eps: float
    sigma_tilde_eps: float


def make_params(gamma: float, alpha: float, epsilon: float, nu: float) -> ModelParams:
    """Build a :class:`ModelParams`, deriving all scales and checking them.

    The saddle eigenslopes solve ``lam**2 + gamma*lam - beta = 0`` with
    ``beta = sqrt(1 - alpha**2)``; ``theta = |lam_minus|/lam_plus - 1``.
    ``nu`` must lie strictly inside the window returned by
    :func:`nu_window`, which requires ``theta < THETA_MAX``.  All scale
    orderings are checked as strict inequalities at the concrete
    ``epsilon``; any violation raises :class:`ParameterError` naming the
    failing inequality.
    """
    if gamma <= 0.0:
        raise ParameterError(f"friction gamma={gamma!r} must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"tilt alpha={alpha!r} outside [0, 1)")
    if epsilon <= 0.0:
        raise ParameterError(f"noise amplitude epsilon={epsilon!r} must be positive")

    x_alpha = math.asin(alpha)
    beta = math.sqrt(1.0 - alpha * alpha)
    disc = math.sqrt(gamma * gamma + 4.0 * beta)
    lambda_plus = 0.5 * (-gamma + disc)
    lambda_minus = 0.5 * (-gamma - disc)
    # Equivalent to |lambda_minus|/lambda_plus - 1, in a cancellation-free form.
    theta = 2.0 * gamma / (disc - gamma)

    lo, hi = nu_window(theta)
    if lo >= hi:
        raise ParameterError(
            f"critical-window empty: theta={theta:.6g} >= (sqrt(3)-1)/2 ~ {THETA_MAX:.6g}; "
            f"reduce gamma (and with it the slope-ratio exponent)"
        )
    if not lo < nu < hi:
        raise ParameterError(
            f"nu={nu!r} outside the admissible window ({lo:.6g}, {hi:.6g})"
        )

    eta = epsilon**nu
    sigma = epsilon * eta ** (-1.0 / (1.0 + theta))
    sigma_tilde = sigma * epsilon**theta
    sigma_bar = sigma ** (1.0 + theta) * eta ** (-theta)

    orderings = [
        ("sigma_tilde_eps < sigma_bar_eps", sigma_tilde, sigma_bar),
        ("sigma_bar_eps < sigma_eps", sigma_bar, sigma),
        ("sigma_eps < eta_eps", sigma, eta),
        ("epsilon < eta_eps**2", epsilon, eta * eta),
        ("eta_eps**2 < sigma_tilde_eps", eta * eta, sigma_tilde),
    ]
    for name, lhs, rhs in orderings:
        if not lhs < rhs:
            raise ParameterError(
                f"scale ordering violated at epsilon={epsilon:g}: {name} "
                f"fails ({lhs:.6g} >= {rhs:.6g})"
            )

    return ModelParams(
        gamma=gamma,
        alpha=alpha,
        epsilon=epsilon,
        nu=nu,
        x_alpha=x_alpha,
        beta=beta,
        lambda_plus=lambda_plus,
        lambda_minus=lambda_minus,
        theta=theta,
        eta_eps=eta,
        sigma_eps=sigma,
        sigma_bar_eps=sigma_bar,
        sigma_tilde_eps=sigma_tilde,
    )


def saddle_remainder(x, k: int, params: ModelParams):
    """Quadratic remainder of the force at the ``k``-th saddle.

    ``psi_k(x) = -V'(x) - beta*(x - 2*k*pi)``; vanishes to second order at
    ``x = 2*k*pi``.
    """
    u = np.asarray(x, dtype=float) - params.x_alpha
    minus_vprime = np.sin(u) + params.alpha
    out = minus_vprime - params.beta * (np.asarray(x, dtype=float) - TWO_PI * k)
    if np.ndim(x) == 0:
        return float(out)
    return out


def nonlinear_remainder(x_base, y, params: ModelParams):
    """Taylor remainder ``phi(X, y) = V''(X)*y - [V'(X+y) - V'(X)]``.

    Measures how far the force is from its linearization at ``X``.  For
    this landscape ``|phi| <= y**2 / 2`` since ``|V'''| <= 1``.
    """
    xb = np.asarray(x_base, dtype=float)
    yy = np.asarray(y, dtype=float)
    u = xb - params.x_alpha
    d2v = -np.cos(u)
    dv_base = -np.sin(u) - params.alpha
    dv_shift = -np.sin(u + yy) - params.alpha
    out = d2v * yy - (dv_shift - dv_base)
    if np.ndim(x_base) == 0 and np.ndim(y) == 0:
        return float(out)
    return out
