"""Shared fixtures: the default regime, its orbit table, and batches.

The Monte Carlo fixtures are deterministic (fixed master seeds), so they
are computed once per session and shared by the module tests and the
acceptance suite.  Setting WASHBOARD_TEST_CACHE to a directory caches the
heavy batches on disk keyed by the simulation source and configuration;
leave it unset for a fully fresh run.
"""

from __future__ import annotations

import hashlib
import os
import pickle
from pathlib import Path

import pytest

from washboard import critical_tilt, make_params, run_batch

MAIN_GAMMA = 0.1
MAIN_NU = 0.44
ACCEPT_SEED = 20260810


def _cache_key(tag: str, params, n_trials: int, seed: int) -> str:
    import washboard.sde as sde_mod
    import washboard.experiments as exp_mod
    src = Path(sde_mod.__file__).read_bytes() + Path(exp_mod.__file__).read_bytes()
    blob = repr((tag, params, n_trials, seed)).encode() + src
    return hashlib.sha256(blob).hexdigest()[:24]


def _batch(tag: str, params, n_trials: int, seed: int, **kw):
    cache_dir = os.environ.get("WASHBOARD_TEST_CACHE")
    if not cache_dir:
        return run_batch(params, n_trials, seed, **kw)
    path = Path(cache_dir) / f"{tag}-{_cache_key(tag, params, n_trials, seed)}.pkl"
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    summary = run_batch(params, n_trials, seed, **kw)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        pickle.dump(summary, fh)
    return summary


@pytest.fixture(scope="session")
def alpha_main():
    return critical_tilt(MAIN_GAMMA)


@pytest.fixture(scope="session")
def params_main(alpha_main):
    """The default verification regime."""
    return make_params(MAIN_GAMMA, alpha_main, 1e-4, MAIN_NU)


@pytest.fixture(scope="session")
def params_e3(alpha_main):
    return make_params(MAIN_GAMMA, alpha_main, 1e-3, MAIN_NU)


@pytest.fixture(scope="session")
def params_e5(alpha_main):
    return make_params(MAIN_GAMMA, alpha_main, 1e-5, MAIN_NU)


@pytest.fixture(scope="session")
def params_cheap(alpha_main):
    """Large-noise regime where trials cost milliseconds."""
    return make_params(MAIN_GAMMA, alpha_main, 1e-2, MAIN_NU)


@pytest.fixture(scope="session")
def table_main(params_main):
    from washboard import heteroclinic_table
    return heteroclinic_table(params_main)


@pytest.fixture(scope="session")
def batch_cheap(params_cheap):
    return _batch("cheap", params_cheap, 2000, 101)


@pytest.fixture(scope="session")
def batch_e3(params_e3):
    return _batch("e3", params_e3, 10_000, ACCEPT_SEED)


@pytest.fixture(scope="session")
def batch_e4(params_main):
    return _batch("e4", params_main, 10_000, ACCEPT_SEED)


@pytest.fixture(scope="session")
def batch_e5(params_e5):
    return _batch("e5", params_e5, 500, ACCEPT_SEED)
