"""Shared fixtures: built-in problems and the estimated BT ledger.

The estimated ledger and the compliant (lambda, gamma, c1, c2) bundle are
session-scoped because estimation is the single most expensive setup step
and several test modules verify against the same numbers.
"""

import pytest
from scipy.optimize import minimize_scalar

from ctxopt import constants, problems, seeding

MASTER_SEED = 20260823


@pytest.fixture(scope="session")
def bt():
    return problems.make_bernoulli_testbed()


@pytest.fixture(scope="session")
def lin():
    return problems.make_linear_outer()


@pytest.fixture(scope="session")
def lg():
    return problems.make_linear_gaussian(2, seed=0)


@pytest.fixture(scope="session")
def bt_estimated_ledger(bt):
    rng = seeding.substream(MASTER_SEED, 17)
    return constants.estimate_ledger(
        bt.spec, sample_count=10000, probe_count=10000, rng=rng,
        beta_box=bt.beta_box, theta_box=bt.theta_box)


def compliant_constants(ledger):
    """Smallest-threshold compliant (lambda, gamma) pair and its weights.

    Picks lambda minimizing gamma_min over (floor, 50*floor), then gamma at
    1.2x the threshold so every strict inequality holds with margin.
    """
    floor = constants.lambda_floor(ledger)
    result = minimize_scalar(
        lambda lam: constants.gamma_min(ledger, lam),
        bounds=(floor * 1.0001, floor * 50.0), method="bounded",
        options={"xatol": 1e-10})
    lam = float(result.x)
    gamma = 1.2 * constants.gamma_min(ledger, lam)
    return constants.derive(ledger, lam, gamma)


@pytest.fixture(scope="session")
def bt_compliant(bt_estimated_ledger):
    return compliant_constants(bt_estimated_ledger)
