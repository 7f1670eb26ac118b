"""Built-in test problems with analytic oracles and known constants.

Three fixtures ship:

* BT  -- Bernoulli testbed: binary context, Bernoulli inner variable,
  squared residual inner function, pseudo-Huber outer, affine model that
  realizes the conditional expectation exactly.  Carries a 4-atom support
  enumeration and an analytic conditional oracle, so every diagnostic runs
  in exact mode.
* LG  -- linear-Gaussian: continuous context, linear regression residual,
  pseudo-Huber outer.  Conditional oracle only (Monte Carlo diagnostics).
* LIN -- BT's distributions and inner function with a linear outer, used for
  the plain-SGD reduction test.

The A2/A3 moment constants of BT and LIN are exact over the canonical probe
boxes beta in [0, 1] and theta in [0, 1]^2 (neither envelope is globally
bounded in beta, so box-relative constants are the honest choice); the
remaining entries are global.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import seeding
from .constants import ConstantLedger
from .errors import ConfigurationError
from .model import ProblemSpec

_BT_P = {0.0: 0.2, 1.0: 0.7}


@dataclass
class BuiltinProblem:
    """A fully specified test problem plus its known constants."""

    name: str
    spec: ProblemSpec
    ledger: ConstantLedger
    g_min: Optional[float] = None
    notes: str = ""
    beta_box: tuple = (0.0, 1.0)
    theta_box: tuple = (0.0, 1.0)


# ---------------------------------------------------------------- BT pieces

def _bt_inner(x, y, beta):
    r = y[0] - beta[0]
    return np.array([r * r]), np.array([[-2.0 * r]])


def _pseudo_huber_outer(u):
    s = u[0]
    d = math.sqrt(1.0 + s * s)
    return d - 1.0, np.array([s / d]), np.array([[1.0 / (d * d * d)]])


def _affine_model(x, theta):
    return (np.array([theta[0] + theta[1] * x[0]]),
            np.array([[1.0], [x[0]]]))


def _bt_sampler(rng):
    x = 1.0 if rng.random() < 0.5 else 0.0
    y = 1.0 if rng.random() < _BT_P[x] else 0.0
    return np.array([x]), np.array([y])


def _bt_oracle(x, beta):
    p = _BT_P[x[0]]
    b = beta[0]
    return (np.array([p * (1.0 - b) ** 2 + (1.0 - p) * b * b]),
            np.array([[2.0 * b - 2.0 * p]]))


def _bt_support():
    return [
        (np.array([0.0]), np.array([0.0]), 0.5 * 0.8),
        (np.array([0.0]), np.array([1.0]), 0.5 * 0.2),
        (np.array([1.0]), np.array([0.0]), 0.5 * 0.3),
        (np.array([1.0]), np.array([1.0]), 0.5 * 0.7),
    ]


def theta_realizing(beta: float):
    """Model parameters interpolating F exactly at the two BT contexts."""
    f0 = _bt_oracle(np.array([0.0]), np.array([beta]))[0][0]
    f1 = _bt_oracle(np.array([1.0]), np.array([beta]))[0][0]
    return np.array([f0, f1 - f0])


def make_bernoulli_testbed() -> BuiltinProblem:
    """The canonical enumerable fixture (BT)."""
    spec = ProblemSpec(
        dim_x=1, dim_y=1, dim_beta=1, dim_theta=2, dim_f=1,
        inner=_bt_inner, outer=_pseudo_huber_outer, model=_affine_model,
        sampler=_bt_sampler, conditional_oracle=_bt_oracle,
        support=_bt_support(),
    )
    # M is the exact supremum of Q/||grad_theta Q||^2 for a two-point
    # uniform context with an interpolating affine model: (3 + sqrt 5)/2.
    ledger = ConstantLedger(
        L_g=1.0, L_hess_g=1.0,
        Lbar_f=2.0, C_f=1.0, Lbar_grad_f=2.0,
        Lbar_psi=2.5 ** 0.25, C_psi=8.5 ** 0.25, Lbar_grad_psi=0.0,
        M=(3.0 + math.sqrt(5.0)) / 2.0,
        provenance={k: "analytic" for k in
                    ("L_g", "L_hess_g", "Lbar_f", "C_f", "Lbar_grad_f",
                     "Lbar_psi", "C_psi", "Lbar_grad_psi", "M")},
    )
    from .diagnostics import minimize_scalar_G
    problem = BuiltinProblem(
        name="BT", spec=spec, ledger=ledger,
        notes="A2/A3 moment constants exact over beta in [0,1], theta in [0,1]^2.",
    )
    _, problem.g_min = minimize_scalar_G(spec, 0.0, 1.0)
    return problem


# ---------------------------------------------------------------- LG pieces

def _lg_inner(x, y, beta):
    return np.array([y[0] - beta @ x]), (-x)[:, None]


def _lg_model(x, theta):
    return np.array([theta @ x]), x[:, None]


class _LGSampler:
    """Joint sampler for the linear-Gaussian problem (picklable)."""

    def __init__(self, a):
        self.a = a

    def __call__(self, rng):
        x = rng.standard_normal(len(self.a))
        y = np.array([self.a @ x + rng.standard_normal()])
        return x, y


class _LGOracle:
    def __init__(self, a):
        self.a = a

    def __call__(self, x, beta):
        return np.array([(self.a - beta) @ x]), (-x)[:, None]


def make_linear_gaussian(n_x: int, seed: int = 0) -> BuiltinProblem:
    """Continuous-context fixture (LG) with a unit-norm regression vector."""
    if n_x < 1:
        raise ConfigurationError("n_x must be >= 1")
    rng = seeding.substream(seed, 101)
    a = rng.standard_normal(n_x)
    a /= np.linalg.norm(a)
    spec = ProblemSpec(
        dim_x=n_x, dim_y=1, dim_beta=n_x, dim_theta=n_x, dim_f=1,
        inner=_lg_inner, outer=_pseudo_huber_outer, model=_lg_model,
        sampler=_LGSampler(a), conditional_oracle=_LGOracle(a),
    )
    # ||X|| has E||X||^4 = n(n+2); residual variance over the beta box
    # [-1, 1]^n is at most (1 + sqrt(n))^2 + 1 with Gaussian fourth moment
    # 3 v^2.  Q = ||a - beta - theta||^2 / 2 gives M = 1/2 exactly.
    v = (1.0 + math.sqrt(n_x)) ** 2 + 1.0
    moment4 = (n_x * (n_x + 2.0)) ** 0.25
    ledger = ConstantLedger(
        L_g=1.0, L_hess_g=1.0,
        Lbar_f=moment4, C_f=(3.0 * v * v) ** 0.25, Lbar_grad_f=0.0,
        Lbar_psi=moment4, C_psi=(3.0 * n_x * n_x) ** 0.25, Lbar_grad_psi=0.0,
        M=0.5,
        provenance={k: "analytic" for k in
                    ("L_g", "L_hess_g", "Lbar_f", "C_f", "Lbar_grad_f",
                     "Lbar_psi", "C_psi", "Lbar_grad_psi", "M")},
    )
    problem = BuiltinProblem(
        name=f"LG({n_x})", spec=spec, ledger=ledger,
        notes="C_f/C_psi are box-relative (beta, theta in [-1,1]^n).",
        beta_box=(-1.0, 1.0), theta_box=(-1.0, 1.0),
    )
    problem.a = a
    return problem


# --------------------------------------------------------------- LIN pieces

def _linear_outer(u):
    return u[0], np.array([1.0]), np.array([[0.0]])


def make_linear_outer() -> BuiltinProblem:
    """BT with a linear outer function (plain-SGD reduction fixture)."""
    spec = ProblemSpec(
        dim_x=1, dim_y=1, dim_beta=1, dim_theta=2, dim_f=1,
        inner=_bt_inner, outer=_linear_outer, model=_affine_model,
        sampler=_bt_sampler, conditional_oracle=_bt_oracle,
        support=_bt_support(),
    )
    ledger = ConstantLedger(
        L_g=1.0, L_hess_g=0.0,
        Lbar_f=2.0, C_f=1.0, Lbar_grad_f=2.0,
        Lbar_psi=2.5 ** 0.25, C_psi=8.5 ** 0.25, Lbar_grad_psi=0.0,
        M=(3.0 + math.sqrt(5.0)) / 2.0,
        provenance={k: "analytic" for k in
                    ("L_g", "L_hess_g", "Lbar_f", "C_f", "Lbar_grad_f",
                     "Lbar_psi", "C_psi", "Lbar_grad_psi", "M")},
    )
    # G(beta) = E[(Y - beta)^2] with E[Y] = 0.45, so the minimum is
    # G(0.45) = 0.45 - 0.405 + 0.2025.
    return BuiltinProblem(
        name="LIN", spec=spec, ledger=ledger, g_min=0.2475,
        notes="Linear outer; the descent-constant machinery is degenerate "
              "(L_hess_g = 0).",
    )


def by_name(name: str, **params) -> BuiltinProblem:
    """Resolve a canonical problem name (BT, LG, LIN) to a fixture."""
    key = name.strip().upper()
    if key == "BT":
        return make_bernoulli_testbed()
    if key == "LIN":
        return make_linear_outer()
    if key.startswith("LG"):
        n_x = int(params.get("n_x", 2))
        seed = int(params.get("seed", 0))
        if "(" in key:
            n_x = int(key[key.index("(") + 1:key.index(")")])
        return make_linear_gaussian(n_x, seed)
    raise ConfigurationError(f"unknown problem name {name!r}")
