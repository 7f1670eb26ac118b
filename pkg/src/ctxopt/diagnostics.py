"""Analytical diagnostics: Q, grad G, V, the Lyapunov function, and checks.

Every quantity can be computed in one of two modes:

* ``"exact"`` enumerates the finite support of (X, Y) and is the default for
  all verification work; standard errors are zero.
* ``"mc"`` averages over fresh joint samples and requires the conditional
  oracle for F, because Q, the Bregman gap, and the expected direction all
  contain F inside nonlinear expressions where a single-sample plug-in is
  biased.  A nested inner-sampling fallback is deliberately not provided:
  the whole point of the method is that conditional sampling is infeasible.

Problems lacking both support and oracle admit engine-only runs with no
value diagnostics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Direction, IterateState, compute_direction
from .errors import CapabilityError, ConfigurationError
from .model import (
    ProblemSpec,
    conditional_oracle,
    enumerate_conditional,
    evaluate_model,
    evaluate_outer,
    sample_joint,
    support_groups,
)

Array = np.ndarray


@dataclass
class DiagnosticsReport:
    """Snapshot of all analytical quantities at one point (beta, theta)."""

    q_value: float
    q_stderr: float
    grad_G: Array
    grad_G_stderr: Array
    v_value: float
    delta_lambda: float
    w_value: float
    gamma_dir: Direction
    mode: str


def _require_exact(problem: ProblemSpec):
    if not problem.has_support:
        raise CapabilityError("exact mode requires a support enumeration")


def _require_mc(problem: ProblemSpec):
    if not problem.has_oracle:
        raise CapabilityError(
            "Monte Carlo diagnostics require a conditional oracle for F"
        )


def _F_at(problem: ProblemSpec, x, beta, cond=None):
    if problem.has_oracle:
        return conditional_oracle(problem, x, beta)
    return enumerate_conditional(problem, x, beta, cond)


def _mc_samples(problem, n_samples, rng):
    if rng is None:
        raise ConfigurationError("Monte Carlo mode needs an rng")
    if n_samples < 1:
        raise ConfigurationError("n_samples must be positive")
    return [sample_joint(problem, rng) for _ in range(n_samples)]


def _mean_stderr(values):
    values = np.asarray(values)
    n = values.shape[0]
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, stderr


def tracking_error_Q(problem: ProblemSpec, beta, theta, mode="exact",
                     n_samples=10000, rng=None):
    """Mean squared model gap Q = (1/2) E ||F(X,beta) - psi(X,theta)||^2."""
    if mode == "exact":
        _require_exact(problem)
        q = 0.0
        for x, p_x, cond in support_groups(problem):
            F, _ = _F_at(problem, x, beta, cond)
            psi, _ = evaluate_model(problem, x, theta)
            gap = F - psi
            q += 0.5 * p_x * float(gap @ gap)
        return q, 0.0
    _require_mc(problem)
    vals = []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, _ = conditional_oracle(problem, x, beta)
        psi, _ = evaluate_model(problem, x, theta)
        gap = F - psi
        vals.append(0.5 * float(gap @ gap))
    mean, stderr = _mean_stderr(vals)
    return float(mean), float(stderr)


def value_G(problem: ProblemSpec, beta, mode="exact", n_samples=10000, rng=None):
    """Objective value G(beta) = E[g(F(X, beta))]."""
    if mode == "exact":
        _require_exact(problem)
        g_total = 0.0
        for x, p_x, cond in support_groups(problem):
            F, _ = _F_at(problem, x, beta, cond)
            g_val, _, _ = evaluate_outer(problem, F)
            g_total += p_x * g_val
        return g_total, 0.0
    _require_mc(problem)
    vals = []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, _ = conditional_oracle(problem, x, beta)
        g_val, _, _ = evaluate_outer(problem, F)
        vals.append(g_val)
    mean, stderr = _mean_stderr(vals)
    return float(mean), float(stderr)


def grad_G(problem: ProblemSpec, beta, mode="exact", n_samples=10000, rng=None):
    """Objective gradient E[grad_beta F(X,beta) grad g(F(X,beta))]."""
    if mode == "exact":
        _require_exact(problem)
        grad = np.zeros(problem.dim_beta)
        for x, p_x, cond in support_groups(problem):
            F, F_grad = _F_at(problem, x, beta, cond)
            _, g_grad, _ = evaluate_outer(problem, F)
            grad += p_x * (F_grad @ g_grad)
        return grad, np.zeros(problem.dim_beta)
    _require_mc(problem)
    vals = []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, F_grad = conditional_oracle(problem, x, beta)
        _, g_grad, _ = evaluate_outer(problem, F)
        vals.append(F_grad @ g_grad)
    return _mean_stderr(vals)


def grad_Q(problem: ProblemSpec, beta, theta, mode="exact",
           n_samples=10000, rng=None):
    """Gradient of Q: E[[grad F; -grad psi] (F - psi)] split into blocks."""
    if mode == "exact":
        _require_exact(problem)
        g_beta = np.zeros(problem.dim_beta)
        g_theta = np.zeros(problem.dim_theta)
        for x, p_x, cond in support_groups(problem):
            F, F_grad = _F_at(problem, x, beta, cond)
            psi, psi_grad = evaluate_model(problem, x, theta)
            gap = F - psi
            g_beta += p_x * (F_grad @ gap)
            g_theta -= p_x * (psi_grad @ gap)
        return g_beta, g_theta
    _require_mc(problem)
    vb, vt = [], []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, F_grad = conditional_oracle(problem, x, beta)
        psi, psi_grad = evaluate_model(problem, x, theta)
        gap = F - psi
        vb.append(F_grad @ gap)
        vt.append(-(psi_grad @ gap))
    return _mean_stderr(vb)[0], _mean_stderr(vt)[0]


def nonoptimality_V(problem: ProblemSpec, beta, theta, c1, c2, mode="exact",
                    n_samples=10000, rng=None) -> float:
    """Non-optimality measure V = c1*Q + c2*||grad G||^2."""
    if c1 <= 0 or c2 <= 0:
        raise ConfigurationError("c1 and c2 must be positive")
    q, _ = tracking_error_Q(problem, beta, theta, mode, n_samples, rng)
    g, _ = grad_G(problem, beta, mode, n_samples, rng)
    return c1 * q + c2 * float(g @ g)


def bregman_delta_and_W(problem: ProblemSpec, beta, theta, lam,
                        mode="exact", n_samples=10000, rng=None):
    """Regularized Bregman gap Delta^lambda and Lyapunov value W = G + Delta.

    Delta = E[g(F) - g(psi) - grad g(psi)^T (F - psi) + (lam/2)||F - psi||^2]
    is nonnegative whenever lam >= L_hess_g, making W an upper bound on G.
    """
    def term(F, psi, g_psi_grad, g_F_val, g_psi_val):
        gap = F - psi
        return (g_F_val - g_psi_val - float(g_psi_grad @ gap)
                + 0.5 * lam * float(gap @ gap))

    if mode == "exact":
        _require_exact(problem)
        delta = 0.0
        g_total = 0.0
        for x, p_x, cond in support_groups(problem):
            F, _ = _F_at(problem, x, beta, cond)
            psi, _ = evaluate_model(problem, x, theta)
            g_F, _, _ = evaluate_outer(problem, F)
            g_psi, g_psi_grad, _ = evaluate_outer(problem, psi)
            delta += p_x * term(F, psi, g_psi_grad, g_F, g_psi)
            g_total += p_x * g_F
        return delta, g_total + delta
    _require_mc(problem)
    deltas, gs = [], []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, _ = conditional_oracle(problem, x, beta)
        psi, _ = evaluate_model(problem, x, theta)
        g_F, _, _ = evaluate_outer(problem, F)
        g_psi, g_psi_grad, _ = evaluate_outer(problem, psi)
        deltas.append(term(F, psi, g_psi_grad, g_F, g_psi))
        gs.append(g_F)
    delta = float(np.mean(deltas))
    return delta, float(np.mean(gs)) + delta


def expected_direction_Gamma(problem: ProblemSpec, beta, theta, gamma,
                             mode="exact", n_samples=10000, rng=None) -> Direction:
    """Expected update direction Gamma at (beta, theta).

    Matches the Monte Carlo mean of ``engine.compute_direction`` at the same
    point (the single-sample direction is conditionally unbiased).
    """
    if mode == "exact":
        _require_exact(problem)
        d_beta = np.zeros(problem.dim_beta)
        d_theta = np.zeros(problem.dim_theta)
        for x, p_x, cond in support_groups(problem):
            F, F_grad = _F_at(problem, x, beta, cond)
            psi, psi_grad = evaluate_model(problem, x, theta)
            _, g_psi_grad, _ = evaluate_outer(problem, psi)
            d_beta -= p_x * (F_grad @ g_psi_grad)
            d_theta += p_x * gamma * (psi_grad @ (F - psi))
        return Direction(d_beta, d_theta)
    _require_mc(problem)
    vb, vt = [], []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, F_grad = conditional_oracle(problem, x, beta)
        psi, psi_grad = evaluate_model(problem, x, theta)
        _, g_psi_grad, _ = evaluate_outer(problem, psi)
        vb.append(-(F_grad @ g_psi_grad))
        vt.append(gamma * (psi_grad @ (F - psi)))
    return Direction(_mean_stderr(vb)[0], _mean_stderr(vt)[0])


def grad_W(problem: ProblemSpec, beta, theta, lam, mode="exact",
           n_samples=10000, rng=None):
    """Gradient of the Lyapunov function, split into beta and theta blocks.

    beta block:  E[grad F grad g(F)] + E[grad F (grad g(F) - grad g(psi))]
                 + lam E[grad F (F - psi)]
    theta block: -E[grad psi hess g(psi) (F - psi)] - lam E[grad psi (F - psi)]
    """
    def blocks(F, F_grad, psi, psi_grad):
        _, g_F_grad, _ = evaluate_outer(problem, F)
        _, g_psi_grad, g_psi_hess = evaluate_outer(problem, psi)
        gap = F - psi
        gb = (F_grad @ g_F_grad
              + F_grad @ (g_F_grad - g_psi_grad)
              + lam * (F_grad @ gap))
        gt = -(psi_grad @ (g_psi_hess @ gap)) - lam * (psi_grad @ gap)
        return gb, gt

    if mode == "exact":
        _require_exact(problem)
        g_beta = np.zeros(problem.dim_beta)
        g_theta = np.zeros(problem.dim_theta)
        for x, p_x, cond in support_groups(problem):
            F, F_grad = _F_at(problem, x, beta, cond)
            psi, psi_grad = evaluate_model(problem, x, theta)
            gb, gt = blocks(F, F_grad, psi, psi_grad)
            g_beta += p_x * gb
            g_theta += p_x * gt
        return g_beta, g_theta
    _require_mc(problem)
    vb, vt = [], []
    for x, _ in _mc_samples(problem, n_samples, rng):
        F, F_grad = conditional_oracle(problem, x, beta)
        psi, psi_grad = evaluate_model(problem, x, theta)
        gb, gt = blocks(F, F_grad, psi, psi_grad)
        vb.append(gb)
        vt.append(gt)
    return _mean_stderr(vb)[0], _mean_stderr(vt)[0]


def direction_moment_stats(problem: ProblemSpec, beta, theta, gamma,
                           n: int, rng: np.random.Generator):
    """Empirical second moments of the stochastic direction at a fixed state.

    Decomposes the mean of ||d_tilde||^2 into ||mean||^2 (estimating C_d^2)
    plus the variance about the mean (estimating sigma^2).
    """
    if n < 1000:
        raise ConfigurationError("direction_moment_stats needs n >= 1000")
    state = IterateState(np.asarray(beta, float), np.asarray(theta, float))
    dirs = np.empty((n, problem.dim_beta + problem.dim_theta))
    for i in range(n):
        d = compute_direction(problem, state, sample_joint(problem, rng), gamma)
        dirs[i, :problem.dim_beta] = d.d_beta
        dirs[i, problem.dim_beta:] = d.d_theta
    mean = dirs.mean(axis=0)
    c_d_sq = float(mean @ mean)
    sigma_sq = float(((dirs - mean) ** 2).sum(axis=1).mean())
    return c_d_sq, sigma_sq


def descent_check(problem: ProblemSpec, beta, theta, gamma, lam, c1, c2):
    """Verify <grad W, Gamma> <= -V at one point by exact enumeration.

    Returns (lhs, rhs, passed) with passed iff lhs <= rhs + 1e-9; all
    quantities here are closed-form on a finite support, so the tolerance is
    absolute.
    """
    _require_exact(problem)
    gw_beta, gw_theta = grad_W(problem, beta, theta, lam, mode="exact")
    gam = expected_direction_Gamma(problem, beta, theta, gamma, mode="exact")
    lhs = float(gw_beta @ gam.d_beta + gw_theta @ gam.d_theta)
    rhs = -nonoptimality_V(problem, beta, theta, c1, c2, mode="exact")
    return lhs, rhs, lhs <= rhs + 1e-9


def rate_fit(records):
    """Least-squares fit of log(mean V) against log N.

    ``records`` is a collection of (N, mean_V) pairs.  Nonpositive means are
    excluded with a warning.  Returns (slope, intercept, r_squared); a slope
    near -1/2 reproduces the theoretical rate.
    """
    records = list(records)
    kept = [(n, v) for n, v in records if v > 0]
    dropped = len(records) - len(kept)
    if dropped:
        warnings.warn(f"rate_fit excluded {dropped} nonpositive mean-V points")
    if len({n for n, _ in kept}) < 2:
        raise ConfigurationError("rate_fit needs at least two distinct N values")
    log_n = np.log([n for n, _ in kept])
    log_v = np.log([v for _, v in kept])
    slope, intercept = np.polyfit(log_n, log_v, 1)
    fitted = slope * log_n + intercept
    ss_res = float(((log_v - fitted) ** 2).sum())
    ss_tot = float(((log_v - log_v.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_squared


def make_report(problem: ProblemSpec, beta, theta, *, gamma, lam, c1, c2,
                mode="exact", n_samples=10000, rng=None) -> DiagnosticsReport:
    """Assemble a full DiagnosticsReport at one point."""
    q, q_se = tracking_error_Q(problem, beta, theta, mode, n_samples, rng)
    g, g_se = grad_G(problem, beta, mode, n_samples, rng)
    delta, w = bregman_delta_and_W(problem, beta, theta, lam, mode, n_samples, rng)
    gam = expected_direction_Gamma(problem, beta, theta, gamma, mode, n_samples, rng)
    v = c1 * q + c2 * float(np.dot(g, g))
    label = "exact" if mode == "exact" else f"monte_carlo(n={n_samples})"
    return DiagnosticsReport(q_value=q, q_stderr=q_se, grad_G=np.asarray(g),
                             grad_G_stderr=np.asarray(g_se), v_value=v,
                             delta_lambda=delta, w_value=w, gamma_dir=gam,
                             mode=label)


def minimize_scalar_G(problem: ProblemSpec, lo=0.0, hi=1.0, tol=1e-12):
    """Locate the minimizer of G for a scalar decision by bisecting grad G.

    Requires exact mode and a sign change of the scalar gradient on [lo, hi].
    Returns (beta_star, G(beta_star)).
    """
    from scipy.optimize import brentq

    if problem.dim_beta != 1:
        raise ConfigurationError("minimize_scalar_G handles scalar beta only")

    def dg(b):
        g, _ = grad_G(problem, np.array([b]), mode="exact")
        return float(g[0])

    root = brentq(dg, lo, hi, xtol=tol)
    g_val, _ = value_G(problem, np.array([root]), mode="exact")
    return float(root), g_val
