"""Problem abstraction: user-supplied evaluators, joint sampler, oracles.

A problem bundles analytic evaluators for the inner function f(x, y, beta),
the outer function g(u), and the parametric model psi(x, theta), together
with a sampler for the joint law of (X, Y).  Problems over a finite sample
space may additionally carry an explicit support enumeration, which powers
exact (enumeration-based) diagnostics; a conditional oracle for
F(x, beta) = E[f(x, Y, beta) | X = x] powers Monte Carlo diagnostics.

Gradient matrices follow the transpose-of-Jacobian convention throughout:
an evaluator differentiated with respect to a parameter vector of length p
returns a p x n_f matrix, so update directions are plain matrix-vector
products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapabilityError, ConfigurationError, EvaluationError

Array = np.ndarray


@dataclass
class ProblemSpec:
    """Evaluator bundle defining one conditional stochastic program.

    Attributes:
        dim_x, dim_y, dim_beta, dim_theta, dim_f: problem dimensions.
        inner: (x, y, beta) -> (f, grad_f_beta) with shapes (dim_f,) and
            (dim_beta, dim_f).
        outer: (u,) -> (g, grad_g, hess_g) with g scalar, grad (dim_f,),
            hess (dim_f, dim_f) symmetric.
        model: (x, theta) -> (psi, grad_psi_theta) with shapes (dim_f,) and
            (dim_theta, dim_f).
        sampler: (rng,) -> (x, y) i.i.d. draw from the joint distribution.
        conditional_oracle: optional (x, beta) -> (F, grad_F_beta).
        support: optional finite enumeration of (x, y, probability) triples.
    """

    dim_x: int
    dim_y: int
    dim_beta: int
    dim_theta: int
    dim_f: int
    inner: Callable[[Array, Array, Array], tuple]
    outer: Callable[[Array], tuple]
    model: Callable[[Array, Array], tuple]
    sampler: Callable[[np.random.Generator], tuple]
    conditional_oracle: Optional[Callable[[Array, Array], tuple]] = None
    support: Optional[Sequence[tuple]] = None

    def __post_init__(self):
        for name in ("dim_x", "dim_y", "dim_beta", "dim_theta", "dim_f"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.support is not None:
            total = sum(p for _, _, p in self.support)
            if any(p < 0 for _, _, p in self.support):
                raise ConfigurationError("support probabilities must be nonnegative")
            if abs(total - 1.0) > 1e-12:
                raise ConfigurationError(
                    f"support probabilities sum to {total!r}, expected 1"
                )

    @property
    def has_support(self) -> bool:
        return self.support is not None

    @property
    def has_oracle(self) -> bool:
        return self.conditional_oracle is not None


@dataclass
class IterateState:
    """Current point z^k = (beta^k, theta^k) with its iteration counter."""

    beta: Array
    theta: Array
    k: int = 0


def _check_finite(name: str, value: Array, inputs) -> None:
    if not np.all(np.isfinite(value)):
        raise EvaluationError(
            f"{name} produced a non-finite output {value!r} at input {inputs!r}",
            offending_input=inputs,
        )


def _check_shape(name: str, value: Array, shape: tuple) -> None:
    if np.shape(value) != shape:
        raise ConfigurationError(
            f"{name} has shape {np.shape(value)}, expected {shape}"
        )


def evaluate_inner(problem: ProblemSpec, x: Array, y: Array, beta: Array):
    """Evaluate f(x, y, beta) and its beta-gradient (dim_beta x dim_f)."""
    if len(x) != problem.dim_x or len(y) != problem.dim_y or len(beta) != problem.dim_beta:
        raise ConfigurationError("evaluate_inner: input dimensions do not match problem")
    f_value, f_grad = problem.inner(x, y, beta)
    f_value = np.asarray(f_value, dtype=float)
    f_grad = np.asarray(f_grad, dtype=float)
    _check_shape("f_value", f_value, (problem.dim_f,))
    _check_shape("f_grad_beta", f_grad, (problem.dim_beta, problem.dim_f))
    _check_finite("inner", f_value, (x, y, beta))
    _check_finite("inner gradient", f_grad, (x, y, beta))
    return f_value, f_grad


def evaluate_outer(problem: ProblemSpec, u: Array):
    """Evaluate g(u), its gradient, and its Hessian."""
    if len(u) != problem.dim_f:
        raise ConfigurationError("evaluate_outer: len(u) != dim_f")
    g_value, g_grad, g_hess = problem.outer(u)
    g_value = float(g_value)
    g_grad = np.asarray(g_grad, dtype=float)
    g_hess = np.asarray(g_hess, dtype=float)
    _check_shape("g_grad", g_grad, (problem.dim_f,))
    _check_shape("g_hess", g_hess, (problem.dim_f, problem.dim_f))
    if not np.isfinite(g_value):
        raise EvaluationError(f"outer value non-finite at u={u!r}", offending_input=u)
    _check_finite("outer gradient", g_grad, u)
    _check_finite("outer hessian", g_hess, u)
    return g_value, g_grad, g_hess


def evaluate_model(problem: ProblemSpec, x: Array, theta: Array):
    """Evaluate psi(x, theta) and its theta-gradient (dim_theta x dim_f)."""
    if len(x) != problem.dim_x or len(theta) != problem.dim_theta:
        raise ConfigurationError("evaluate_model: input dimensions do not match problem")
    psi_value, psi_grad = problem.model(x, theta)
    psi_value = np.asarray(psi_value, dtype=float)
    psi_grad = np.asarray(psi_grad, dtype=float)
    _check_shape("psi_value", psi_value, (problem.dim_f,))
    _check_shape("psi_grad_theta", psi_grad, (problem.dim_theta, problem.dim_f))
    _check_finite("model", psi_value, (x, theta))
    _check_finite("model gradient", psi_grad, (x, theta))
    return psi_value, psi_grad


def sample_joint(problem: ProblemSpec, rng: np.random.Generator):
    """Draw one (x, y) pair from the joint distribution."""
    x, y = problem.sampler(rng)
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def conditional_oracle(problem: ProblemSpec, x: Array, beta: Array):
    """Evaluate F(x, beta) = E[f(x, Y, beta) | X=x] and its beta-gradient."""
    if problem.conditional_oracle is None:
        raise CapabilityError("problem has no conditional oracle")
    F_value, F_grad = problem.conditional_oracle(x, beta)
    F_value = np.asarray(F_value, dtype=float)
    F_grad = np.asarray(F_grad, dtype=float)
    _check_shape("F_value", F_value, (problem.dim_f,))
    _check_shape("F_grad_beta", F_grad, (problem.dim_beta, problem.dim_f))
    _check_finite("conditional oracle", F_value, (x, beta))
    _check_finite("conditional oracle gradient", F_grad, (x, beta))
    return F_value, F_grad


def support_groups(problem: ProblemSpec):
    """Group the support enumeration by context value.

    Returns a list of (x, p_x, [(y, p_y_given_x), ...]) with p_x the marginal
    probability of x and the inner list the conditional law of Y given X=x.
    """
    if problem.support is None:
        raise CapabilityError("problem has no support enumeration")
    groups: dict = {}
    for x, y, p in problem.support:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        if key not in groups:
            groups[key] = [x, 0.0, []]
        groups[key][1] += p
        groups[key][2].append((np.asarray(y, dtype=float), p))
    out = []
    for x, p_x, pairs in groups.values():
        if p_x <= 0:
            continue
        out.append((x, p_x, [(y, p / p_x) for y, p in pairs]))
    return out


def finite_difference_check(problem: ProblemSpec, n_probes: int,
                            rng: np.random.Generator, h: float = 1e-5,
                            box=(-1.0, 2.0)) -> dict:
    """Compare supplied gradients against central finite differences.

    Probes f in beta, psi in theta, and g in u at random points; returns the
    worst relative error per evaluator, normalized by max(1, ||analytic||).
    """
    worst = {"inner": 0.0, "model": 0.0, "outer": 0.0}
    lo, hi = box
    for _ in range(n_probes):
        x, y = sample_joint(problem, rng)
        beta = rng.uniform(lo, hi, problem.dim_beta)
        theta = rng.uniform(lo, hi, problem.dim_theta)
        u = rng.uniform(lo, hi, problem.dim_f)

        _, f_grad = evaluate_inner(problem, x, y, beta)
        fd = np.empty_like(f_grad)
        for i in range(problem.dim_beta):
            e = np.zeros(problem.dim_beta)
            e[i] = h
            fp, _ = evaluate_inner(problem, x, y, beta + e)
            fm, _ = evaluate_inner(problem, x, y, beta - e)
            fd[i] = (fp - fm) / (2 * h)
        worst["inner"] = max(worst["inner"],
                             np.linalg.norm(fd - f_grad) / max(1.0, np.linalg.norm(f_grad)))

        _, psi_grad = evaluate_model(problem, x, theta)
        fd = np.empty_like(psi_grad)
        for i in range(problem.dim_theta):
            e = np.zeros(problem.dim_theta)
            e[i] = h
            pp, _ = evaluate_model(problem, x, theta + e)
            pm, _ = evaluate_model(problem, x, theta - e)
            fd[i] = (pp - pm) / (2 * h)
        worst["model"] = max(worst["model"],
                             np.linalg.norm(fd - psi_grad) / max(1.0, np.linalg.norm(psi_grad)))

        _, g_grad, _ = evaluate_outer(problem, u)
        fd = np.empty_like(g_grad)
        for i in range(problem.dim_f):
            e = np.zeros(problem.dim_f)
            e[i] = h
            gp, _, _ = evaluate_outer(problem, u + e)
            gm, _, _ = evaluate_outer(problem, u - e)
            fd[i] = (gp - gm) / (2 * h)
        worst["outer"] = max(worst["outer"],
                             np.linalg.norm(fd - g_grad) / max(1.0, np.linalg.norm(g_grad)))
    return worst


def oracle_consistency_check(problem: ProblemSpec, betas) -> float:
    """Worst gap between the conditional oracle and support enumeration."""
    if problem.conditional_oracle is None or problem.support is None:
        raise CapabilityError("needs both a conditional oracle and a support")
    worst = 0.0
    for x, _, cond in support_groups(problem):
        for beta in betas:
            F_o, G_o = conditional_oracle(problem, x, beta)
            F_e, G_e = enumerate_conditional(problem, x, beta, cond)
            worst = max(worst, float(np.max(np.abs(F_o - F_e))),
                        float(np.max(np.abs(G_o - G_e))))
    return worst


def enumerate_conditional(problem: ProblemSpec, x: Array, beta: Array,
                          conditional: Sequence[tuple]):
    """F(x, beta) and its gradient by enumerating a conditional law of Y."""
    F = np.zeros(problem.dim_f)
    F_grad = np.zeros((problem.dim_beta, problem.dim_f))
    for y, p in conditional:
        f_value, f_grad = evaluate_inner(problem, x, y, beta)
        F += p * f_value
        F_grad += p * f_grad
    return F, F_grad
