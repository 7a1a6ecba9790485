"""Task-selection: the simplex-constrained quadratic program and diagnostics.

The selection weights minimize || I - Sigma^{-1} sum_l pi_l Lam_l ||_F^2 over
the probability simplex.  Expanding gives the quadratic

    pi^T Q pi - 2 b^T pi + d,
    Q_lj = tr(Lam_l Sigma^{-2} Lam_j),   b_l = tr(Sigma^{-1} Lam_l),

i.e. Q is the Gram matrix of the matrices Sigma^{-1} Lam_l, hence PSD.  The
solver is projected gradient descent from the uniform point with the standard
1/(2 ||Q||) step and backtracking; projection onto the simplex is the exact
sort-based Euclidean projection.

Also here: the nonconvex chain-of-thought objective
tr((I - Gamma^{-1/2} Sigma Gamma^{-1/2})^{2k}) evaluated at a given pi, and
the hard-task mass sum_{l in D} pi_l over
D = { l : sigma_min(Lam_l) <= 4 (eps + sigma_min(Sigma)) }.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tasks import CovarianceSpec, DomainError, ZERO_EIG_RTOL, gamma_multi


@dataclass(frozen=True)
class SelectionProblem:
    """T candidate tasks (unit trace), a unit-trace target, and the CoT
    context (n, k) used when reporting the nonconvex objective."""

    tasks: tuple
    target: CovarianceSpec
    n: int = 100
    k: int = 4
    ridge: float = 1e-8

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if len(self.tasks) < 1:
            raise DomainError("need at least one task")
        for t in list(self.tasks) + [self.target]:
            if abs(t.trace - 1.0) > 1e-9:
                raise DomainError(f"covariance {t.label!r} must have unit trace, got {t.trace!r}")
            if t.dim != self.target.dim:
                raise DomainError("all covariances must share the target dimension")
        if self.ridge < 0:
            raise DomainError("ridge must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.tasks)

    @property
    def dim(self) -> int:
        return self.target.dim

    def to_json(self) -> str:
        return json.dumps(
            {
                "tasks": [json.loads(t.to_json()) for t in self.tasks],
                "target": json.loads(self.target.to_json()),
                "n": self.n,
                "k": self.k,
                "ridge": self.ridge,
            }
        )

    @staticmethod
    def from_json(text: str) -> "SelectionProblem":
        obj = json.loads(text)
        return SelectionProblem(
            tasks=tuple(CovarianceSpec.from_json(json.dumps(t)) for t in obj["tasks"]),
            target=CovarianceSpec.from_json(json.dumps(obj["target"])),
            n=int(obj["n"]),
            k=int(obj["k"]),
            ridge=float(obj["ridge"]),
        )


@dataclass(frozen=True)
class SelectionResult:
    pi: np.ndarray
    objective_quadratic: float
    objective_nonconvex: float
    iterations: int
    converged: bool

    def __post_init__(self) -> None:
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "pi", pi)
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-10:
            raise DomainError("solution left the simplex")

    def to_json(self) -> str:
        return json.dumps(
            {
                "pi": self.pi.tolist(),
                "objective_quadratic": self.objective_quadratic,
                "objective_nonconvex": self.objective_nonconvex,
                "iterations": self.iterations,
                "converged": self.converged,
            }
        )

    @staticmethod
    def from_json(text: str) -> "SelectionResult":
        obj = json.loads(text)
        return SelectionResult(
            pi=np.asarray(obj["pi"], dtype=float),
            objective_quadratic=float(obj["objective_quadratic"]),
            objective_nonconvex=float(obj["objective_nonconvex"]),
            iterations=int(obj["iterations"]),
            converged=bool(obj["converged"]),
        )


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {pi >= 0, sum pi = 1} (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or not np.all(np.isfinite(v)):
        raise DomainError("can only project a finite vector")
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    rho = np.nonzero(u - (cumsum - 1.0) / j > 0)[0][-1]
    theta = (cumsum[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _inverse_target(problem: SelectionProblem) -> np.ndarray:
    """Sigma^{-1} with the rank-deficiency ridge Sigma + delta (tr/d) I."""
    s = problem.target.eigenvalues
    rank_deficient = s[-1] <= ZERO_EIG_RTOL * s[0]
    if rank_deficient and problem.ridge == 0.0:
        raise DomainError(
            "target covariance is singular; set ridge > 0 to regularize Sigma"
        )
    shift = problem.ridge * problem.target.trace / problem.dim if rank_deficient else 0.0
    inv_eigs = 1.0 / (s + shift)
    u = problem.target.basis
    return (u * inv_eigs) @ u.T


def build_quadratic(
    problem: SelectionProblem, method: str = "auto"
) -> tuple[np.ndarray, np.ndarray, float]:
    """(Q, b, const) of the expanded objective pi^T Q pi - 2 b^T pi + const.

    method "dense" materializes W_l = Sigma^{-1} Lam_l (via the tasks'
    low-rank factors) and takes Frobenius inner products; "lowrank" never
    forms a d x d product per pair, computing
    Q_lj = sum( (P_l^T P_j) * (R_l^T R_j) ) with R = Sigma^{-1} P, so the
    d = 1000 experiment stays in O(T^2 B^2 d) inner products.  Both paths
    agree to rounding.
    """
    sigma_inv = _inverse_target(problem)
    t_count = problem.size
    d = problem.dim
    factors = [t.low_rank_factor() for t in problem.tasks]
    solved = [sigma_inv @ p for p in factors]
    b = np.array([float(np.sum(p * r)) for p, r in zip(factors, solved)])

    if method == "auto":
        method = "dense" if d <= 400 else "lowrank"
    if method == "dense":
        w_stack = np.stack([(r @ p.T).ravel() for p, r in zip(factors, solved)])
        q = w_stack @ w_stack.T
    elif method == "lowrank":
        q = np.empty((t_count, t_count))
        for ell in range(t_count):
            p_l, r_l = factors[ell], solved[ell]
            for j in range(ell, t_count):
                val = float(np.sum((p_l.T @ factors[j]) * (r_l.T @ solved[j])))
                q[ell, j] = val
                q[j, ell] = val
    else:
        raise DomainError(f"unknown method {method!r}")
    return 0.5 * (q + q.T), b, float(d)


def quadratic_objective(q: np.ndarray, b: np.ndarray, const: float, pi: np.ndarray) -> float:
    return float(pi @ q @ pi - 2.0 * b @ pi + const)


def eval_nonconvex_objective(
    tasks: Sequence[CovarianceSpec], pi: Sequence[float], target: CovarianceSpec, n: int, k: int
) -> float:
    """tr((I - Gamma^{-1/2} Sigma Gamma^{-1/2})^{2k}) at the mixture's Gamma
    (symmetrized before the square root)."""
    gamma = gamma_multi(tasks, pi, n)
    g = gamma.sym()
    evals, evecs = np.linalg.eigh(g)
    if evals[0] <= 0.0:
        raise DomainError(f"Gamma(pi) is not positive definite (min eig {evals[0]:.3e})")
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    a = inv_sqrt @ target.matrix @ inv_sqrt
    mu = np.linalg.eigvalsh(0.5 * (a + a.T))
    return float(np.sum((1.0 - mu) ** (2 * k)))


def solve_selection(
    problem: SelectionProblem,
    max_iters: int = 200_000,
    rel_tol: float = 1e-12,
    grad_map_tol: float = 1e-9,
    method: str = "auto",
) -> SelectionResult:
    """Projected gradient descent on the quadratic from the uniform point."""
    q, b, const = build_quadratic(problem, method=method)
    t_count = problem.size
    pi = np.full(t_count, 1.0 / t_count)
    step = 1.0 / (2.0 * max(float(np.linalg.eigvalsh(q)[-1]), 1e-300))
    obj = quadratic_objective(q, b, const, pi)

    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        grad = 2.0 * (q @ pi - b)
        trial_step = step
        while True:
            candidate = simplex_project(pi - trial_step * grad)
            new_obj = quadratic_objective(q, b, const, candidate)
            if new_obj <= obj + 1e-15 * (1.0 + abs(obj)) or trial_step < 1e-18:
                break
            trial_step *= 0.5
        gap = float(np.linalg.norm(candidate - pi)) / trial_step
        improved = obj - new_obj
        pi, obj = candidate, new_obj
        if gap <= grad_map_tol or improved <= rel_tol * (1.0 + abs(obj)):
            converged = True
            break

    try:
        nonconvex = eval_nonconvex_objective(problem.tasks, pi, problem.target, problem.n, problem.k)
    except DomainError:
        nonconvex = float("inf")  # pi leaves some direction uncovered
    return SelectionResult(
        pi=pi,
        objective_quadratic=obj,
        objective_nonconvex=nonconvex,
        iterations=iterations,
        converged=converged,
    )


def _sigma_min(cov: CovarianceSpec, literal: bool) -> float:
    if literal:
        return float(cov.eigenvalues[-1])
    return cov.min_nonzero_eig()


def hard_task_mass(
    tasks: Sequence[CovarianceSpec],
    pi: Sequence[float],
    target: CovarianceSpec,
    epsilon: float,
    literal_sigma_min: bool = False,
) -> tuple[float, list[int]]:
    """Mass of pi on the hard set D = {l : sigma_min(Lam_l) <= 4 (eps + sigma_min(Sigma))}.

    By default sigma_min means the smallest *nonzero* eigenvalue (the
    rank-deficient convention); literal_sigma_min=True uses the raw smallest
    eigenvalue, which puts every rank-deficient task in D.
    """
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    pi = np.asarray(pi, dtype=float)
    threshold = 4.0 * (epsilon + _sigma_min(target, literal_sigma_min))
    hard_set = [ell for ell, t in enumerate(tasks) if _sigma_min(t, literal_sigma_min) <= threshold]
    return float(pi[hard_set].sum()), hard_set


def estimate_epsilon(
    tasks: Sequence[CovarianceSpec],
    pi: Sequence[float],
    target: CovarianceSpec,
    n: int,
    use_full_gamma: bool = True,
) -> float:
    """Post-hoc eps = |sigma_min(Gamma(pi)) - sigma_min(Sigma)|.

    use_full_gamma evaluates the trained preconditioner (the proposition's
    Gamma); otherwise the plain mixture sum_l pi_l Lam_l is used.
    """
    pi = np.asarray(pi, dtype=float)
    if use_full_gamma:
        g = gamma_multi(tasks, pi, n).sym()
    else:
        g = np.zeros((target.dim, target.dim))
        for w, t in zip(pi, tasks):
            if w != 0.0:
                g += w * t.matrix
    sig_min_gamma = float(np.linalg.eigvalsh(g)[0])
    return abs(sig_min_gamma - _sigma_min(target, literal=False))
