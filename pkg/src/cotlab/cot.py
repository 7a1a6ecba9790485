"""Test-time chain-of-thought: recursion, closed form, Monte Carlo error.

With the trained layer, appending thought columns to a test prompt of length
m realizes the preconditioned update

    w_{i+1} = w_i - (1/m) Gamma^{-1} X (X^T w_i - y),

a (pseudo-)Newton step on the prompt's least-squares loss.  Starting from
w_0 = 0 and writing Sig_hat = X X^T / m, k applications give

    w_k = (I - (I - Gamma^{-1} Sig_hat)^k) w_test.

Convention used throughout this package (and the experiment CSVs): ``k``
counts contraction applications, i.e. cot_rollout(prompt, gamma, k) performs
exactly k cot_step calls after the w_0 = 0 initialization and its final
estimate matches closed_form_k_step(..., k, ...).  k = 0 returns w_0.

The expected squared estimation error over w_test ~ N(0, I) is the trace

    tr((I - Sig_hat Gamma^{-1})^k (I - Gamma^{-1} Sig_hat)^k),

which mc_test_error averages over sampled test prompts.  Whether it shrinks
or grows with k depends on the spectrum of Gamma^{-1} Sigma: eigenvalues
outside (0, 2) make extra thinking hurt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prompts import PromptBatch
from .rng import stream
from .tasks import CovarianceSpec, DomainError, GammaMatrix


@dataclass(frozen=True)
class CotResult:
    """Rollout record: trajectory w_0..w_k, per-step squared errors, final."""

    trajectory: np.ndarray  # (k+1, d)
    errors: np.ndarray      # (k+1,), ||w_i - w_test||^2
    k: int
    m: int
    sigma_hat: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.trajectory[-1]


def _solve_gamma(gamma: GammaMatrix, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(gamma.matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"Gamma is singular: {exc}") from exc


def cot_step(w_i: np.ndarray, prompt: PromptBatch, gamma: GammaMatrix) -> np.ndarray:
    """One thought: w_i - (1/m) Gamma^{-1} X (X^T w_i - y).

    Uses the labels y directly, so it is well defined when the prompt's true
    weight is unknown; for exact labels it equals
    w_i - (1/m) Gamma^{-1} X X^T (w_i - w_test).
    """
    w_i = np.asarray(w_i, dtype=float)
    if w_i.shape != (prompt.dim,):
        raise DomainError(f"w has shape {w_i.shape}, expected ({prompt.dim},)")
    residual = prompt.x.T @ w_i - prompt.y
    return w_i - _solve_gamma(gamma, prompt.x @ residual) / prompt.length


def cot_rollout(prompt: PromptBatch, gamma: GammaMatrix, k: int) -> CotResult:
    """Apply cot_step k times from w_0 = 0, recording the trajectory."""
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    d = prompt.dim
    traj = np.zeros((k + 1, d))
    w = np.zeros(d)
    for i in range(1, k + 1):
        w = cot_step(w, prompt, gamma)
        traj[i] = w
    errors = ((traj - prompt.w) ** 2).sum(axis=1)
    return CotResult(trajectory=traj, errors=errors, k=k, m=prompt.length,
                     sigma_hat=prompt.empirical_covariance())


def closed_form_k_step(gamma: GammaMatrix, sigma_hat: np.ndarray, k: int,
                       w_test: np.ndarray) -> np.ndarray:
    """(I - (I - Gamma^{-1} Sig_hat)^k) w_test, by repeated squaring.

    k = 0 gives the zero vector (empty product is the identity).  No
    eigendecomposition: I - Gamma^{-1} Sig_hat is not symmetric in general.
    """
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    d = gamma.dim
    m = np.eye(d) - _solve_gamma(gamma, sigma_hat)
    power = np.linalg.matrix_power(m, k)
    return (np.eye(d) - power) @ np.asarray(w_test, dtype=float)


def error_operator_traces(gamma: GammaMatrix, sigma_hat: np.ndarray, ks: np.ndarray) -> np.ndarray:
    """tr((I - Sig_hat G^{-1})^k (I - G^{-1} Sig_hat)^k) = ||M^k||_F^2 for each k."""
    ks = np.asarray(ks, dtype=int)
    if np.any(ks < 0):
        raise DomainError("k values must be >= 0")
    d = gamma.dim
    m = np.eye(d) - _solve_gamma(gamma, np.asarray(sigma_hat, dtype=float))
    out = np.empty(ks.size)
    k_max = int(ks.max()) if ks.size else 0
    power = np.eye(d)
    by_k = {0: d * 1.0}
    for k in range(1, k_max + 1):
        power = power @ m
        by_k[k] = float((power**2).sum())
    for i, k in enumerate(ks):
        out[i] = by_k[int(k)]
    return out


@dataclass(frozen=True)
class McErrorCurve:
    """Mean and standard error of the test-error trace per CoT depth."""

    ks: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    trials: int


def mc_test_error_curve(
    train_gamma: GammaMatrix,
    test_cov: CovarianceSpec,
    m: int,
    ks: np.ndarray,
    trials: int,
    seed: int,
) -> McErrorCurve:
    """Average the error trace over sampled test prompts, for every k at once.

    w_test is integrated analytically (the trace identity above), so only the
    prompt features are sampled.  Trial t uses the generator sub-stream
    (seed, t); trials are independent and could be computed in parallel.
    """
    if trials < 10:
        raise DomainError(f"need at least 10 trials, got {trials}")
    ks = np.asarray(ks, dtype=int)
    factor = test_cov.sqrt_factor()
    vals = np.empty((trials, ks.size))
    for t in range(trials):
        x = factor @ stream(seed, t).standard_normal((test_cov.dim, m))
        sigma_hat = (x @ x.T) / m
        vals[t] = error_operator_traces(train_gamma, sigma_hat, ks)
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(trials)
    return McErrorCurve(ks=ks, mean=mean, se=se, trials=trials)


def mc_test_error(
    train_gamma: GammaMatrix,
    test_cov: CovarianceSpec,
    m: int,
    k: int,
    trials: int,
    seed: int,
) -> tuple[float, float]:
    """(mean, standard error) of the error trace at a single CoT depth."""
    curve = mc_test_error_curve(train_gamma, test_cov, m, np.array([k]), trials, seed)
    return float(curve.mean[0]), float(curve.se[0])


def rollout_errors_csv(results: list[CotResult], fh) -> None:
    """Export per-step squared errors: one row per (trial, k_step)."""
    fh.write("trial,k_step,sq_error\n")
    for trial, res in enumerate(results):
        for step, err in enumerate(res.errors):
            fh.write(f"{trial},{step},{float(err)!r}\n")
