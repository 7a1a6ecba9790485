"""Closed-form error bounds for comparison against Monte Carlo truth.

All four evaluators return a BoundReport echoing their inputs:

  direct       (d/n^2) (1 + Hard)^2 + (d/m) (1 + Hard)      one-shot estimate
  cot_leading  tr((I - Gamma^{-1} Lam)^{2k})                matched-task CoT
  corollary    d (1 + n / (1 + Hard))^{-2k}                 hardness relaxation
  multitask    tr(Gamma) tr(Gamma^{-1})
               * tr((I - Gamma^{-1/2} Sigma Gamma^{-1/2})^{2k})

cot_leading is the leading term only; the asymptotic (1 + O(k sqrt(d/m)))
factor has an unspecified constant, so consumers must enforce m >> k^2 d
instead of relying on it.  The multitask evaluator symmetrizes Gamma before
taking the square root (the mixture Gamma is not exactly symmetric for
non-commuting tasks).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tasks import CovarianceSpec, DomainError, GammaMatrix, gamma_eigenvalues, hardness


@dataclass(frozen=True)
class BoundReport:
    bound_name: str
    value: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.value < 0:
            raise DomainError(f"bound {self.bound_name} evaluated negative: {self.value}")


def _require_full_rank(cov: CovarianceSpec) -> None:
    if cov.eigenvalues[-1] <= 0.0:
        raise DomainError("bound requires lambda_min(Lam) > 0")


def bound_direct(cov: CovarianceSpec, n: int, m: int) -> BoundReport:
    """One-shot in-context estimate: (d/n^2)(1+Hard)^2 + (d/m)(1+Hard)."""
    _require_full_rank(cov)
    d = cov.dim
    h = hardness(cov)
    value = (d / n**2) * (1.0 + h) ** 2 + (d / m) * (1.0 + h)
    return BoundReport("direct", float(value), {"d": d, "n": n, "m": m, "hardness": h})


def contraction_eigenvalues(cov: CovarianceSpec, n: int) -> np.ndarray:
    """Eigenvalues of I - Gamma^{-1} Lam in the shared eigenbasis."""
    return 1.0 - cov.eigenvalues / gamma_eigenvalues(cov, n)


def bound_cot_leading(cov: CovarianceSpec, n: int, k: int) -> BoundReport:
    """tr((I - Gamma^{-1} Lam)^{2k}), exact via the shared eigenbasis."""
    _require_full_rank(cov)
    sig = contraction_eigenvalues(cov, n)
    value = float(np.sum(sig ** (2 * k)))
    return BoundReport(
        "cot_leading", value, {"d": cov.dim, "n": n, "k": k, "hardness": hardness(cov)}
    )


def bound_corollary(cov: CovarianceSpec, n: int, k: int) -> BoundReport:
    """d (1 + n/(1 + Hard))^{-2k}; dominates cot_leading."""
    _require_full_rank(cov)
    h = hardness(cov)
    value = cov.dim * (1.0 + n / (1.0 + h)) ** (-2 * k)
    return BoundReport("corollary", float(value), {"d": cov.dim, "n": n, "k": k, "hardness": h})


def one_shot_mc_error(
    cov: CovarianceSpec,
    n: int,
    m: int,
    trials: int,
    seed: int,
    variant: str = "m",
) -> tuple[float, float]:
    """Monte Carlo of the one-shot estimate's error, for dominance checks.

    variant "m" uses w_hat = (1/m) Gamma^{-1} X X^T w (the recursion's first
    step); variant "n" keeps a 1/n normalization on the length-m test prompt,
    i.e. w_hat = (1/n) Gamma^{-1} X X^T w.  Expectation over w_test is taken
    analytically; returns (mean, standard error) over sampled test prompts.
    """
    from .cot import error_operator_traces
    from .rng import stream
    from .tasks import gamma_single

    if variant not in ("m", "n"):
        raise DomainError(f"variant must be 'm' or 'n', got {variant!r}")
    scale = 1.0 if variant == "m" else m / n
    gamma = gamma_single(cov, n)
    factor = cov.sqrt_factor()
    vals = np.empty(trials)
    for t in range(trials):
        x = factor @ stream(seed, t).standard_normal((cov.dim, m))
        vals[t] = error_operator_traces(gamma, scale * (x @ x.T) / m, np.array([1]))[0]
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trials))


def bound_multitask(gamma: GammaMatrix, target: CovarianceSpec, k: int) -> BoundReport:
    """tr(G) tr(G^{-1}) tr((I - G^{-1/2} Sigma G^{-1/2})^{2k}) on the
    symmetrized Gamma."""
    g = gamma.sym()
    evals, evecs = np.linalg.eigh(g)
    if evals[0] <= 0.0:
        raise DomainError(f"Gamma must be positive definite, min eigenvalue {evals[0]:.3e}")
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    a = inv_sqrt @ target.matrix @ inv_sqrt
    mu = np.linalg.eigvalsh(0.5 * (a + a.T))
    trace_term = float(np.sum((1.0 - mu) ** (2 * k)))
    value = float(evals.sum() * (1.0 / evals).sum() * trace_term)
    return BoundReport(
        "multitask",
        value,
        {"d": gamma.dim, "n": gamma.n, "k": k, "trace_term": trace_term},
    )
