"""Task covariances, hardness, the Gamma preconditioner, and moment oracles.

A task is identified with the covariance of its features.  We keep
covariances in eigendecomposed form ``basis @ diag(eigenvalues) @ basis.T``
(eigenvalues sorted descending) so that rank-deficient spectra, hardness and
the single-task preconditioner

    Gamma = (1 + 1/n) * Lam + (tr(Lam)/n) * I

are all cheap and exact.  The multi-task preconditioner for a mixture with
weights pi is

    Gamma = ((n-1)/n) * G + (1/n) * (2*sum_l pi_l Lam_l^2
            + sum_l pi_l tr(Lam_l) Lam_l) @ G^{-1},      G = sum_l pi_l Lam_l

which reduces exactly to the single-task form at T=1.  Note the multi-task
matrix is not symmetric unless the mixture components commute; consumers that
need a symmetric square root should use ``GammaMatrix.sym()``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .rng import stream

# Relative cutoff for classifying an eigenvalue as zero in rank-deficient
# spectra (hardness, hard-task classification).
ZERO_EIG_RTOL = 1e-12

# Trials per generator sub-stream in Monte Carlo loops.  Part of the sampling
# algorithm: changing it changes the draws for a given seed.
_MC_CHUNK = 512


class DomainError(ValueError):
    """Inputs outside an operation's domain (negative spectra, singular mixtures, ...)."""


def haar_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of an iid Gaussian with the
    R-diagonal sign fixed (Mezzadri's recipe)."""
    z = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * np.where(d < 0, -1.0, 1.0)


@dataclass(frozen=True)
class CovarianceSpec:
    """A feature covariance in eigendecomposed form.

    eigenvalues are nonnegative and sorted descending; basis columns are the
    matching orthonormal eigenvectors.
    """

    dim: int
    eigenvalues: np.ndarray
    basis: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        eig = np.asarray(self.eigenvalues, dtype=float)
        basis = np.asarray(self.basis, dtype=float)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "basis", basis)
        if eig.shape != (self.dim,) or basis.shape != (self.dim, self.dim):
            raise DomainError(
                f"shape mismatch: dim={self.dim}, eigenvalues {eig.shape}, basis {basis.shape}"
            )
        if np.any(eig < 0):
            raise DomainError(f"negative eigenvalue in spectrum: min={eig.min()}")
        if np.any(np.diff(eig) > 0):
            raise DomainError("eigenvalues must be sorted descending")
        ortho_err = np.abs(basis.T @ basis - np.eye(self.dim)).max()
        if ortho_err > 1e-10:
            raise DomainError(f"basis not orthonormal: max deviation {ortho_err:.3e}")

    @property
    def matrix(self) -> np.ndarray:
        """Materialized covariance (symmetrized to kill rounding skew)."""
        m = (self.basis * self.eigenvalues) @ self.basis.T
        return 0.5 * (m + m.T)

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > self._zero_cut()))

    def _zero_cut(self) -> float:
        top = float(self.eigenvalues[0]) if self.dim else 0.0
        return ZERO_EIG_RTOL * top

    def min_nonzero_eig(self) -> float:
        """Smallest eigenvalue above the relative zero cutoff."""
        nz = self.eigenvalues[self.eigenvalues > self._zero_cut()]
        if nz.size == 0:
            raise DomainError("all-zero spectrum has no nonzero eigenvalue")
        return float(nz[-1])

    def sqrt_factor(self) -> np.ndarray:
        """L with L @ L.T = covariance; used to sample N(0, Lam) as L @ z."""
        return self.basis * np.sqrt(self.eigenvalues)

    def low_rank_factor(self) -> np.ndarray:
        """d x r factor P (r = rank) with P @ P.T = covariance."""
        keep = self.eigenvalues > self._zero_cut()
        return self.basis[:, keep] * np.sqrt(self.eigenvalues[keep])

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "eigenvalues": self.eigenvalues.tolist(),
                "basis": self.basis.tolist(),
                "label": self.label,
            }
        )

    @staticmethod
    def from_json(text: str) -> "CovarianceSpec":
        """Accepts either an explicit row-major ``basis`` or a ``basis_seed``
        (constructor semantics: the covariance is rebuilt via make_covariance)."""
        obj = json.loads(text)
        if "basis" in obj:
            return CovarianceSpec(
                dim=int(obj["dim"]),
                eigenvalues=np.asarray(obj["eigenvalues"], dtype=float),
                basis=np.asarray(obj["basis"], dtype=float),
                label=obj.get("label", ""),
            )
        return make_covariance(
            np.asarray(obj["eigenvalues"], dtype=float),
            basis_seed=int(obj["basis_seed"]),
            label=obj.get("label", ""),
        )


@dataclass(frozen=True)
class TaskFamilySpec:
    """Power-law family: eigenvalues ~ i^(-alpha) on B of d coordinates."""

    alpha: float
    support: int
    dim: int
    count: int
    seed: int

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha}")
        if not (1 <= self.support <= self.dim):
            raise DomainError(f"support must satisfy 1 <= B <= d, got B={self.support}, d={self.dim}")
        if self.count < 1:
            raise DomainError("count must be positive")


@dataclass(frozen=True)
class TaskMixture:
    """A finite task mixture: tasks with simplex weights pi."""

    tasks: tuple
    pi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "pi", pi)
        if len(self.tasks) == 0 or pi.shape != (len(self.tasks),):
            raise DomainError("mixture needs one weight per task")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise DomainError(f"pi must lie on the simplex (sum={pi.sum()!r})")
        dims = {t.dim for t in self.tasks}
        if len(dims) != 1:
            raise DomainError(f"mixture tasks disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.tasks[0].dim

    def mean_covariance(self) -> np.ndarray:
        """G = sum_l pi_l Lam_l."""
        g = np.zeros((self.dim, self.dim))
        for w, t in zip(self.pi, self.tasks):
            if w != 0.0:
                g += w * t.matrix
        return 0.5 * (g + g.T)


TaskLike = Union[CovarianceSpec, TaskMixture]


@dataclass(frozen=True)
class GammaMatrix:
    """The preconditioner the trained attention layer inverts."""

    dim: int
    matrix: np.ndarray
    kind: str  # "single-task" | "multi-task"
    n: int
    pi: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.shape != (self.dim, self.dim) or not np.all(np.isfinite(m)):
            raise DomainError("Gamma must be a finite square matrix")
        if self.kind == "single-task" and np.abs(m - m.T).max() > 1e-12:
            raise DomainError("single-task Gamma must be symmetric to 1e-12")

    def sym(self) -> np.ndarray:
        """Symmetric part; equals matrix exactly in the single-task case."""
        return 0.5 * (self.matrix + self.matrix.T)

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.matrix, rhs)


def make_covariance(
    eigenvalues: Sequence[float],
    basis: np.ndarray | None = None,
    basis_seed: int | None = None,
    label: str = "",
) -> CovarianceSpec:
    """Build a CovarianceSpec from a spectrum and a basis (explicit or seeded Haar).

    Eigenvalues are sorted descending; the basis columns are permuted along
    with them, so the materialized matrix is independent of the input order.
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if eig.ndim != 1 or eig.size == 0:
        raise DomainError("eigenvalues must be a nonempty vector")
    if np.any(eig < 0):
        raise DomainError(f"negative eigenvalue: min={eig.min()}")
    d = eig.size
    if basis is None:
        if basis_seed is None:
            raise DomainError("need either an explicit basis or a basis_seed")
        basis = haar_orthogonal(d, stream(basis_seed))
    basis = np.asarray(basis, dtype=float)
    order = np.argsort(-eig, kind="stable")
    return CovarianceSpec(dim=d, eigenvalues=eig[order], basis=basis[:, order], label=label)


def power_law_spectrum(family: TaskFamilySpec) -> list[CovarianceSpec]:
    """Unit-trace tasks with eigenvalues ~ i^(-alpha), i = 1..B, on a random
    support of the coordinates of a per-task Haar basis.

    Task t is a pure function of (family.seed, t): the support shuffle and the
    basis draw use a sub-stream keyed by the task index.
    """
    raw = np.arange(1, family.support + 1, dtype=float) ** (-family.alpha)
    raw /= raw.sum()
    out = []
    for t in range(family.count):
        rng = stream(family.seed, t)
        basis = haar_orthogonal(family.dim, rng)
        support = rng.choice(family.dim, size=family.support, replace=False)
        eig = np.zeros(family.dim)
        eig[support] = raw
        order = np.argsort(-eig, kind="stable")
        out.append(
            CovarianceSpec(
                dim=family.dim,
                eigenvalues=eig[order],
                basis=basis[:, order],
                label=f"alpha={family.alpha},B={family.support},task={t}",
            )
        )
    return out


def hardness(cov: CovarianceSpec) -> float:
    """tr(Lam) / lambda_min over the nonzero spectrum; scale-invariant."""
    return cov.trace / cov.min_nonzero_eig()


def gamma_single(cov: CovarianceSpec, n: int) -> GammaMatrix:
    """Gamma = (1 + 1/n) Lam + (tr(Lam)/n) I, in Lam's eigenbasis."""
    if n < 1:
        raise DomainError(f"prompt length must be >= 1, got {n}")
    gam_eigs = (1.0 + 1.0 / n) * cov.eigenvalues + cov.trace / n
    m = (cov.basis * gam_eigs) @ cov.basis.T
    return GammaMatrix(dim=cov.dim, matrix=0.5 * (m + m.T), kind="single-task", n=n)


def gamma_eigenvalues(cov: CovarianceSpec, n: int) -> np.ndarray:
    """Eigenvalues of the single-task Gamma, aligned with cov.eigenvalues."""
    return (1.0 + 1.0 / n) * cov.eigenvalues + cov.trace / n


def gamma_multi(tasks: Sequence[CovarianceSpec], pi: Sequence[float], n: int) -> GammaMatrix:
    """Multi-task Gamma for a pi-weighted mixture (see module docstring)."""
    if n < 1:
        raise DomainError(f"prompt length must be >= 1, got {n}")
    mix = TaskMixture(tuple(tasks), np.asarray(pi, dtype=float))
    d = mix.dim
    g = mix.mean_covariance()
    evals, evecs = np.linalg.eigh(g)
    if evals[0] <= ZERO_EIG_RTOL * max(evals[-1], 0.0) or evals[-1] <= 0.0:
        null = evecs[:, 0]
        raise DomainError(
            "mixture covariance sum_l pi_l Lam_l is singular along direction "
            f"{np.array2string(null, precision=3)} (eigenvalue {evals[0]:.3e})"
        )
    m = np.zeros((d, d))
    for w, t in zip(mix.pi, mix.tasks):
        if w == 0.0:
            continue
        lam = t.matrix
        lam_sq = (t.basis * t.eigenvalues**2) @ t.basis.T
        m += w * (2.0 * lam_sq + t.trace * lam)
    # m @ inv(g) via a solve against the symmetric g
    correction = np.linalg.solve(g, m.T).T
    gamma = ((n - 1.0) / n) * g + correction / n
    return GammaMatrix(dim=d, matrix=gamma, kind="multi-task", n=n, pi=mix.pi)


def fourth_moment_closed(cov: CovarianceSpec, a: np.ndarray, n: int) -> np.ndarray:
    """E[(XX^T/n) A (XX^T/n)] for X with n iid N(0, Lam) columns:

        ((n-1)/n) Lam A Lam + (1/n) (Lam (A + A^T) Lam + tr(Lam A) Lam).
    """
    a = np.asarray(a, dtype=float)
    lam = cov.matrix
    if a.shape != lam.shape:
        raise DomainError(f"A has shape {a.shape}, expected {lam.shape}")
    lal = lam @ a @ lam
    lat = lam @ a.T @ lam
    return ((n - 1.0) / n) * lal + (lal + lat + np.trace(lam @ a) * lam) / n


def fourth_moment_closed_mixture(
    tasks: Sequence[CovarianceSpec], pi: Sequence[float], a: np.ndarray, n: int
) -> np.ndarray:
    """Mixture version: columns drawn from task l with probability pi_l:

        ((n-1)/n) G A G + (1/n) sum_l pi_l (Lam_l (A + A^T) Lam_l + tr(A Lam_l) Lam_l).
    """
    mix = TaskMixture(tuple(tasks), np.asarray(pi, dtype=float))
    a = np.asarray(a, dtype=float)
    g = mix.mean_covariance()
    out = ((n - 1.0) / n) * (g @ a @ g)
    for w, t in zip(mix.pi, mix.tasks):
        if w == 0.0:
            continue
        lam = t.matrix
        out += (w / n) * (lam @ (a + a.T) @ lam + np.trace(a @ lam) * lam)
    return out


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo estimate with per-entry standard errors."""

    mean: np.ndarray
    se: np.ndarray
    trials: int


def second_moment_mixture(tasks: Sequence[CovarianceSpec], pi: Sequence[float], n: int) -> np.ndarray:
    """S = E[(XX^T/n)^2] under the mixture; the Hessian factor of the
    multi-task population loss."""
    mix = TaskMixture(tuple(tasks), np.asarray(pi, dtype=float))
    return fourth_moment_closed_mixture(mix.tasks, mix.pi, np.eye(mix.dim), n)


def fourth_moment_mc(
    task: TaskLike, a: np.ndarray, n: int, trials: int, seed: int
) -> MomentEstimate:
    """Monte Carlo estimate of E[(XX^T/n) A (XX^T/n)] with standard errors.

    Trials are drawn in fixed-size chunks, one generator sub-stream per chunk,
    so the result is reproducible and chunks could be farmed out to workers
    without changing the answer (sums are accumulated per chunk).
    """
    if trials < 100:
        raise DomainError(f"need at least 100 trials, got {trials}")
    a = np.asarray(a, dtype=float)
    if isinstance(task, TaskMixture) and len(task.tasks) == 1:
        task = task.tasks[0]  # degenerate mixture draws identically to the task
    if isinstance(task, TaskMixture):
        d = task.dim
        factors = np.stack([t.sqrt_factor() for t in task.tasks])
    else:
        d = task.dim
        factors = None
        factor = task.sqrt_factor()

    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    done = 0
    chunk_index = 0
    while done < trials:
        b = min(_MC_CHUNK, trials - done)
        rng = stream(seed, chunk_index)
        if factors is None:
            z = rng.standard_normal((b, n, d))
            x = z @ factor.T  # (b, n, d) rows are the prompt columns
        else:
            idx = rng.choice(len(task.tasks), size=(b, n), p=task.pi)
            z = rng.standard_normal((b, n, d))
            x = np.empty((b, n, d))
            for ell in range(len(task.tasks)):
                mask = idx == ell
                x[mask] = z[mask] @ factors[ell].T
        lam_hat = np.einsum("bnd,bne->bde", x, x) / n
        vals = lam_hat @ a @ lam_hat
        total += vals.sum(axis=0)
        total_sq += (vals**2).sum(axis=0)
        done += b
        chunk_index += 1

    mean = total / trials
    var = np.maximum(total_sq - trials * mean**2, 0.0) / max(trials - 1, 1)
    return MomentEstimate(mean=mean, se=np.sqrt(var / trials), trials=trials)
