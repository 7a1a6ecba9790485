"""Prompt sampling and embedding construction.

An in-context regression prompt is (x_1, y_1, ..., x_n, y_n) with
y_i = <w, x_i>, x_i ~ N(0, Lam), w ~ N(0, I).  The embedding is the
(2d+2) x (cols) matrix

    [ X  0 ... 0  ]      rows 0..d-1   demonstration features
    [ y  0 ... 0  ]      row  d        labels
    [ 0  w0 .. wi ]      rows d+1..2d  weight estimates (appended columns)
    [ 0  1  ... 1 ]      row  2d+1     ones on appended columns

Index convention used everywhere: the weight block of a column is the
0-indexed row slice d+1..2d inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rng import stream
from .tasks import CovarianceSpec, DomainError


@dataclass(frozen=True)
class PromptBatch:
    """One prompt: features x (d x n), labels y = x.T @ w, ground-truth w."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    task_label: str = ""

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        w = np.asarray(self.w, dtype=float)
        for name, val in (("x", x), ("y", y), ("w", w)):
            object.__setattr__(self, name, val)
        if x.ndim != 2 or x.shape[1] < 1:
            raise DomainError(f"x must be d x n with n >= 1, got {x.shape}")
        d, n = x.shape
        if y.shape != (n,) or w.shape != (d,):
            raise DomainError("y / w shapes do not match x")

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    @property
    def length(self) -> int:
        return self.x.shape[1]

    def empirical_covariance(self) -> np.ndarray:
        """X X^T / n."""
        return (self.x @ self.x.T) / self.length


@dataclass(frozen=True)
class Embedding:
    """A (2d+2) x cols embedding; n_demo columns hold demonstrations."""

    matrix: np.ndarray
    dim: int
    n_demo: int

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        rows = 2 * self.dim + 2
        if m.shape[0] != rows or m.shape[1] < self.n_demo:
            raise DomainError(f"embedding shape {m.shape} inconsistent with d={self.dim}")

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def demo_x(self) -> np.ndarray:
        return self.matrix[: self.dim, : self.n_demo]

    def demo_y(self) -> np.ndarray:
        return self.matrix[self.dim, : self.n_demo]

    def weight_block(self, col: int = -1) -> np.ndarray:
        """Weight slice (rows d+1..2d) of one column."""
        return self.matrix[self.dim + 1 : 2 * self.dim + 1, col]


def sample_prompt_rng(
    cov: CovarianceSpec, n: int, rng: np.random.Generator, task_label: str | None = None
) -> PromptBatch:
    """sample_prompt against a caller-provided generator (for derived streams)."""
    if n < 1:
        raise DomainError(f"prompt length must be >= 1, got {n}")
    w = rng.standard_normal(cov.dim)
    x = cov.sqrt_factor() @ rng.standard_normal((cov.dim, n))
    return PromptBatch(x=x, y=x.T @ w, w=w, task_label=task_label if task_label is not None else cov.label)


def sample_prompt(cov: CovarianceSpec, n: int, seed: int, task_label: str | None = None) -> PromptBatch:
    """Draw w ~ N(0, I_d) then X columns ~ N(0, Lam); y = X^T w.

    The draw order (w first, then the d x n feature block) is part of the
    determinism contract: identical (cov, n, seed) give bit-identical output.
    """
    return sample_prompt_rng(cov, n, stream(seed), task_label)


def build_train_embedding(prompt: PromptBatch, w0: np.ndarray | None = None) -> Embedding:
    """Training embedding: n demonstration columns plus one (0, 0, w0, 1) column."""
    d, n = prompt.dim, prompt.length
    if w0 is None:
        w0 = np.zeros(d)
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (d,):
        raise DomainError(f"w0 must have length {d}, got {w0.shape}")
    e = np.zeros((2 * d + 2, n + 1))
    e[:d, :n] = prompt.x
    e[d, :n] = prompt.y
    e[d + 1 : 2 * d + 1, n] = w0
    e[2 * d + 1, n] = 1.0
    return Embedding(matrix=e, dim=d, n_demo=n)


def build_cot_embedding(prompt: PromptBatch, thoughts: Sequence[np.ndarray]) -> Embedding:
    """Chain-of-thought embedding: m demonstration columns plus one
    (0, 0, w_j, 1) column per thought (thoughts[0] is w0)."""
    if len(thoughts) == 0:
        raise DomainError("thoughts must be nonempty (thoughts[0] = w0)")
    d, m = prompt.dim, prompt.length
    k = len(thoughts)
    e = np.zeros((2 * d + 2, m + k))
    e[:d, :m] = prompt.x
    e[d, :m] = prompt.y
    for j, w in enumerate(thoughts):
        w = np.asarray(w, dtype=float)
        if w.shape != (d,):
            raise DomainError(f"thought {j} must have length {d}, got {w.shape}")
        e[d + 1 : 2 * d + 1, m + j] = w
        e[2 * d + 1, m + j] = 1.0
    return Embedding(matrix=e, dim=d, n_demo=m)
