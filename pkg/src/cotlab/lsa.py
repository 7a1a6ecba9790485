"""Linear self-attention layer: forward pass, parameter blocks, optimum.

The layer maps an embedding E to

    f(E) = E + V @ E @ (E^T @ W @ E) / rho

with full (2d+2) x (2d+2) parameter matrices V, W.  Training drives them to
the structured optimum

    V*: only the weight-row/feature-column block V31 = -Gamma^{-1} / c,
    W*: feature-row/weight-column block c*I and scalar W24 = -c,

so the effective operator is V31 * W24 = Gamma^{-1}.  rho is the number of
demonstration pairs in the embedding (n during training, m at test time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .prompts import Embedding
from .tasks import DomainError, GammaMatrix


@dataclass(frozen=True)
class LsaParams:
    """Full V, W matrices plus the scalar c of the structured pattern."""

    v: np.ndarray
    w: np.ndarray
    c: float
    dim: int
    structured: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        rows = 2 * self.dim + 2
        if v.shape != (rows, rows) or w.shape != (rows, rows):
            raise DomainError(f"V/W must be {rows} x {rows}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise DomainError("V/W must be finite")
        if self.c == 0.0:
            raise DomainError("c must be nonzero")
        if self.structured:
            expected_v = _structured_v(self.v31, self.dim)
            expected_w = structured_w(self.dim, self.c)
            if np.abs(v - expected_v).max() > 0 or np.abs(w - expected_w).max() > 0:
                raise DomainError("params flagged structured deviate from the block pattern")

    @property
    def v31(self) -> np.ndarray:
        d = self.dim
        return self.v[d + 1 : 2 * d + 1, :d]

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.dim,
                "c": self.c,
                "V31": self.v31.tolist(),
                "structured": self.structured,
            }
        )

    @staticmethod
    def from_json(text: str) -> "LsaParams":
        obj = json.loads(text)
        return structured_params(np.asarray(obj["V31"], dtype=float), float(obj["c"]))


def _structured_v(v31: np.ndarray, d: int) -> np.ndarray:
    v = np.zeros((2 * d + 2, 2 * d + 2))
    v[d + 1 : 2 * d + 1, :d] = v31
    return v


def structured_w(d: int, c: float) -> np.ndarray:
    """The W pattern: W[0:d, d+1:2d+1] = c*I and W[d, 2d+1] = -c."""
    w = np.zeros((2 * d + 2, 2 * d + 2))
    w[:d, d + 1 : 2 * d + 1] = c * np.eye(d)
    w[d, 2 * d + 1] = -c
    return w


def structured_params(v31: np.ndarray, c: float) -> LsaParams:
    v31 = np.asarray(v31, dtype=float)
    d = v31.shape[0]
    if v31.shape != (d, d):
        raise DomainError(f"V31 must be square, got {v31.shape}")
    return LsaParams(v=_structured_v(v31, d), w=structured_w(d, c), c=c, dim=d, structured=True)


def lsa_forward(emb: Embedding, params: LsaParams, rho: float) -> Embedding:
    """One layer: E + V E (E^T W E) / rho, full-matrix output."""
    if rho <= 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if params.dim != emb.dim:
        raise DomainError(f"params d={params.dim} but embedding d={emb.dim}")
    e = emb.matrix
    out = e + params.v @ e @ (e.T @ params.w @ e) / rho
    return Embedding(matrix=out, dim=emb.dim, n_demo=emb.n_demo)


def extract_weight(emb: Embedding) -> np.ndarray:
    """Weight estimate: rows d+1..2d of the final column."""
    if emb.cols < 1:
        raise DomainError("embedding has no columns")
    return emb.weight_block(-1).copy()


def optimal_params(gamma: GammaMatrix, c: float) -> LsaParams:
    """Closed-form optimum V31 = -Gamma^{-1}/c with the structured W."""
    if c == 0.0:
        raise DomainError("c must be nonzero")
    try:
        inv = np.linalg.inv(gamma.matrix)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"Gamma is singular: {exc}") from exc
    return structured_params(-inv / c, c)
