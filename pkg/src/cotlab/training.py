"""Training: population and empirical losses, gradients, descent to the optimum.

With the structured parameter pattern (V31 evolving, W24 = -c fixed) the
population loss reduces to a convex quadratic in V := V31,

    L(V) = (c^2/2) tr(V S V^T) + d/2 + c tr(V L),

where in the single-task case S = Gamma @ Lam and L = Lam, and in the
multi-task case S = E[(XX^T/n)^2] under the mixture and L = sum_l pi_l Lam_l.
Its unique minimizer is V = -(1/c) L S^{-1} = -Gamma^{-1}/c.

Empirical training minimizes the averaged per-prompt loss

    (1/2B) sum_tau || f(E_tau)[:, -1] - (0, 0, w_tau, 1) ||^2

over full (V, W) matrices (or the structured blocks only), with exact
per-sample gradients:

    dV = u a^T,    dW = (E E^T V^T u) E[:,-1]^T / rho,
    a = E (E^T W E[:,-1]) / rho,   u = E[:,-1] + V a - target.

check_support_invariance uses those per-sample gradients at a large batch to
confirm that, from the structured initialization, every gradient block
outside {V31, W24} vanishes: the blocks that are zero sample-by-sample must
stay below 1e-8, and the V32 / W14 blocks (zero only in expectation, by
oddness in w_tau) must be statistically indistinguishable from zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Sequence

import numpy as np

from .lsa import LsaParams, structured_params, structured_w
from .prompts import PromptBatch, build_train_embedding, sample_prompt_rng
from .rng import stream
from .tasks import (
    CovarianceSpec,
    DomainError,
    TaskLike,
    TaskMixture,
    gamma_eigenvalues,
    second_moment_mixture,
)

_BATCH_CHUNK = 8192


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for both population and empirical training.

    eta is the gd step size ("auto" resolves against the quadratic's
    curvature) and doubles as the adam learning rate.  In empirical mode
    iters counts epochs over a fixed pool of pool_size prompts consumed in
    batches of batch_size.
    """

    n: int
    c: float = 1.0
    eta: float | str = "auto"
    iters: int = 10_000
    tol: float = 1e-10
    batch_size: int = 1000
    optimizer: str = "gd"
    seed: int = 0
    pool_size: int = 5000
    train_matrix: str = "full"  # "full" | "structured" (empirical mode)

    def __post_init__(self) -> None:
        if self.eta != "auto" and not (isinstance(self.eta, (int, float)) and self.eta > 0):
            raise DomainError(f"eta must be positive or 'auto', got {self.eta!r}")
        if self.tol <= 0:
            raise DomainError("tol must be positive")
        if self.optimizer not in ("gd", "adam"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")
        if self.train_matrix not in ("full", "structured"):
            raise DomainError(f"unknown train_matrix {self.train_matrix!r}")

    @staticmethod
    def from_json(text: str) -> "TrainConfig":
        obj = json.loads(text)
        known = {f.name for f in dataclass_fields(TrainConfig)}
        unknown = set(obj) - known
        if unknown:
            raise DomainError(f"unknown train config keys: {sorted(unknown)}")
        return TrainConfig(**obj)


@dataclass
class TrainTrace:
    """Per-iteration record of a training run."""

    loss: np.ndarray
    grad_norm: np.ndarray
    v31: np.ndarray
    iterations: int
    converged: bool
    dist_to_opt: np.ndarray | None = None
    params: LsaParams | None = None

    def to_csv(self, fh) -> None:
        fh.write("iter,loss,grad_norm,dist_to_opt\n")
        for i in range(len(self.loss)):
            dist = "" if self.dist_to_opt is None else repr(float(self.dist_to_opt[i]))
            fh.write(f"{i},{float(self.loss[i])!r},{float(self.grad_norm[i])!r},{dist}\n")


def _quadratic_terms(task: TaskLike, n: int) -> tuple[np.ndarray, np.ndarray]:
    """(S, L) of the reduced quadratic loss."""
    if isinstance(task, TaskMixture):
        return second_moment_mixture(task.tasks, task.pi, n), task.mean_covariance()
    lam = task.matrix
    s = (task.basis * (gamma_eigenvalues(task, n) * task.eigenvalues)) @ task.basis.T
    return 0.5 * (s + s.T), lam


def population_loss(v31: np.ndarray, task: TaskLike, n: int, c: float) -> float:
    """(c^2/2) tr(V S V^T) + d/2 + c tr(V L), the W24 = -c population loss."""
    v31 = np.asarray(v31, dtype=float)
    s, lam = _quadratic_terms(task, n)
    d = lam.shape[0]
    if v31.shape != (d, d):
        raise DomainError(f"V31 has shape {v31.shape}, expected {(d, d)}")
    return float(0.5 * c * c * np.sum((v31 @ s) * v31) + 0.5 * d + c * np.sum(v31 * lam))


def population_grad(v31: np.ndarray, task: TaskLike, n: int, c: float) -> np.ndarray:
    """c^2 V S + c L; zero exactly at V = -Gamma^{-1}/c."""
    v31 = np.asarray(v31, dtype=float)
    s, lam = _quadratic_terms(task, n)
    if v31.shape != lam.shape:
        raise DomainError(f"V31 has shape {v31.shape}, expected {lam.shape}")
    return c * c * (v31 @ s) + c * lam


def auto_eta(task: TaskLike, n: int, c: float) -> float:
    """Safe constant step size: 1/(c^2 max(||Gamma||, ||Gamma Lam||)) for a
    single task (covers both the preconditioner's norm and the Hessian's), and
    1/(c^2 ||S||) for mixtures."""
    s, _ = _quadratic_terms(task, n)
    s_norm = float(np.linalg.eigvalsh(s)[-1])
    if isinstance(task, TaskMixture):
        return 1.0 / (c * c * s_norm)
    gamma_norm = float(gamma_eigenvalues(task, n).max())
    return 1.0 / (c * c * max(gamma_norm, s_norm))


def train_population(
    task: TaskLike,
    config: TrainConfig,
    v31_init: np.ndarray | None = None,
    track_dist_to: np.ndarray | None = None,
) -> TrainTrace:
    """Gradient descent on the population loss from V31 = 0 (by default),
    W24 held at -c throughout.  Raises if the loss ever increases."""
    s, lam = _quadratic_terms(task, config.n)
    d = lam.shape[0]
    c = config.c
    v = np.zeros((d, d)) if v31_init is None else np.array(v31_init, dtype=float)
    eta = auto_eta(task, config.n, c) if config.eta == "auto" else float(config.eta)

    losses, grad_norms, dists = [], [], []
    converged = False
    steps = 0
    prev_loss = None
    while True:
        grad = c * c * (v @ s) + c * lam
        loss = float(0.5 * c * c * np.sum((v @ s) * v) + 0.5 * d + c * np.sum(v * lam))
        gn = float(np.linalg.norm(grad))
        losses.append(loss)
        grad_norms.append(gn)
        if track_dist_to is not None:
            dists.append(float(np.linalg.norm(v - track_dist_to)))
        if prev_loss is not None and loss > prev_loss + 1e-13 * (1.0 + abs(prev_loss)):
            raise RuntimeError(
                f"population loss increased ({prev_loss!r} -> {loss!r}) under gd with eta={eta!r}"
            )
        prev_loss = loss
        if gn <= config.tol:
            converged = True
            break
        if steps >= config.iters:
            break
        v = v - eta * grad
        steps += 1

    return TrainTrace(
        loss=np.array(losses),
        grad_norm=np.array(grad_norms),
        v31=v,
        iterations=steps,
        converged=converged,
        dist_to_opt=np.array(dists) if track_dist_to is not None else None,
        params=structured_params(v, c),
    )


# ---------------------------------------------------------------------------
# Empirical loss and gradients
# ---------------------------------------------------------------------------


def _stack_embeddings(prompts: Sequence[PromptBatch]) -> tuple[np.ndarray, np.ndarray, int, int]:
    if len(prompts) == 0:
        raise DomainError("need at least one prompt")
    d, n = prompts[0].dim, prompts[0].length
    for p in prompts:
        if p.dim != d or p.length != n:
            raise DomainError("all prompts must share d and n")
    e = np.zeros((len(prompts), 2 * d + 2, n + 1))
    targets = np.zeros((len(prompts), 2 * d + 2))
    for i, p in enumerate(prompts):
        e[i] = build_train_embedding(p).matrix
        targets[i, : d] = 0.0
        targets[i, d + 1 : 2 * d + 1] = p.w
        targets[i, 2 * d + 1] = 1.0
    return e, targets, d, n


def _last_column_residual(
    v: np.ndarray, w: np.ndarray, e: np.ndarray, targets: np.ndarray, rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """(u, a) per prompt: u = E[:,-1] + V a - target, a = E (E^T W E[:,-1]) / rho."""
    last = e[:, :, -1]
    s = last @ w.T              # (B, rows): W @ E[:,-1] per sample
    t = np.einsum("brc,br->bc", e, s)
    a = np.einsum("brc,bc->br", e, t) / rho
    u = last + a @ v.T - targets
    return u, a


def empirical_loss(params: LsaParams, prompts: Sequence[PromptBatch]) -> float:
    """(1/2B) sum_tau ||f(E_tau)[:, -1] - (0, 0, w_tau, 1)||^2, rho = n."""
    e, targets, _, n = _stack_embeddings(prompts)
    u, _ = _last_column_residual(params.v, params.w, e, targets, float(n))
    return float(0.5 * (u**2).sum() / len(prompts))


def _batch_loss_grads(
    v: np.ndarray, w: np.ndarray, e: np.ndarray, targets: np.ndarray, rho: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss and mean analytic gradients over a stacked prompt batch."""
    b = e.shape[0]
    u, a = _last_column_residual(v, w, e, targets, rho)
    loss = float(0.5 * (u**2).sum() / b)
    g_v = u.T @ a / b
    r = u @ v                   # V^T u per sample
    t2 = np.einsum("brc,br->bc", e, r)
    q = np.einsum("brc,bc->br", e, t2)
    g_w = q.T @ e[:, :, -1] / (rho * b)
    return loss, g_v, g_w


def _sample_pool(task: TaskLike, n: int, size: int, seed: int) -> list[PromptBatch]:
    prompts = []
    for i in range(size):
        rng = stream(seed, 0, i)
        if isinstance(task, TaskMixture):
            ell = int(rng.choice(len(task.tasks), p=task.pi))
            cov = task.tasks[ell]
        else:
            cov = task
        prompts.append(sample_prompt_rng(cov, n, rng))
    return prompts


def train_empirical(
    task: TaskLike,
    config: TrainConfig,
    params_init: LsaParams | None = None,
) -> TrainTrace:
    """Minimize the empirical loss over a fixed pool of generated prompts.

    Each of config.iters epochs sweeps the pool in consecutive batches of
    config.batch_size.  optimizer "adam" uses bias-corrected moments with
    betas (0.9, 0.999), eps 1e-8; "gd" takes plain steps.  train_matrix
    "full" updates every entry of V and W; "structured" updates only the V31
    block, holding the W pattern fixed.
    """
    if config.eta == "auto":
        raise DomainError("empirical training needs an explicit eta (e.g. 0.001)")
    lr = float(config.eta)
    d0 = task.dim
    if params_init is None:
        params_init = structured_params(np.zeros((d0, d0)), config.c)
    v = params_init.v.copy()
    w = params_init.w.copy()

    prompts = _sample_pool(task, config.n, config.pool_size, config.seed)
    e, targets, d, n = _stack_embeddings(prompts)
    rho = float(n)

    structured_only = config.train_matrix == "structured"
    rows = 2 * d + 2
    mv, sv = np.zeros((rows, rows)), np.zeros((rows, rows))
    mw, sw = np.zeros((rows, rows)), np.zeros((rows, rows))
    b1, b2, eps = 0.9, 0.999, 1e-8

    losses, grad_norms = [], []
    step = 0
    for _ in range(config.iters):
        for start in range(0, len(prompts), config.batch_size):
            eb = e[start : start + config.batch_size]
            tb = targets[start : start + config.batch_size]
            loss, g_v, g_w = _batch_loss_grads(v, w, eb, tb, rho)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"empirical loss became non-finite at step {step} "
                    f"(optimizer={config.optimizer}, eta={lr!r})"
                )
            if structured_only:
                mask = np.zeros_like(g_v)
                mask[d + 1 : 2 * d + 1, :d] = 1.0
                g_v = g_v * mask
                g_w = np.zeros_like(g_w)
            step += 1
            if config.optimizer == "adam":
                mv = b1 * mv + (1 - b1) * g_v
                sv = b2 * sv + (1 - b2) * g_v**2
                mw = b1 * mw + (1 - b1) * g_w
                sw = b2 * sw + (1 - b2) * g_w**2
                v = v - lr * (mv / (1 - b1**step)) / (np.sqrt(sv / (1 - b2**step)) + eps)
                w = w - lr * (mw / (1 - b1**step)) / (np.sqrt(sw / (1 - b2**step)) + eps)
            else:
                v = v - lr * g_v
                w = w - lr * g_w
            losses.append(loss)
            grad_norms.append(float(np.sqrt((g_v**2).sum() + (g_w**2).sum())))

    final = LsaParams(v=v, w=w, c=config.c, dim=d, structured=False)
    return TrainTrace(
        loss=np.array(losses),
        grad_norm=np.array(grad_norms),
        v31=final.v31.copy(),
        iterations=len(losses),
        converged=bool(grad_norms and grad_norms[-1] <= config.tol),
        params=final,
    )


# ---------------------------------------------------------------------------
# Support invariance
# ---------------------------------------------------------------------------

_GROUPS = ("1", "2", "3", "4")  # feature rows, label row, weight rows, ones row


def _block_of(d: int, i: int, j: int) -> str:
    def group(r: int) -> int:
        if r < d:
            return 0
        if r == d:
            return 1
        if r <= 2 * d:
            return 2
        return 3

    return f"{_GROUPS[group(i)]}{_GROUPS[group(j)]}"


def _block_masks(d: int) -> dict[str, np.ndarray]:
    rows = 2 * d + 2
    masks: dict[str, np.ndarray] = {}
    for bi in range(4):
        for bj in range(4):
            m = np.zeros((rows, rows), dtype=bool)
            sl = [slice(0, d), slice(d, d + 1), slice(d + 1, 2 * d + 1), slice(2 * d + 1, rows)]
            m[sl[bi], sl[bj]] = True
            masks[f"{_GROUPS[bi]}{_GROUPS[bj]}"] = m
    return masks


@dataclass
class StepStats:
    """Gradient statistics for one verification step."""

    step: int
    max_structural_v: float
    max_structural_w: float
    max_odd_sigmas: float       # max |mean|/SE over V32 and W14 entries
    v31_max_sigmas: float       # MC vs analytic V31 gradient, in SE units
    w24_sigmas: float           # MC vs analytic W24 gradient, in SE units
    w24_mean: float
    worst_block: str
    worst_value: float


@dataclass
class SupportInvarianceReport:
    ok: bool
    steps: list[StepStats] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)


def _mc_gradient(
    v: np.ndarray, w: np.ndarray, cov: CovarianceSpec, n: int, batch: int, seed: int, step: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Monte Carlo mean and SE of the per-sample gradients (dV, dW)."""
    rows = v.shape[0]
    d = cov.dim
    sum_v = np.zeros((rows, rows))
    sumsq_v = np.zeros((rows, rows))
    sum_w = np.zeros((rows, rows))
    sumsq_w = np.zeros((rows, rows))
    factor = cov.sqrt_factor()
    done = 0
    chunk_index = 0
    while done < batch:
        b = min(_BATCH_CHUNK, batch - done)
        rng = stream(seed, step, chunk_index)
        ws = rng.standard_normal((b, d))
        xs = np.einsum("de,ben->bdn", factor, rng.standard_normal((b, d, n)))
        ys = np.einsum("bdn,bd->bn", xs, ws)
        e = np.zeros((b, rows, n + 1))
        e[:, :d, :n] = xs
        e[:, d, :n] = ys
        e[:, 2 * d + 1, n] = 1.0
        targets = np.zeros((b, rows))
        targets[:, d + 1 : 2 * d + 1] = ws
        targets[:, 2 * d + 1] = 1.0

        u, a = _last_column_residual(v, w, e, targets, float(n))
        gv = np.einsum("bi,bj->bij", u, a)
        r = u @ v
        t2 = np.einsum("brc,br->bc", e, r)
        q = np.einsum("brc,bc->br", e, t2)
        gw = np.einsum("bi,bj->bij", q, e[:, :, -1]) / float(n)
        sum_v += gv.sum(axis=0)
        sumsq_v += (gv**2).sum(axis=0)
        sum_w += gw.sum(axis=0)
        sumsq_w += (gw**2).sum(axis=0)
        done += b
        chunk_index += 1

    mean_v = sum_v / batch
    mean_w = sum_w / batch
    se_v = np.sqrt(np.maximum(sumsq_v - batch * mean_v**2, 0.0) / (batch - 1) / batch)
    se_w = np.sqrt(np.maximum(sumsq_w - batch * mean_w**2, 0.0) / (batch - 1) / batch)
    return mean_v, se_v, mean_w, se_w


def check_support_invariance(
    cov: CovarianceSpec,
    n: int,
    c: float,
    steps: int,
    batch: int = 100_000,
    seed: int = 0,
    eta: float | None = None,
    structural_tol: float = 1e-8,
    init_override: tuple[np.ndarray, np.ndarray] | None = None,
) -> SupportInvarianceReport:
    """Verify that training gradients never leave the structured support.

    At each of `steps` analytic parameter updates (V31 and W24 evolve by
    their exact population gradients), the full-matrix gradient is estimated
    from `batch` sampled prompts and checked:

      - blocks that vanish sample-by-sample stay below structural_tol,
      - V32 and W14 (zero only in expectation) stay within 5 SE of zero,
      - the V31 block matches the analytic population gradient within 5 SE,
      - W24 matches its analytic gradient within 5 SE.

    With init_override (a non-conforming start) the first violated block is
    reported and the run stops.
    """
    d = cov.dim
    rows = 2 * d + 2
    if init_override is not None:
        v = np.array(init_override[0], dtype=float)
        w = np.array(init_override[1], dtype=float)
    else:
        v = np.zeros((rows, rows))
        w = structured_w(d, c)
    w24 = float(w[d, 2 * d + 1])

    s_mat, lam = _quadratic_terms(cov, n)
    if eta is None:
        eta = auto_eta(cov, n, c)

    masks = _block_masks(d)
    structural_v = ~(masks["31"] | masks["32"])
    structural_w = ~(masks["14"] | masks["24"])
    odd_mask_v = masks["32"]
    odd_mask_w = masks["14"]

    report = SupportInvarianceReport(ok=True)
    for t in range(steps):
        mean_v, se_v, mean_w, se_w = _mc_gradient(v, w, cov, n, batch, seed, t)

        max_sv = float(np.abs(mean_v[structural_v]).max())
        max_sw = float(np.abs(mean_w[structural_w]).max())
        floor = 1e-300
        odd_sig_v = np.abs(mean_v[odd_mask_v]) / np.maximum(se_v[odd_mask_v], floor)
        odd_sig_w = np.abs(mean_w[odd_mask_w]) / np.maximum(se_w[odd_mask_w], floor)
        max_odd = float(max(odd_sig_v.max(initial=0.0), odd_sig_w.max(initial=0.0)))

        v31 = v[d + 1 : 2 * d + 1, :d]
        analytic_v31 = w24 * w24 * (v31 @ s_mat) - w24 * lam
        diff31 = np.abs(mean_v[masks["31"]].reshape(d, d) - analytic_v31)
        v31_sig = float((diff31 / np.maximum(se_v[masks["31"]].reshape(d, d), floor)).max())
        analytic_w24 = w24 * float(np.sum((v31 @ s_mat) * v31)) - float(np.sum(v31 * lam))
        w24_mean = float(mean_w[d, 2 * d + 1])
        w24_se = max(float(se_w[d, 2 * d + 1]), floor)
        w24_sig = abs(w24_mean - analytic_w24) / w24_se

        # locate worst off-pattern magnitude for reporting
        off_v = np.where(structural_v, np.abs(mean_v), 0.0)
        off_w = np.where(structural_w, np.abs(mean_w), 0.0)
        if off_v.max() >= off_w.max():
            i, j = np.unravel_index(np.argmax(off_v), off_v.shape)
            worst_block, worst_value = "V" + _block_of(d, int(i), int(j)), float(off_v.max())
        else:
            i, j = np.unravel_index(np.argmax(off_w), off_w.shape)
            worst_block, worst_value = "W" + _block_of(d, int(i), int(j)), float(off_w.max())

        report.steps.append(
            StepStats(
                step=t,
                max_structural_v=max_sv,
                max_structural_w=max_sw,
                max_odd_sigmas=max_odd,
                v31_max_sigmas=v31_sig,
                w24_sigmas=w24_sig,
                w24_mean=w24_mean,
                worst_block=worst_block,
                worst_value=worst_value,
            )
        )

        if max_sv > structural_tol or max_sw > structural_tol:
            report.ok = False
            report.violations.append(
                f"step {t}: off-pattern gradient block {worst_block} has magnitude {worst_value:.3e}"
            )
            break
        if max_odd > 5.0:
            report.ok = False
            report.violations.append(
                f"step {t}: odd-function block deviates from zero by {max_odd:.1f} SE"
            )
            break

        # analytic update on the invariant support
        v31_new = v31 - eta * analytic_v31
        w24 = w24 - eta * analytic_w24
        v = np.zeros((rows, rows))
        v[d + 1 : 2 * d + 1, :d] = v31_new
        w = structured_w(d, c)
        w[d, 2 * d + 1] = w24

    return report
