"""Training and evaluation loops for the replica, emitting the shared CSV schema.

Training draws fresh prompt batches, rolls out k chain-of-thought steps with
the estimates fed back in, and supervises the final output against the
prompt's true weight (config.supervise="all" additionally supervises every
intermediate step).  Evaluation reports the mean squared error of the step-k output
on held-out prompts, for each k, in the exact record schema of the analytic
package so both result sets overlay on one chart:

    experiment,run_id,seed,d,n,m,k,hardness,test_error_mean,test_error_se,bound_value,wall_ms
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np
import torch

from .data import TaskSpec, sample_batch
from .model import ReplicaConfig, WeightPredictor, cot_rollout, prompt_tokens

CSV_HEADER = "experiment,run_id,seed,d,n,m,k,hardness,test_error_mean,test_error_se,bound_value,wall_ms"


def _hardness(task: TaskSpec) -> float:
    eigs = task.eigenvalues
    return float(eigs.sum() / eigs[eigs > 1e-12 * eigs.max()].min())


@dataclass
class TrainResult:
    model: WeightPredictor
    losses: np.ndarray
    records: list[dict]


def train_replica(
    config: ReplicaConfig,
    train_task: TaskSpec | None = None,
    test_task: TaskSpec | None = None,
    eval_prompts: int = 512,
    run_id: str = "replica",
    log=None,
    eval_k: int | None = None,
) -> TrainResult:
    """Train on train_task (isotropic by default), evaluate error vs k on
    test_task (defaults to the training task)."""
    if train_task is None:
        train_task = TaskSpec.isotropic(config.d)
    if test_task is None:
        test_task = train_task
    torch.manual_seed(config.seed)
    model = WeightPredictor(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)

    losses = []
    for step in range(config.train_steps):
        for group in opt.param_groups:
            group["lr"] = config.lr * min(1.0, (step + 1) / max(config.warmup, 1))
        if config.curriculum:
            ramp = min(1.0, (step + 1) / max(1, int(0.4 * config.train_steps)))
            n_cur = max(2, int(round(config.n * ramp)))
        else:
            n_cur = config.n
        xs, ys, ws = sample_batch(train_task, config.batch, n_cur, rng)
        tokens, types = prompt_tokens(torch.from_numpy(xs).float(), torch.from_numpy(ys).float())
        target = torch.from_numpy(ws).float()
        w0 = None
        if config.thought_init == "randomized":
            # teach the refinement map from arbitrary starting estimates:
            # w_0 = a*w + b*z, with the canonical zero start half the time
            a = (rng.uniform(0.0, 1.0, (config.batch, 1))
                 * (rng.uniform(size=(config.batch, 1)) < 0.5))
            b = rng.uniform(0.0, 1.0, (config.batch, 1)) * (a[:, 0:1] > 0)
            start = a * ws + b * rng.standard_normal(ws.shape)
            w0 = torch.from_numpy(start).float()
        outs = cot_rollout(model, tokens, types, config.k, w0=w0)
        if config.supervise == "final":
            loss = ((outs[-1] - target) ** 2).sum(dim=1).mean()
        else:
            loss = sum(((w_hat - target) ** 2).sum(dim=1).mean() for w_hat in outs) / len(outs)
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        if log is not None and (step % 100 == 0 or step == config.train_steps - 1):
            print(f"[{run_id}] step {step}: loss {float(loss):.4f}", file=log)

    records = evaluate(model, config, test_task, eval_prompts, run_id, eval_k=eval_k)
    return TrainResult(model=model, losses=np.array(losses), records=records)


def evaluate(model: WeightPredictor, config: ReplicaConfig, test_task: TaskSpec,
             eval_prompts: int, run_id: str, eval_k: int | None = None) -> list[dict]:
    """Per-step squared error on fresh prompts from test_task; eval_k may
    exceed the training depth (the rollout just keeps applying the model)."""
    rng = np.random.default_rng(config.seed + 1_000_003)
    xs, ys, ws = sample_batch(test_task, eval_prompts, config.n, rng)
    tokens, types = prompt_tokens(torch.from_numpy(xs).float(), torch.from_numpy(ys).float())
    target = torch.from_numpy(ws).float()
    with torch.no_grad():
        outs = cot_rollout(model, tokens, types, eval_k if eval_k is not None else config.k)
    records = []
    for step, w_hat in enumerate(outs, start=1):
        errs = ((w_hat - target) ** 2).sum(dim=1).numpy()
        records.append(
            {
                "experiment": "replica",
                "run_id": run_id,
                "seed": config.seed,
                "d": config.d,
                "n": config.n,
                "m": config.n,
                "k": step,
                "hardness": _hardness(test_task),
                "test_error_mean": float(errs.mean()),
                "test_error_se": float(errs.std(ddof=1) / np.sqrt(errs.size)),
                "bound_value": None,
                "wall_ms": None,
            }
        )
    return records


def write_records(records: list[dict], fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for r in records:
        cells = []
        for key in CSV_HEADER.split(","):
            val = r.get(key)
            if val is None:
                cells.append("")
            elif isinstance(val, float):
                cells.append(repr(val))
            else:
                cells.append(str(val))
        fh.write(",".join(cells) + "\n")


def sign_check(steps: int = 2000, seed: int = 0, batch: int = 64, full: bool = False,
               skew_seed: int = 99, eval_prompts: int = 384, log=sys.stderr) -> dict:
    """The two qualitative claims at one seed.

    Matched: train on the isotropic task at n = 20 with depth-4 CoT and check
    the error falls from k = 1 to k = 4 (test-time scaling).  Skewed: train
    on the 1/i-spectrum task with *underdetermined* prompts (n = 4 < d = 6,
    so the model must lean on the training prior) and depth-2 CoT, then think
    *longer* than trained (k up to 4) on the isotropic task — the error rises
    (overthinking).  full=True uses the full-scale architecture and d = 10
    for both configurations; the reduced default uses d = 3 for the matched
    run, the largest dimension whose in-context circuit forms within a few
    thousand CPU steps.
    """
    reduced = not full
    d_matched = 10 if full else 3
    d_skew = 10 if full else 6
    n_skew = 8 if full else 4
    matched_cfg = ReplicaConfig(train_steps=steps, batch=batch, n=20, d=d_matched, k=4,
                                seed=seed, reduced=reduced, supervise="all")
    matched = train_replica(matched_cfg, run_id=f"matched-s{seed}", eval_prompts=eval_prompts,
                            log=log)
    skew_cfg = ReplicaConfig(train_steps=steps, batch=batch, n=n_skew, d=d_skew, k=2,
                             seed=seed, reduced=reduced, supervise="all")
    mismatched = train_replica(skew_cfg, train_task=TaskSpec.skewed(d_skew, skew_seed),
                               test_task=TaskSpec.isotropic(d_skew),
                               run_id=f"skewed-s{seed}", eval_prompts=eval_prompts,
                               log=log, eval_k=4)
    m_errs = [r["test_error_mean"] for r in matched.records]
    s_errs = [r["test_error_mean"] for r in mismatched.records]
    return {
        "matched_errors": m_errs,
        "skewed_errors": s_errs,
        "matched_decreases": m_errs[3] < m_errs[0],
        "skewed_increases": s_errs[3] > s_errs[0],
        "records": matched.records + mismatched.records,
    }
