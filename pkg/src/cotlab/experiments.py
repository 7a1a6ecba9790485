"""Seeded experiment runners with a stable CSV schema.

Every runner emits RunRecord rows under the fixed header

    experiment,run_id,seed,d,n,m,k,hardness,test_error_mean,test_error_se,bound_value,wall_ms

with unused fields left empty.  Outputs are byte-stable for a fixed seed:
floats are written with repr (shortest round-trip) and the wall_ms column is
left empty in artifacts (wall-clock timing is reported on stderr instead so
reruns produce identical bytes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from . import bounds as bnd
from .cot import closed_form_k_step, cot_rollout, mc_test_error_curve
from .lsa import extract_weight, lsa_forward, optimal_params
from .prompts import build_cot_embedding, sample_prompt
from .rng import GENERATOR_ALGO, stream
from .selection import (
    SelectionProblem,
    SelectionResult,
    build_quadratic,
    estimate_epsilon,
    hard_task_mass,
    quadratic_objective,
    simplex_project,
    solve_selection,
)
from .tasks import (
    CovarianceSpec,
    DomainError,
    GammaMatrix,
    TaskFamilySpec,
    TaskMixture,
    fourth_moment_closed,
    fourth_moment_closed_mixture,
    fourth_moment_mc,
    gamma_multi,
    gamma_single,
    haar_orthogonal,
    hardness,
    make_covariance,
    power_law_spectrum,
)
from .training import TrainConfig, check_support_invariance, train_population

CSV_HEADER = "experiment,run_id,seed,d,n,m,k,hardness,test_error_mean,test_error_se,bound_value,wall_ms"

EXPERIMENTS = ("scaling", "tradeoff", "overthink", "select", "verify")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int | None = None
    n_list: tuple[int, ...] | None = None
    m: int = 10_000
    k_max: int = 8
    trials: int = 100
    seed: int = 0
    alpha_list: tuple[float, ...] = (0.2, 0.8)
    h_list: tuple[float, ...] | None = None
    eps_grid: tuple[float, ...] = (5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01)
    tasks_per_type: int = 50
    select_n: int = 100
    select_k: int = 4
    ridge: float = 1e-8
    out_dir: str = "."
    bug: bool = False

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.k_max < 0 or self.k_max > 256:
            raise DomainError("k_max must be in 0..256")
        for name in ("m", "trials", "tasks_per_type", "select_n", "select_k"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if self.d is not None and self.d < 1:
            raise DomainError("d must be positive")

    def resolved_d(self) -> int:
        if self.d is not None:
            return self.d
        return 200 if self.experiment == "select" else 10

    def resolved_n_list(self) -> tuple[int, ...]:
        if self.n_list is not None:
            return self.n_list
        return (100, 200, 400) if self.experiment == "overthink" else (10, 20, 30)

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(obj) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        for key in ("n_list", "alpha_list", "h_list", "eps_grid"):
            if key in obj and obj[key] is not None:
                obj[key] = tuple(obj[key])
        return ExperimentConfig(**obj)

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(json.loads(text))


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    run_id: str
    seed: int
    d: int
    n: int | None = None
    m: int | None = None
    k: int | None = None
    hardness: float | None = None
    test_error_mean: float | None = None
    test_error_se: float | None = None
    bound_value: float | None = None
    wall_ms: float | None = None

    def __post_init__(self) -> None:
        if self.test_error_mean is not None and self.test_error_mean < 0:
            raise DomainError("test_error_mean must be nonnegative")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(records: Iterable[RunRecord], fh) -> None:
    """Write the fixed-schema CSV; row order is made deterministic here."""
    ordered = sorted(
        records, key=lambda r: (r.run_id, r.n if r.n is not None else -1, r.k if r.k is not None else -1)
    )
    fh.write(CSV_HEADER + "\n")
    for r in ordered:
        fh.write(
            ",".join(
                _cell(v)
                for v in (
                    r.experiment, r.run_id, r.seed, r.d, r.n, r.m, r.k, r.hardness,
                    r.test_error_mean, r.test_error_se, r.bound_value, None,  # wall_ms stays empty
                )
            )
            + "\n"
        )


def run_metadata(cfg: ExperimentConfig) -> dict:
    """Reproducibility sidecar: config plus the pinned generator algorithm."""
    return {
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "generator": GENERATOR_ALGO,
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
    }


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------


def spectrum_with_hardness(d: int, h: float) -> CovarianceSpec:
    """Trace-d spectrum with Hard = h: one eigenvalue d/h, the rest equal."""
    if h < d:
        raise DomainError(f"hardness cannot be below d={d}")
    lam_min = d / h
    eigs = np.full(d, (d - lam_min) / (d - 1)) if d > 1 else np.array([lam_min])
    eigs[-1] = lam_min
    return make_covariance(eigs, basis=np.eye(d), label=f"H={h:g}")


def run_scaling(cfg: ExperimentConfig) -> list[RunRecord]:
    """Matched-task error vs CoT depth for several (n, hardness) pairs."""
    d = cfg.resolved_d()
    h_list = cfg.h_list if cfg.h_list is not None else (float(d), 4.0 * d, 16.0 * d)
    ks = np.arange(0, cfg.k_max + 1)
    records = []
    for hi, h in enumerate(h_list):
        cov = spectrum_with_hardness(d, h)
        for n in cfg.resolved_n_list():
            gamma = gamma_single(cov, n)
            curve = mc_test_error_curve(gamma, cov, cfg.m, ks, cfg.trials, _child_seed(cfg.seed, 1, hi, n))
            for i, k in enumerate(ks):
                records.append(
                    RunRecord(
                        experiment="scaling",
                        run_id=f"H{h:g}-n{n}",
                        seed=cfg.seed,
                        d=d,
                        n=n,
                        m=cfg.m,
                        k=int(k),
                        hardness=hardness(cov),
                        test_error_mean=float(curve.mean[i]),
                        test_error_se=float(curve.se[i]),
                        bound_value=bnd.bound_cot_leading(cov, n, int(k)).value,
                    )
                )
    return records


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# tradeoff
# ---------------------------------------------------------------------------


def trained_gamma(cov: CovarianceSpec, n: int, c: float = 1.0, tol: float = 1e-11) -> GammaMatrix:
    """Train the attention layer on the population loss and read the
    preconditioner off the converged V31 block."""
    trace = train_population(cov, TrainConfig(n=n, c=c, tol=tol, iters=500_000))
    gamma_inv = -c * trace.v31
    g = np.linalg.inv(gamma_inv)
    return GammaMatrix(dim=cov.dim, matrix=0.5 * (g + g.T), kind="single-task", n=n)


def run_tradeoff(cfg: ExperimentConfig) -> tuple[list[RunRecord], list[dict]]:
    """Error vs k per training length n, plus the minimal-k(n, eps) table."""
    d = cfg.resolved_d()
    cov = make_covariance(np.ones(d), basis=np.eye(d), label="isotropic")
    ks = np.arange(0, cfg.k_max + 1)
    records = []
    curves: dict[int, np.ndarray] = {}
    for n in cfg.resolved_n_list():
        gamma = trained_gamma(cov, n)
        curve = mc_test_error_curve(gamma, cov, cfg.m, ks, cfg.trials, _child_seed(cfg.seed, 2, n))
        curves[n] = curve.mean
        for i, k in enumerate(ks):
            records.append(
                RunRecord(
                    experiment="tradeoff",
                    run_id=f"n{n}",
                    seed=cfg.seed,
                    d=d,
                    n=n,
                    m=cfg.m,
                    k=int(k),
                    hardness=hardness(cov),
                    test_error_mean=float(curve.mean[i]),
                    test_error_se=float(curve.se[i]),
                    bound_value=bnd.bound_cot_leading(cov, n, int(k)).value,
                )
            )
    table = []
    for eps in cfg.eps_grid:
        for n in cfg.resolved_n_list():
            reachable = np.nonzero(curves[n] <= eps)[0]
            table.append(
                {
                    "eps": float(eps),
                    "n": n,
                    "k_min": int(reachable[0]) if reachable.size else None,
                    "reachable": bool(reachable.size),
                }
            )
    return records, table


def write_tradeoff_table(table: list[dict], fh) -> None:
    fh.write("eps,n,k_min\n")
    for row in table:
        k_min = row["k_min"] if row["reachable"] else "unreachable"
        fh.write(f"{row['eps']!r},{row['n']},{k_min}\n")


# ---------------------------------------------------------------------------
# overthink
# ---------------------------------------------------------------------------


def skewed_covariance(d: int, seed: int) -> CovarianceSpec:
    """Random-basis spectrum with eigenvalues ~ 1/i, scaled to trace d so the
    isotropic test task has matched expected squared norm."""
    eigs = 1.0 / np.arange(1, d + 1)
    eigs *= d / eigs.sum()
    return make_covariance(eigs, basis=haar_orthogonal(d, stream(seed, 3)), label="skewed-1/i")


def run_overthink(cfg: ExperimentConfig) -> tuple[list[RunRecord], dict]:
    """Skewed-train / isotropic-test error vs k, with a matched control."""
    d = cfg.resolved_d()
    train_cov = skewed_covariance(d, cfg.seed)
    test_cov = make_covariance(np.ones(d), basis=np.eye(d), label="isotropic")
    k_max = max(cfg.k_max, 2)
    ks = np.arange(0, k_max + 1)
    records = []
    summary: dict = {"n": {}}
    final_errors = {}
    for n in cfg.resolved_n_list():
        gamma = gamma_single(train_cov, n)
        curve = mc_test_error_curve(gamma, test_cov, cfg.m, ks, cfg.trials, _child_seed(cfg.seed, 3, n))
        control = mc_test_error_curve(gamma, train_cov, cfg.m, ks, cfg.trials, _child_seed(cfg.seed, 4, n))
        for i, k in enumerate(ks):
            records.append(
                RunRecord(
                    experiment="overthink", run_id=f"n{n}", seed=cfg.seed, d=d, n=n, m=cfg.m,
                    k=int(k), hardness=hardness(train_cov),
                    test_error_mean=float(curve.mean[i]), test_error_se=float(curve.se[i]),
                )
            )
            records.append(
                RunRecord(
                    experiment="overthink", run_id=f"n{n}-control", seed=cfg.seed, d=d, n=n,
                    m=cfg.m, k=int(k), hardness=hardness(train_cov),
                    test_error_mean=float(control.mean[i]), test_error_se=float(control.se[i]),
                    bound_value=bnd.bound_cot_leading(train_cov, n, int(k)).value,
                )
            )
        diffs = np.diff(curve.mean)
        rising = np.nonzero(diffs > 0)[0]
        k0 = int(rising[0]) if rising.size else None
        summary["n"][n] = {
            "k0": k0,
            "overthinking": k0 is not None and bool(np.all(diffs[k0:] > 0)),
            "control_monotone": bool(np.all(np.diff(control.mean) < 0)),
            "final_error": float(curve.mean[-1]),
        }
        final_errors[n] = float(curve.mean[-1])
    n_sorted = sorted(final_errors)
    summary["n_reversal_at_final_k"] = all(
        final_errors[a] < final_errors[b] for a, b in zip(n_sorted, n_sorted[1:])
    )
    return records, summary


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------

TYPE_NAMES = ("easy-short", "hard-short", "easy-long", "hard-long")


def selection_task_types(d: int, alpha_list: Sequence[float] = (0.2, 0.8)) -> list[dict]:
    """The four (alpha, B) task types, supports scaled from the d=1000 setup."""
    b_short = max(1, round(20 * d / 1000))
    b_long = max(1, round(100 * d / 1000))
    easy, hard = alpha_list
    return [
        {"name": "easy-short", "alpha": easy, "support": b_short},
        {"name": "hard-short", "alpha": hard, "support": b_short},
        {"name": "easy-long", "alpha": easy, "support": b_long},
        {"name": "hard-long", "alpha": hard, "support": b_long},
    ]


def run_select(cfg: ExperimentConfig) -> tuple[list[RunRecord], SelectionResult, dict]:
    """Generate the four task types, solve the selection QP, and report
    per-task and per-type outcomes."""
    d = cfg.resolved_d()
    types = selection_task_types(d, cfg.alpha_list)
    tasks: list[CovarianceSpec] = []
    labels: list[str] = []
    for idx, spec in enumerate(types):
        family = TaskFamilySpec(
            alpha=spec["alpha"], support=spec["support"], dim=d,
            count=cfg.tasks_per_type, seed=_child_seed(cfg.seed, 5, idx),
        )
        for t in power_law_spectrum(family):
            tasks.append(t)
            labels.append(spec["name"])
    target = power_law_spectrum(
        TaskFamilySpec(alpha=0.8, support=d, dim=d, count=1, seed=_child_seed(cfg.seed, 6))
    )[0]

    problem = SelectionProblem(tasks=tuple(tasks), target=target, n=cfg.select_n, k=cfg.select_k,
                               ridge=cfg.ridge)
    result = solve_selection(problem)

    q, b, const = build_quadratic(problem)
    uniform = np.full(len(tasks), 1.0 / len(tasks))
    uniform_objective = quadratic_objective(q, b, const, uniform)
    eps = estimate_epsilon(tasks, result.pi, target, n=cfg.select_n, use_full_gamma=True)
    eps_mixture = estimate_epsilon(tasks, result.pi, target, n=cfg.select_n, use_full_gamma=False)
    mass, hard_set = hard_task_mass(tasks, result.pi, target, eps)

    per_task = []
    for i, (t, lbl) in enumerate(zip(tasks, labels)):
        per_task.append(
            {
                "task_index": i,
                "type_label": lbl,
                "sigma_min": t.min_nonzero_eig(),
                "hardness": hardness(t),
                "pi": float(result.pi[i]),
            }
        )

    records = []
    summary_types = {}
    for spec in types:
        name = spec["name"]
        pis = np.array([row["pi"] for row in per_task if row["type_label"] == name])
        hards = np.array([row["hardness"] for row in per_task if row["type_label"] == name])
        summary_types[name] = {"mean_pi": float(pis.mean()), "mean_hardness": float(hards.mean())}
        records.append(
            RunRecord(
                experiment="select", run_id=f"type-{name}", seed=cfg.seed, d=d,
                n=cfg.select_n, k=cfg.select_k, hardness=float(hards.mean()),
                test_error_mean=float(pis.mean()),
                test_error_se=float(pis.std(ddof=1) / np.sqrt(pis.size)) if pis.size > 1 else 0.0,
                bound_value=result.objective_quadratic,
            )
        )
    summary = {
        "types": summary_types,
        "objective_quadratic": result.objective_quadratic,
        "objective_nonconvex": result.objective_nonconvex,
        "uniform_objective": uniform_objective,
        "epsilon": eps,
        "epsilon_mixture": eps_mixture,
        "hard_task_mass": mass,
        "hard_set_size": len(hard_set),
        "converged": result.converged,
        "per_task": per_task,
    }
    return records, result, summary


def write_selection_csv(per_task: list[dict], fh) -> None:
    fh.write("task_index,type_label,sigma_min,hardness,pi\n")
    for row in per_task:
        fh.write(
            f"{row['task_index']},{row['type_label']},{row['sigma_min']!r},"
            f"{row['hardness']!r},{row['pi']!r}\n"
        )


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class VerifyReport:
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        return [
            f"[{'PASS' if s.passed else 'FAIL'}] {s.name}: margin={s.margin:.3g} {s.detail}"
            for s in self.suites
        ]


def _random_spd_spec(d: int, rng: np.random.Generator, lo: float = 0.5, hi: float = 2.0) -> CovarianceSpec:
    eigs = rng.uniform(lo, hi, size=d)
    return make_covariance(eigs, basis=haar_orthogonal(d, rng))


def _maybe_bugged(gamma: GammaMatrix, bug: bool) -> GammaMatrix:
    if not bug:
        return gamma
    return GammaMatrix(dim=gamma.dim, matrix=-gamma.matrix, kind=gamma.kind, n=gamma.n, pi=gamma.pi)


def run_verify(cfg: ExperimentConfig) -> VerifyReport:
    """Umbrella property suites with measured margins.

    cfg.bug flips the sign of the preconditioner used for the Monte Carlo
    side of the dominance suites (negative control: dominance must fail).
    """
    seed = cfg.seed
    report = VerifyReport()

    # moment identities, single task and mixture
    worst = 0.0
    for i in range(5):
        rng = stream(seed, 10, i)
        d = int(rng.integers(2, 7))
        n = int(rng.integers(1, 9))
        cov = _random_spd_spec(d, rng)
        a = rng.standard_normal((d, d))
        est = fourth_moment_mc(cov, a, n, trials=20_000, seed=_child_seed(seed, 11, i))
        sig = np.abs(est.mean - fourth_moment_closed(cov, a, n)) / np.maximum(est.se, 1e-300)
        worst = max(worst, float(sig.max()))
    report.suites.append(SuiteResult("moments-single", worst <= 5.0, worst, "max |closed-mc|/SE"))

    worst = 0.0
    for i in range(5):
        rng = stream(seed, 12, i)
        d = int(rng.integers(2, 6))
        n = int(rng.integers(1, 7))
        t_count = int(rng.integers(2, 4))
        tasks = [_random_spd_spec(d, rng) for _ in range(t_count)]
        pi = simplex_project(rng.uniform(0.2, 1.0, size=t_count))
        a = rng.standard_normal((d, d))
        mix = TaskMixture(tuple(tasks), pi)
        est = fourth_moment_mc(mix, a, n, trials=20_000, seed=_child_seed(seed, 13, i))
        closed = fourth_moment_closed_mixture(tasks, pi, a, n)
        sig = np.abs(est.mean - closed) / np.maximum(est.se, 1e-300)
        worst = max(worst, float(sig.max()))
    report.suites.append(SuiteResult("moments-mixture", worst <= 5.0, worst, "max |closed-mc|/SE"))

    # multi-task Gamma reduces to the single-task one at T=1
    worst = 0.0
    for i in range(10):
        rng = stream(seed, 14, i)
        d = int(rng.integers(2, 8))
        n = int(rng.integers(1, 9))
        cov = _random_spd_spec(d, rng)
        diff = np.abs(gamma_multi([cov], [1.0], n).matrix - gamma_single(cov, n).matrix).max()
        worst = max(worst, float(diff))
    report.suites.append(SuiteResult("gamma-reduction", worst <= 1e-12, worst, "max |multi-single|"))

    # convergence to the closed-form optimum
    worst = 0.0
    for i in range(5):
        rng = stream(seed, 15, i)
        d = int(rng.integers(2, 9))
        n = int(rng.integers(2, 33))
        cov = _random_spd_spec(d, rng)
        trace = train_population(cov, TrainConfig(n=n, c=1.0, tol=1e-12, iters=200_000))
        target = -np.linalg.inv(gamma_single(cov, n).matrix)
        worst = max(worst, float(np.linalg.norm(trace.v31 - target)))
    report.suites.append(SuiteResult("convergence", worst <= 1e-6, worst, "max ||V31 + Gamma^-1/c||_F"))

    worst = 0.0
    for i in range(3):
        rng = stream(seed, 16, i)
        d = int(rng.integers(2, 6))
        n = int(rng.integers(2, 17))
        t_count = int(rng.integers(2, 5))
        tasks = [_random_spd_spec(d, rng) for _ in range(t_count)]
        pi = simplex_project(rng.uniform(0.2, 1.0, size=t_count))
        mix = TaskMixture(tuple(tasks), pi)
        trace = train_population(mix, TrainConfig(n=n, c=1.0, tol=1e-12, iters=200_000))
        target = -np.linalg.inv(gamma_multi(tasks, pi, n).matrix)
        worst = max(worst, float(np.linalg.norm(trace.v31 - target)))
    report.suites.append(
        SuiteResult("convergence-multitask", worst <= 1e-6, worst, "max ||V31 + Gamma^-1/c||_F")
    )

    # CoT rollout equals the closed form
    worst = 0.0
    for i in range(10):
        rng = stream(seed, 17, i)
        d = int(rng.integers(2, 9))
        m = int(rng.integers(d, 65))
        k = int(rng.integers(0, 17))
        cov = _random_spd_spec(d, rng)
        gamma = gamma_single(cov, int(rng.integers(1, 33)))
        prompt = sample_prompt(cov, m, _child_seed(seed, 18, i))
        rollout = cot_rollout(prompt, gamma, k)
        closed = closed_form_k_step(gamma, prompt.empirical_covariance(), k, prompt.w)
        rel = np.linalg.norm(rollout.final - closed) / max(np.linalg.norm(closed), 1e-300)
        worst = max(worst, float(rel))
    report.suites.append(SuiteResult("cot-equivalence", worst <= 1e-9, worst, "max rel err"))

    # forward-pass-driven rollout equals the recursion
    worst = 0.0
    for i in range(5):
        rng = stream(seed, 19, i)
        d = int(rng.integers(2, 7))
        m = int(rng.integers(d, 33))
        k = int(rng.integers(1, 7))
        cov = _random_spd_spec(d, rng)
        gamma = gamma_single(cov, int(rng.integers(1, 17)))
        prompt = sample_prompt(cov, m, _child_seed(seed, 20, i))
        params = optimal_params(gamma, c=1.0)
        thoughts = [np.zeros(d)]
        for _ in range(k):
            emb = build_cot_embedding(prompt, thoughts)
            thoughts.append(extract_weight(lsa_forward(emb, params, rho=m)))
        rollout = cot_rollout(prompt, gamma, k)
        worst = max(worst, float(np.abs(np.stack(thoughts) - rollout.trajectory).max()))
    report.suites.append(SuiteResult("lsa-bridge", worst <= 1e-10, worst, "max |forward-recursion|"))

    # dominance: Monte Carlo under each bound
    worst = 0.0
    for i, (n, m) in enumerate((n, m) for n in (50, 100, 200) for m in (50, 100, 200)):
        rng = stream(seed, 21, i)
        cov = _random_spd_spec(10, rng, lo=0.3, hi=2.0)
        gamma = gamma_single(cov, n)
        curve = mc_test_error_curve(_maybe_bugged(gamma, cfg.bug), cov, m, np.array([1]), 500,
                                    _child_seed(seed, 22, i))
        ratio = float(curve.mean[0] / bnd.bound_direct(cov, n, m).value)
        worst = max(worst, ratio)
    report.suites.append(SuiteResult("dominance-direct", worst <= 1.0, worst, "max mc/bound"))

    worst = 0.0
    for i, k in enumerate((1, 2)):
        rng = stream(seed, 23, i)
        d = 4
        n = 50
        tasks = [_random_spd_spec(d, rng) for _ in range(3)]
        pi = simplex_project(rng.uniform(0.2, 1.0, size=3))
        target = _random_spd_spec(d, rng)
        gamma = gamma_multi(tasks, pi, n)
        m = 100 * k * k * d
        curve = mc_test_error_curve(_maybe_bugged(gamma, cfg.bug), target, m, np.array([k]), 500,
                                    _child_seed(seed, 24, i))
        ratio = float(curve.mean[0] / bnd.bound_multitask(gamma, target, k).value)
        worst = max(worst, ratio)
    report.suites.append(SuiteResult("dominance-multitask", worst <= 1.0, worst, "max mc/bound"))

    worst = 0.0
    for i in range(10):
        rng = stream(seed, 25, i)
        d = int(rng.integers(2, 11))
        n = int(rng.integers(2, 65))
        k = int(rng.integers(0, 9))
        cov = _random_spd_spec(d, rng)
        ratio = bnd.bound_cot_leading(cov, n, k).value / bnd.bound_corollary(cov, n, k).value
        worst = max(worst, float(ratio))
    report.suites.append(SuiteResult("corollary-dominates-leading", worst <= 1.0, worst, "max leading/corollary"))

    # contraction spectrum stays inside the hardness-controlled range
    worst = 0.0
    for i in range(10):
        rng = stream(seed, 26, i)
        d = int(rng.integers(2, 11))
        n = int(rng.integers(1, 65))
        cov = _random_spd_spec(d, rng)
        sig = bnd.contraction_eigenvalues(cov, n)
        h = hardness(cov)
        upper = (1.0 + h) / (n + 1.0 + h)
        worst = max(worst, float(max(sig.max() - upper, -sig.min(), 0.0)))
    report.suites.append(SuiteResult("contraction-range", worst <= 1e-10, worst, "max range violation"))

    # simplex projection basics
    margin = 0.0
    p = simplex_project(np.array([2.0, -1.0]))
    margin = max(margin, float(np.abs(p - np.array([1.0, 0.0])).max()))
    p = simplex_project(np.array([0.4, 0.8]))
    margin = max(margin, float(np.abs(p - np.array([0.3, 0.7])).max()))
    v = stream(seed, 27).dirichlet(np.ones(6))
    margin = max(margin, float(np.abs(simplex_project(v) - v).max()))
    report.suites.append(SuiteResult("simplex-projection", margin <= 1e-12, margin, "max deviation"))

    # support invariance (reduced size)
    rng = stream(seed, 28)
    cov = _random_spd_spec(3, rng)
    inv_report = check_support_invariance(cov, n=6, c=1.0, steps=2, batch=20_000,
                                          seed=_child_seed(seed, 29))
    margin = max(max(s.max_structural_v, s.max_structural_w) for s in inv_report.steps)
    report.suites.append(SuiteResult("support-invariance", inv_report.ok, margin, "max off-pattern"))

    # selection sanity at small scale
    small = replace(cfg, experiment="select", d=40, tasks_per_type=8, trials=cfg.trials)
    _, result, summary = run_select(small)
    types = summary["types"]
    ordered = (
        types["hard-long"]["mean_pi"] > types["easy-short"]["mean_pi"]
        and summary["objective_quadratic"] <= summary["uniform_objective"] + 1e-12
    )
    report.suites.append(
        SuiteResult(
            "selection-sanity",
            bool(ordered and result.converged),
            types["hard-long"]["mean_pi"] - types["easy-short"]["mean_pi"],
            "hard-long minus easy-short mean pi",
        )
    )

    return report
