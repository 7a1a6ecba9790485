from __future__ import annotations

import numpy as np
import pytest

from cotlab.selection import (
    SelectionProblem,
    SelectionResult,
    build_quadratic,
    estimate_epsilon,
    eval_nonconvex_objective,
    hard_task_mass,
    quadratic_objective,
    simplex_project,
    solve_selection,
)
from cotlab.tasks import (
    DomainError,
    TaskFamilySpec,
    gamma_multi,
    haar_orthogonal,
    make_covariance,
    power_law_spectrum,
)

from conftest import rng_for
from grid_oracle import project_grid_2d, project_grid_3d


def _unit_trace_spec(d, rng, label=""):
    eigs = rng.uniform(0.2, 1.0, size=d)
    eigs /= eigs.sum()
    return make_covariance(eigs, basis=haar_orthogonal(d, rng), label=label)


# ---------------------------------------------------------------- projection


def test_projection_idempotent_on_simplex():
    rng = rng_for(80)
    for _ in range(20):
        v = rng.dirichlet(np.ones(int(rng.integers(2, 8))))
        assert np.abs(simplex_project(v) - v).max() <= 1e-12


def test_projection_vertex_case():
    assert np.allclose(simplex_project(np.array([2.0, -1.0])), [1.0, 0.0])


def test_projection_interior_case():
    assert np.allclose(simplex_project(np.array([0.4, 0.8])), [0.3, 0.7])


def test_projection_output_on_simplex():
    rng = rng_for(81)
    for _ in range(50):
        v = rng.standard_normal(int(rng.integers(2, 12))) * 3.0
        p = simplex_project(v)
        assert p.min() >= 0.0
        assert abs(p.sum() - 1.0) <= 1e-12


def test_projection_matches_grid_oracle_small():
    rng = rng_for(82)
    for _ in range(10):
        v2 = rng.standard_normal(2) * 1.5
        assert np.abs(simplex_project(v2) - project_grid_2d(v2)).max() <= 1e-3
    for _ in range(3):
        v3 = rng.standard_normal(3) * 1.5
        assert np.abs(simplex_project(v3) - project_grid_3d(v3)).max() <= 1e-3


def test_projection_rejects_nonfinite():
    with pytest.raises(DomainError):
        simplex_project(np.array([1.0, np.nan]))


# ---------------------------------------------------------------- quadratic


def test_build_quadratic_perfect_single_task():
    rng = rng_for(83)
    sigma = _unit_trace_spec(5, rng)
    problem = SelectionProblem((sigma,), sigma, n=20, k=2)
    q, b, const = build_quadratic(problem)
    assert q[0, 0] == pytest.approx(5.0, rel=1e-9)
    assert b[0] == pytest.approx(5.0, rel=1e-9)
    assert quadratic_objective(q, b, const, np.array([1.0])) == pytest.approx(0.0, abs=1e-9)


def test_build_quadratic_psd():
    rng = rng_for(84)
    tasks = [_unit_trace_spec(6, rng) for _ in range(8)]
    target = _unit_trace_spec(6, rng)
    q, _, _ = build_quadratic(SelectionProblem(tuple(tasks), target))
    assert np.linalg.eigvalsh(q).min() >= -1e-10


def test_quadratic_matches_direct_objective():
    rng = rng_for(85)
    tasks = [_unit_trace_spec(5, rng) for _ in range(6)]
    target = _unit_trace_spec(5, rng)
    problem = SelectionProblem(tuple(tasks), target)
    q, b, const = build_quadratic(problem)
    sigma_inv = np.linalg.inv(target.matrix)
    for _ in range(5):
        pi = rng.dirichlet(np.ones(6))
        mix = sum(w * t.matrix for w, t in zip(pi, tasks))
        direct = np.linalg.norm(np.eye(5) - sigma_inv @ mix, "fro") ** 2
        assert quadratic_objective(q, b, const, pi) == pytest.approx(direct, abs=1e-8)


def test_quadratic_lowrank_equals_dense():
    rng = rng_for(86)
    for d in (8, 64):
        fam = TaskFamilySpec(alpha=0.5, support=max(2, d // 8), dim=d, count=6, seed=int(rng.integers(1 << 30)))
        tasks = power_law_spectrum(fam)
        target = power_law_spectrum(
            TaskFamilySpec(alpha=0.8, support=d, dim=d, count=1, seed=int(rng.integers(1 << 30)))
        )[0]
        problem = SelectionProblem(tuple(tasks), target)
        q1, b1, _ = build_quadratic(problem, method="dense")
        q2, b2, _ = build_quadratic(problem, method="lowrank")
        assert np.abs(q1 - q2).max() <= 1e-8 * max(1.0, np.abs(q1).max())
        assert np.abs(b1 - b2).max() <= 1e-8 * max(1.0, np.abs(b1).max())


def test_singular_target_needs_ridge():
    rng = rng_for(87)
    task = _unit_trace_spec(4, rng)
    eigs = np.array([0.6, 0.4, 0.0, 0.0])
    target = make_covariance(eigs, basis=np.eye(4))
    with pytest.raises(DomainError, match="ridge"):
        build_quadratic(SelectionProblem((task,), target, ridge=0.0))
    q, b, const = build_quadratic(SelectionProblem((task,), target, ridge=1e-8))
    assert np.isfinite(q).all() and np.isfinite(b).all()


def test_problem_validates_unit_traces():
    rng = rng_for(88)
    bad = make_covariance(rng.uniform(0.5, 1.0, size=3), basis=np.eye(3))
    good = _unit_trace_spec(3, rng)
    with pytest.raises(DomainError, match="unit trace"):
        SelectionProblem((bad,), good)


# ---------------------------------------------------------------- solver


def test_solver_single_task_trivial():
    rng = rng_for(89)
    sigma = _unit_trace_spec(4, rng)
    res = solve_selection(SelectionProblem((sigma,), sigma, n=30, k=1))
    assert np.allclose(res.pi, [1.0])
    assert res.converged


def test_solver_recovers_commuting_mixture():
    t1 = make_covariance([0.7, 0.3], basis=np.eye(2))
    t2 = make_covariance([0.2, 0.8], basis=np.eye(2))
    target_eigs = 0.6 * np.array([0.7, 0.3]) + 0.4 * np.array([0.2, 0.8])
    target = make_covariance(target_eigs, basis=np.eye(2))
    res = solve_selection(SelectionProblem((t1, t2), target, n=50, k=2))
    assert np.abs(res.pi - np.array([0.6, 0.4])).max() <= 1e-4
    assert res.objective_quadratic <= 1e-8
    # grid-search oracle over the 2-simplex: unique zero at (0.6, 0.4)
    grid = np.linspace(0.0, 1.0, 10_001)
    sigma_inv = np.linalg.inv(target.matrix)
    mixes = grid[:, None, None] * t1.matrix + (1 - grid)[:, None, None] * t2.matrix
    objs = ((np.eye(2) - sigma_inv @ mixes) ** 2).sum(axis=(1, 2))
    assert grid[np.argmin(objs)] == pytest.approx(0.6, abs=1e-3)
    assert (objs[np.abs(grid - 0.6) > 1e-2] > objs.min() + 1e-6).all()


def test_solver_never_beats_uniform_start():
    rng = rng_for(90)
    tasks = [_unit_trace_spec(5, rng) for _ in range(7)]
    target = _unit_trace_spec(5, rng)
    problem = SelectionProblem(tuple(tasks), target)
    res = solve_selection(problem)
    q, b, const = build_quadratic(problem)
    uniform = np.full(7, 1.0 / 7.0)
    assert res.objective_quadratic <= quadratic_objective(q, b, const, uniform) + 1e-12


def test_solver_ties_get_equal_weights():
    rng = rng_for(91)
    base = _unit_trace_spec(4, rng)
    clones = (base, base, base)
    target = _unit_trace_spec(4, rng)
    res = solve_selection(SelectionProblem(clones, target))
    assert np.abs(res.pi - res.pi.mean()).max() <= 1e-9


def test_result_json_roundtrip():
    rng = rng_for(92)
    sigma = _unit_trace_spec(3, rng)
    res = solve_selection(SelectionProblem((sigma,), sigma))
    back = SelectionResult.from_json(res.to_json())
    assert np.allclose(back.pi, res.pi)
    assert back.converged == res.converged


def test_problem_json_roundtrip():
    rng = rng_for(93)
    tasks = tuple(_unit_trace_spec(3, rng) for _ in range(2))
    target = _unit_trace_spec(3, rng)
    problem = SelectionProblem(tasks, target, n=17, k=3, ridge=1e-7)
    back = SelectionProblem.from_json(problem.to_json())
    assert back.n == 17 and back.k == 3
    assert np.allclose(back.tasks[0].matrix, tasks[0].matrix)


# ---------------------------------------------------------------- objective


def test_nonconvex_objective_zero_at_match():
    # target equal to Gamma(pi) itself makes the contraction exact
    rng = rng_for(94)
    tasks = [_unit_trace_spec(4, rng) for _ in range(3)]
    pi = np.array([0.5, 0.3, 0.2])
    n = 25
    sym = gamma_multi(tasks, pi, n).sym()
    evals, evecs = np.linalg.eigh(sym)
    target = make_covariance(evals[::-1], basis=evecs[:, ::-1])
    assert eval_nonconvex_objective(tasks, pi, target, n, 3) <= 1e-18


def test_nonconvex_objective_k_zero_is_dimension():
    rng = rng_for(95)
    tasks = [_unit_trace_spec(4, rng) for _ in range(2)]
    target = _unit_trace_spec(4, rng)
    assert eval_nonconvex_objective(tasks, [0.5, 0.5], target, 10, 0) == pytest.approx(4.0)


def test_nonconvex_objective_monotonicity_both_ways():
    rng = rng_for(96)
    # contraction case: Gamma(pi) close to target -> decreasing in k
    tasks = [_unit_trace_spec(3, rng) for _ in range(2)]
    pi = [0.5, 0.5]
    n = 40
    gamma_sym = gamma_multi(tasks, pi, n).sym()
    close = make_covariance(
        np.sort(np.linalg.eigvalsh(gamma_sym))[::-1] * 0.9,
        basis=np.linalg.eigh(gamma_sym)[1][:, ::-1],
    )
    vals = [eval_nonconvex_objective(tasks, pi, close, n, k) for k in range(4)]
    assert (np.diff(vals) < 0).all()
    # expansion case: target much larger than Gamma along some direction
    eigs = np.sort(np.linalg.eigvalsh(gamma_sym))[::-1] * 0.9
    eigs[0] = np.linalg.eigvalsh(gamma_sym).max() * 4.0
    far = make_covariance(eigs, basis=np.linalg.eigh(gamma_sym)[1][:, ::-1])
    vals = [eval_nonconvex_objective(tasks, pi, far, n, k) for k in range(1, 5)]
    assert (np.diff(vals) > 0).all()


# ---------------------------------------------------------------- hard mass


def test_hard_task_mass_all_in():
    rng = rng_for(97)
    tasks = [_unit_trace_spec(4, rng) for _ in range(4)]
    target = _unit_trace_spec(4, rng)
    mass, hard_set = hard_task_mass(tasks, np.full(4, 0.25), target, epsilon=10.0)
    assert mass == pytest.approx(1.0)
    assert hard_set == [0, 1, 2, 3]


def test_hard_task_mass_empty_set():
    flat = make_covariance(np.full(4, 0.25), basis=np.eye(4))
    spiky_eigs = np.array([0.9, 0.06, 0.03, 0.01])
    target = make_covariance(spiky_eigs, basis=np.eye(4))
    mass, hard_set = hard_task_mass([flat], np.array([1.0]), target, epsilon=0.0)
    assert hard_set == [] and mass == 0.0


def test_hard_task_mass_literal_flag():
    rank_def = make_covariance([0.6, 0.4, 0.0], basis=np.eye(3))
    target = make_covariance([0.93, 0.05, 0.02], basis=np.eye(3))
    _, nonzero_set = hard_task_mass([rank_def], np.array([1.0]), target, epsilon=0.0)
    _, literal_set = hard_task_mass([rank_def], np.array([1.0]), target, epsilon=0.0,
                                    literal_sigma_min=True)
    assert nonzero_set == [] and literal_set == [0]


def test_estimate_epsilon_variants():
    rng = rng_for(98)
    tasks = [_unit_trace_spec(4, rng) for _ in range(3)]
    pi = np.array([0.4, 0.4, 0.2])
    target = _unit_trace_spec(4, rng)
    eps_full = estimate_epsilon(tasks, pi, target, n=20, use_full_gamma=True)
    eps_mix = estimate_epsilon(tasks, pi, target, n=20, use_full_gamma=False)
    assert eps_full >= 0 and eps_mix >= 0
