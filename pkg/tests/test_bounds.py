from __future__ import annotations

import numpy as np
import pytest

from cotlab.bounds import (
    bound_corollary,
    bound_cot_leading,
    bound_direct,
    bound_multitask,
    contraction_eigenvalues,
)
from cotlab.cot import mc_test_error
from cotlab.tasks import (
    DomainError,
    GammaMatrix,
    gamma_multi,
    gamma_single,
    hardness,
    make_covariance,
)
from cotlab.selection import simplex_project

from conftest import random_spd_spec, rng_for


def test_bound_direct_worked_example():
    cov = make_covariance(np.ones(10), basis=np.eye(10))
    rep = bound_direct(cov, 100, 100)
    assert rep.value == pytest.approx(0.121 + 1.1)
    assert rep.inputs["hardness"] == pytest.approx(10.0)


def test_bound_direct_limit_is_test_term():
    cov = make_covariance(np.ones(10), basis=np.eye(10))
    huge_n = bound_direct(cov, 10**9, 100).value
    assert huge_n == pytest.approx((10 / 100) * 11, rel=1e-10)


def test_bound_direct_requires_full_rank():
    cov = make_covariance([1.0, 0.0], basis=np.eye(2))
    with pytest.raises(DomainError):
        bound_direct(cov, 10, 10)


def test_bound_cot_leading_k_zero():
    cov = random_spd_spec(6, rng_for(70))
    assert bound_cot_leading(cov, 12, 0).value == pytest.approx(6.0)


def test_bound_cot_leading_isotropic_closed_form():
    d, n = 10, 20
    cov = make_covariance(np.ones(d), basis=np.eye(d))
    for k in (1, 2, 5):
        expect = d * ((d + 1) / (n + d + 1)) ** (2 * k)
        assert bound_cot_leading(cov, n, k).value == pytest.approx(expect, rel=1e-12)


def test_bound_cot_leading_strictly_decreasing():
    rng = rng_for(71)
    cov = random_spd_spec(5, rng)
    sig = contraction_eigenvalues(cov, 9)
    assert ((sig > -1.0) & (sig < 1.0)).all()
    vals = [bound_cot_leading(cov, 9, k).value for k in range(6)]
    assert (np.diff(vals) < 0).all()


def test_bound_corollary_worked_example():
    cov = make_covariance(np.ones(10), basis=np.eye(10))
    assert bound_corollary(cov, 20, 1).value == pytest.approx(10 * (11 / 31) ** 2, rel=1e-12)
    assert bound_corollary(cov, 20, 0).value == pytest.approx(10.0)


def test_corollary_dominates_leading_everywhere():
    rng = rng_for(72)
    for _ in range(30):
        d = int(rng.integers(2, 12))
        n = int(rng.integers(1, 80))
        k = int(rng.integers(0, 10))
        cov = random_spd_spec(d, rng, lo=0.1, hi=3.0)
        assert bound_cot_leading(cov, n, k).value <= bound_corollary(cov, n, k).value + 1e-12


def test_bound_multitask_exact_match_is_zero():
    rng = rng_for(73)
    cov = random_spd_spec(3, rng)
    gamma = GammaMatrix(dim=3, matrix=cov.matrix, kind="single-task", n=5)
    for k in (1, 2, 4):
        assert bound_multitask(gamma, cov, k).value <= 1e-20


def test_bound_multitask_scalar_example():
    target = make_covariance(np.ones(2), basis=np.eye(2))
    gamma = GammaMatrix(dim=2, matrix=2.0 * np.eye(2), kind="single-task", n=3)
    assert bound_multitask(gamma, target, 1).value == pytest.approx(2.0, rel=1e-12)


def test_bound_multitask_requires_spd():
    target = make_covariance(np.ones(2), basis=np.eye(2))
    gamma = GammaMatrix(dim=2, matrix=-np.eye(2), kind="single-task", n=3)
    with pytest.raises(DomainError):
        bound_multitask(gamma, target, 1)


def test_one_shot_mc_variants():
    from cotlab.bounds import one_shot_mc_error

    cov = random_spd_spec(4, rng_for(77), lo=0.4, hi=1.5)
    n, m = 40, 120
    mean_m, _ = one_shot_mc_error(cov, n, m, trials=200, seed=5)
    mean_n, _ = one_shot_mc_error(cov, n, m, trials=200, seed=5, variant="n")
    assert mean_m != mean_n  # the normalization matters when m != n
    assert mean_m <= bound_direct(cov, n, m).value
    with pytest.raises(DomainError):
        one_shot_mc_error(cov, n, m, trials=200, seed=5, variant="x")


def test_bound_direct_dominates_mc_small_grid():
    rng = rng_for(74)
    i = 0
    for n in (50, 200):
        for m in (50, 200):
            cov = random_spd_spec(10, rng, lo=0.3, hi=2.0)
            gamma = gamma_single(cov, n)
            mc, _ = mc_test_error(gamma, cov, m, 1, trials=400, seed=900 + i)
            assert mc <= bound_direct(cov, n, m).value
            i += 1


def test_bound_multitask_dominates_mc():
    rng = rng_for(75)
    d, n, k = 4, 40, 2
    tasks = [random_spd_spec(d, rng) for _ in range(3)]
    pi = simplex_project(rng.uniform(0.2, 1.0, size=3))
    target = random_spd_spec(d, rng)
    gamma = gamma_multi(tasks, pi, n)
    m = 100 * k * k * d
    mc, _ = mc_test_error(gamma, target, m, k, trials=400, seed=42)
    assert mc <= bound_multitask(gamma, target, k).value


def test_isotropic_tightness_slope():
    d, n = 10, 20
    cov = make_covariance(np.ones(d), basis=np.eye(d))
    ks = np.arange(1, 9)
    logs = np.log([bound_cot_leading(cov, n, int(k)).value for k in ks])
    slope = np.polyfit(ks, logs, 1)[0]
    assert slope == pytest.approx(2.0 * np.log((d + 1) / (n + d + 1)), rel=1e-10)


def test_contraction_range_follows_hardness():
    rng = rng_for(76)
    for _ in range(20):
        d = int(rng.integers(2, 10))
        n = int(rng.integers(1, 64))
        cov = random_spd_spec(d, rng)
        sig = contraction_eigenvalues(cov, n)
        upper = (1.0 + hardness(cov)) / (n + 1.0 + hardness(cov))
        assert sig.min() >= -1e-10
        assert sig.max() <= upper + 1e-10
