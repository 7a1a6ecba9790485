from __future__ import annotations

import numpy as np
import pytest

from cotlab.cot import cot_step
from cotlab.lsa import (
    LsaParams,
    extract_weight,
    lsa_forward,
    optimal_params,
    structured_params,
    structured_w,
)
from cotlab.prompts import build_cot_embedding, build_train_embedding, sample_prompt
from cotlab.tasks import DomainError, GammaMatrix, gamma_single
from cotlab.training import population_grad

from conftest import random_spd_spec, rng_for


def _setup(d=3, n=8, seed=0):
    rng = rng_for(30, seed)
    cov = random_spd_spec(d, rng)
    gamma = gamma_single(cov, n)
    prompt = sample_prompt(cov, n, seed=seed + 100)
    return cov, gamma, prompt


def test_zero_v_is_identity():
    _, _, prompt = _setup()
    d = prompt.dim
    params = LsaParams(v=np.zeros((2 * d + 2, 2 * d + 2)), w=structured_w(d, 1.0), c=1.0, dim=d)
    emb = build_train_embedding(prompt)
    out = lsa_forward(emb, params, rho=prompt.length)
    assert np.array_equal(out.matrix, emb.matrix)


def test_forward_linear_in_v():
    _, gamma, prompt = _setup()
    params = optimal_params(gamma, c=1.0)
    emb = build_train_embedding(prompt)
    base = lsa_forward(emb, params, rho=prompt.length).matrix - emb.matrix
    scaled_params = LsaParams(v=3.0 * params.v, w=params.w, c=1.0, dim=params.dim)
    scaled = lsa_forward(emb, scaled_params, rho=prompt.length).matrix - emb.matrix
    assert np.allclose(scaled, 3.0 * base, atol=1e-12)


def test_optimal_params_recover_preconditioned_estimate():
    cov, gamma, prompt = _setup(d=4, n=16)
    params = optimal_params(gamma, c=1.0)
    emb = build_train_embedding(prompt)
    w1 = extract_weight(lsa_forward(emb, params, rho=prompt.length))
    expected = np.linalg.solve(gamma.matrix, prompt.x @ prompt.x.T @ prompt.w) / prompt.length
    assert np.abs(w1 - expected).max() <= 1e-10


def test_extract_weight_identity_residual():
    _, _, prompt = _setup()
    d = prompt.dim
    w0 = np.arange(1.0, d + 1.0)
    params = LsaParams(v=np.zeros((2 * d + 2, 2 * d + 2)), w=structured_w(d, 1.0), c=1.0, dim=d)
    emb = build_train_embedding(prompt, w0=w0)
    assert np.array_equal(extract_weight(lsa_forward(emb, params, rho=prompt.length)), w0)


def test_extract_weight_reads_last_column():
    _, _, prompt = _setup(d=2)
    emb = build_cot_embedding(prompt, [np.zeros(2), np.array([0.5, -1.0])])
    assert np.array_equal(extract_weight(emb), np.array([0.5, -1.0]))


def test_optimal_params_blocks():
    gamma = GammaMatrix(dim=2, matrix=2.5 * np.eye(2), kind="single-task", n=2)
    params = optimal_params(gamma, c=1.0)
    assert np.allclose(params.v31, -0.4 * np.eye(2))
    assert params.structured
    # effective operator V31 * W24 = Gamma^{-1}; W24 sits at row d, col 2d+1
    assert np.abs(params.v31 * params.w[2, 5] - np.linalg.inv(gamma.matrix)).max() <= 1e-12


def test_optimal_params_stationary():
    cov, gamma, _ = _setup(d=5, n=6)
    params = optimal_params(gamma, c=1.3)
    grad = population_grad(params.v31, cov, 6, 1.3)
    assert np.abs(grad).max() <= 1e-10


def test_optimal_params_singular_gamma():
    g = GammaMatrix(dim=2, matrix=np.zeros((2, 2)), kind="single-task", n=1)
    with pytest.raises(DomainError):
        optimal_params(g, c=1.0)


def test_forward_preserves_demonstrations_structured():
    _, gamma, prompt = _setup(d=3, n=10)
    params = optimal_params(gamma, c=2.0)
    emb = build_cot_embedding(prompt, [np.zeros(3), np.ones(3)])
    out = lsa_forward(emb, params, rho=prompt.length)
    m = prompt.length
    assert np.array_equal(out.matrix[:, :m], emb.matrix[:, :m])


def test_forward_bridge_matches_cot_step():
    rng = rng_for(31)
    for trial in range(10):
        d = int(rng.integers(2, 17))
        m = int(rng.integers(d, 257))
        cov = random_spd_spec(d, rng)
        gamma = gamma_single(cov, int(rng.integers(1, 33)))
        prompt = sample_prompt(cov, m, seed=500 + trial)
        params = optimal_params(gamma, c=1.0)
        w_i = rng.standard_normal(d)
        emb = build_cot_embedding(prompt, [np.zeros(d), w_i])
        stepped = extract_weight(lsa_forward(emb, params, rho=m))
        assert np.abs(stepped - cot_step(w_i, prompt, gamma)).max() <= 1e-10


def test_params_json_roundtrip():
    _, gamma, _ = _setup(d=3)
    params = optimal_params(gamma, c=0.7)
    back = LsaParams.from_json(params.to_json())
    assert np.allclose(back.v, params.v, atol=1e-15)
    assert np.allclose(back.w, params.w, atol=1e-15)
    assert back.structured


def test_structured_flag_validated():
    with pytest.raises(DomainError):
        LsaParams(v=np.ones((8, 8)), w=structured_w(3, 1.0), c=1.0, dim=3, structured=True)


def test_structured_params_shape_check():
    with pytest.raises(DomainError):
        structured_params(np.zeros((2, 3)), c=1.0)
