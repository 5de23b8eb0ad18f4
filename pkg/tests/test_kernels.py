import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import closure_components
from srgm import kernels
from srgm._accel import BACKEND, HAS_NUMBA

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")


def inputs(seed, n):
    rng = np.random.default_rng(seed)
    N = n * (n - 1)
    alpha = rng.exponential(1.0, n)
    beta = rng.exponential(1.0, n)
    zg = rng.normal(0, 1, N)
    a_ind = (rng.random(N) < 0.3).astype(float)
    return alpha, beta, float(rng.normal()), zg, a_ind


def test_default_backend_prefers_numba():
    assert BACKEND == ("numba" if HAS_NUMBA else "numpy")
    assert set(kernels.BACKEND_KERNELS) >= {"numpy"}


@pytest.mark.parametrize("n", [2, 3, 7, 40])
def test_predictor_order(n):
    alpha, beta, mu, zg, _ = inputs(n, n)
    eta = kernels.predictor_numpy(alpha, beta, mu, zg)
    k = 0
    for i in range(n):
        for j in range(n):
            if i != j:
                assert eta[k] == pytest.approx(alpha[i] + beta[j] + mu + zg[k], abs=1e-14)
                k += 1


@needs_numba
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_backends_agree(n, seed):
    alpha, beta, mu, zg, a_ind = inputs(seed, n)
    num, vec = kernels.BACKEND_KERNELS["numba"], kernels.BACKEND_KERNELS["numpy"]
    assert np.allclose(num["predictor"](alpha, beta, mu, zg), vec["predictor"](alpha, beta, mu, zg), rtol=0, atol=1e-13)
    for r1, r2 in zip(num["row_col_sums"](zg, n), vec["row_col_sums"](zg, n)):
        assert np.allclose(r1, r2, rtol=1e-13, atol=1e-12)
    assert np.array_equal(num["scatter"](zg, n), vec["scatter"](zg, n))
    assert num["loss_value"](alpha, beta, mu, zg, a_ind) == pytest.approx(vec["loss_value"](alpha, beta, mu, zg, a_ind), rel=1e-13)
    out1 = num["loss_and_grad"](alpha, beta, mu, zg, a_ind)
    out2 = vec["loss_and_grad"](alpha, beta, mu, zg, a_ind)
    for x1, x2 in zip(out1, out2):
        assert np.allclose(x1, x2, rtol=1e-12, atol=1e-11)
    w1, m1 = num["weighted_cross"](alpha, beta, mu, zg)
    w2, m2 = vec["weighted_cross"](alpha, beta, mu, zg)
    assert np.allclose(w1, w2, rtol=1e-13, atol=0) and np.allclose(m1, m2, rtol=1e-13, atol=0)


def test_scatter_places_offdiagonal():
    n = 4
    vals = np.arange(1, n * (n - 1) + 1, dtype=float)
    mat = kernels.scatter_numpy(vals, n)
    assert np.all(np.diag(mat) == 0)
    assert mat[0, 1] == 1 and mat[1, 0] == 4 and mat[3, 2] == 12


def test_loss_and_grad_layout():
    n = 5
    alpha, beta, mu, zg, a_ind = inputs(1, n)
    loss, g_a, g_b, g_mu, resid = kernels.loss_and_grad_numpy(alpha, beta, mu, zg, a_ind)
    p = 1 / (1 + np.exp(-kernels.predictor_numpy(alpha, beta, mu, zg)))
    assert np.allclose(resid, p - a_ind)
    mat = kernels.scatter_numpy(resid, n)
    assert np.allclose(g_a, mat.sum(axis=1)) and np.allclose(g_b, mat.sum(axis=0))
    assert g_mu == pytest.approx(resid.sum())
    assert loss == pytest.approx(kernels.loss_value_numpy(alpha, beta, mu, zg, a_ind))


@pytest.mark.parametrize("backend", sorted(kernels.BACKEND_KERNELS))
@given(st.integers(1, 12), st.data())
def test_component_roots_partition(backend, n, data):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = data.draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    u = np.array([e[0] for e in edges], dtype=np.int64)
    v = np.array([e[1] for e in edges], dtype=np.int64)
    roots = kernels.BACKEND_KERNELS[backend]["component_roots"](n, u, v)
    oracle = closure_components(n, edges)
    for i in range(n):
        for j in range(n):
            assert (roots[i] == roots[j]) == (oracle[i] == oracle[j])


SCRIPT = """
import json
import numpy as np
from srgm import DirectedGraph, EdgeCovariates, FitConfig, fit
from srgm._accel import BACKEND
from srgm.simulation import true_theta, sample_covariates
from srgm.graph import sample_srgm, components
from srgm.rng import make_rng
rng = make_rng(9)
theta = true_theta(40, 6)
Z = sample_covariates(40, 2, rng)
g = sample_srgm(theta, Z, rng)
res = fit(g, Z, FitConfig(lam=0.01))
print(json.dumps({"backend": BACKEND, "theta": res.theta_hat.to_vector().tolist(),
                  "support": res.support.tolist(), "giant": components(g).giant_size}))
"""


def run_backend(env_extra):
    env = {**os.environ, **env_extra}
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.parametrize("flag", [{"SRGM_BACKEND": "numpy"}, {"SRGM_DISABLE_NUMBA": "1"}])
def test_env_flag_selects_numpy_path_with_same_fit(flag):
    fallback = run_backend(flag)
    assert fallback["backend"] == "numpy"
    default = run_backend({"SRGM_BACKEND": "", "SRGM_DISABLE_NUMBA": ""})
    assert default["backend"] == BACKEND
    assert fallback["support"] == default["support"]
    assert fallback["giant"] == default["giant"]
    assert np.allclose(fallback["theta"], default["theta"], rtol=0, atol=1e-8)
