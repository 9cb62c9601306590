import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import jacobi_singular_values, naive_matmul

from lowrank_pricing.linalg import (
    is_orthonormal,
    min_sym_eigenvalue,
    orthonormalize,
    project_strongly_pd,
    random_orthogonal,
    subspace_distance,
    thin_svd,
    top_left_singular_vectors,
    unit_sphere_sample,
)


# orthonormalize


def test_orthonormalize_identity():
    np.testing.assert_allclose(orthonormalize(np.eye(3)), np.eye(3), atol=1e-15)


def test_orthonormalize_single_column():
    np.testing.assert_allclose(orthonormalize(np.array([[3.0], [0.0], [0.0]])), [[1.0], [0.0], [0.0]])


def test_orthonormalize_random_spans_input():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((6, 3))
    b = orthonormalize(m)
    assert is_orthonormal(b)
    residual = m - naive_matmul(b, naive_matmul(b.T, m))
    assert np.linalg.norm(residual) < 1e-8


def test_orthonormalize_rank_deficient_reports_count():
    m = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 1.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(ValueError, match="1 of 3"):
        orthonormalize(m)


def test_orthonormalize_rejects_nonfinite():
    with pytest.raises(ValueError):
        orthonormalize(np.array([[1.0, np.nan], [0.0, 1.0]]))


@pytest.mark.parametrize("seed", range(5))
def test_orthonormalize_idempotent(seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((9, 4))
    once = orthonormalize(m)
    twice = orthonormalize(once)
    assert subspace_distance(once, twice) < 1e-10


# thin_svd


def test_thin_svd_diagonal():
    np.testing.assert_allclose(thin_svd(np.diag([3.0, 2.0, 1.0])).values, [3, 2, 1])


def test_thin_svd_rank_one():
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])
    s = thin_svd(np.outer(u, v)).values
    np.testing.assert_allclose(s, [2.0, 0.0, 0.0], atol=1e-14)


def test_thin_svd_matches_jacobi_oracle():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((8, 4))
    res = thin_svd(m)
    recon = res.left @ np.diag(res.values) @ res.right.T
    assert np.linalg.norm(recon - m) < 1e-10
    np.testing.assert_allclose(res.values, jacobi_singular_values(m), atol=1e-8)


@pytest.mark.parametrize("shape", [(8, 4), (4, 8), (5, 5), (1, 3), (3, 1)])
@pytest.mark.parametrize("seed", range(5))
def test_thin_svd_invariants(shape, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal(shape) * 10.0 ** rng.uniform(-3, 3)
    res = thin_svd(m)
    k = min(shape)
    assert res.left.shape == (shape[0], k) and res.right.shape == (shape[1], k)
    assert np.all(np.diff(res.values) <= 0) and np.all(res.values >= 0)
    assert is_orthonormal(res.left) and is_orthonormal(res.right)
    recon = res.left @ np.diag(res.values) @ res.right.T
    assert np.linalg.norm(recon - m) <= 1e-8 * np.linalg.norm(m)


def test_top_left_singular_vectors_span():
    rng = np.random.default_rng(2)
    u = random_orthogonal(10, 3, rng)
    m = u @ rng.standard_normal((3, 7))
    assert subspace_distance(top_left_singular_vectors(m, 3), u) < 1e-10


# subspace_distance


def test_subspace_distance_examples():
    e1 = np.array([[1.0], [0.0]])
    e2 = np.array([[0.0], [1.0]])
    diag = np.array([[1.0], [1.0]]) / np.sqrt(2)
    assert subspace_distance(e1, e1) == 0.0
    assert subspace_distance(e1, e2) == pytest.approx(1.0)
    assert subspace_distance(e1, diag) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)


def test_subspace_distance_shape_mismatch():
    with pytest.raises(ValueError):
        subspace_distance(np.eye(3)[:, :2], np.eye(3)[:, :1])


@pytest.mark.parametrize("seed", range(5))
def test_subspace_distance_rotation_invariant_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = random_orthogonal(12, 4, rng)
    b = random_orthogonal(12, 4, rng)
    o = random_orthogonal(4, 4, rng)
    dist = subspace_distance(a, b)
    assert 0 <= dist <= 2.0
    assert abs(subspace_distance(a, b @ o) - dist) < 1e-10
    assert abs(subspace_distance(b, a) - dist) < 1e-12
    assert subspace_distance(a, a @ o) < 1e-7


def test_subspace_distance_principal_angles():
    # against the sines of principal angles from an SVD of a.T @ b
    rng = np.random.default_rng(3)
    a = random_orthogonal(7, 3, rng)
    b = random_orthogonal(7, 3, rng)
    cosines = np.clip(np.linalg.svd(a.T @ b, compute_uv=False), 0, 1)
    assert subspace_distance(a, b) == pytest.approx(np.sqrt(np.sum(1 - cosines ** 2)), abs=1e-12)


# project_strongly_pd


def test_project_pd_examples():
    np.testing.assert_array_equal(project_strongly_pd(np.diag([10.0, 10.0]), 10), np.diag([10.0, 10.0]))
    np.testing.assert_allclose(project_strongly_pd(np.zeros((2, 2)), 10), 5 * np.eye(2), atol=1e-12)
    w = project_strongly_pd(np.array([[0.0, 1.0], [-1.0, 0.0]]), 2)
    np.testing.assert_allclose(w, [[1.0, 1.0], [-1.0, 1.0]], atol=1e-12)
    np.testing.assert_allclose(w + w.T, 2 * np.eye(2), atol=1e-12)


def test_project_pd_errors():
    with pytest.raises(ValueError):
        project_strongly_pd(np.ones((2, 3)), 1.0)
    with pytest.raises(ValueError):
        project_strongly_pd(np.eye(2), 0.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 8), lam=st.floats(0.01, 50.0), scale=st.floats(0.1, 30.0))
def test_project_pd_properties(seed, d, lam, scale):
    rng = np.random.default_rng(seed)
    v = rng.normal(0, scale, (d, d))
    w = project_strongly_pd(v, lam)
    assert min_sym_eigenvalue(w) >= lam - 1e-8
    np.testing.assert_allclose(project_strongly_pd(w, lam), w, atol=1e-10)
    np.testing.assert_allclose(w - w.T, v - v.T, atol=1e-12)


def test_project_pd_is_nearest():
    # no random feasible matrix is closer than the projection
    rng = np.random.default_rng(4)
    v = rng.normal(0, 3, (3, 3))
    lam = 4.0
    w = project_strongly_pd(v, lam)
    best = np.linalg.norm(w - v)
    for _ in range(2000):
        cand = project_strongly_pd(w + rng.normal(0, 0.5, (3, 3)), lam)
        assert np.linalg.norm(cand - v) >= best - 1e-10


# random_orthogonal and sphere sampling


def test_random_orthogonal_small_cases():
    rng = np.random.default_rng(5)
    assert abs(abs(random_orthogonal(1, 1, rng)[0, 0]) - 1) < 1e-15
    a = random_orthogonal(5, 2, np.random.default_rng(9))
    b = random_orthogonal(5, 2, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        random_orthogonal(2, 3, rng)


def test_random_orthogonal_entry_mean():
    rng = np.random.default_rng(6)
    draws = np.array([random_orthogonal(50, 5, rng)[0, 0] for _ in range(1000)])
    assert is_orthonormal(random_orthogonal(50, 5, rng))
    # E[x^2] = 1/50 for a uniform unit vector in R^50
    assert abs(draws.mean()) < 3 * np.sqrt(1 / 50) / np.sqrt(1000)


def test_unit_sphere_d1_balanced():
    rng = np.random.default_rng(7)
    draws = np.array([unit_sphere_sample(1, rng)[0] for _ in range(10_000)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    frac = np.mean(draws > 0)
    assert abs(frac - 0.5) < 3 * 0.5 / np.sqrt(10_000)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 40))
def test_unit_sphere_norm(seed, d):
    x = unit_sphere_sample(d, np.random.default_rng(seed))
    assert abs(np.linalg.norm(x) - 1) < 1e-12


def test_unit_sphere_mean_d3():
    rng = np.random.default_rng(8)
    g = np.array([unit_sphere_sample(3, rng) for _ in range(100_000)])
    bound = 3 * (1 / np.sqrt(3)) / np.sqrt(100_000)
    assert np.all(np.abs(g.mean(axis=0)) < bound)
