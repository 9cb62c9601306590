import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dykstra_oracle, sampling_projection

from lowrank_pricing.geometry import (
    FeasibleSet,
    InfeasibleError,
    find_price,
    projection_step,
    radial_project,
    sample_ball,
)
from lowrank_pricing.linalg import random_orthogonal


def random_instance(rng, n, d, r, ref_scale, x_scale):
    u = random_orthogonal(n, d, rng)
    p_ref = rng.standard_normal(n)
    p_ref *= ref_scale * r / np.linalg.norm(p_ref)
    x = rng.standard_normal(d)
    x *= x_scale * r / np.linalg.norm(x)
    return u, x, p_ref


def test_feasible_set_validation():
    with pytest.raises(ValueError):
        FeasibleSet(0.5, 3)
    with pytest.raises(ValueError):
        FeasibleSet(2.0, 0)
    s = FeasibleSet(1.0, 2)
    assert s.contains([0.6, 0.8]) and not s.contains([0.6, 0.81])


def test_radial_project_examples():
    np.testing.assert_array_equal(radial_project(np.zeros(2), 5), np.zeros(2))
    np.testing.assert_array_equal(radial_project([3.0, 4.0], 10), [3.0, 4.0])
    np.testing.assert_allclose(radial_project([3.0, 4.0], 1), [0.6, 0.8])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10), radius=st.floats(0.1, 100.0), scale=st.floats(0.0, 300.0))
def test_radial_project_norm_bound(seed, n, radius, scale):
    x = np.random.default_rng(seed).standard_normal(n) * scale
    assert np.linalg.norm(radial_project(x, radius)) <= radius + 1e-12


# find_price


def test_find_price_origin():
    u = random_orthogonal(4, 2, np.random.default_rng(0))
    np.testing.assert_array_equal(find_price(np.zeros(2), u, FeasibleSet(5, 4), np.zeros(4)), np.zeros(4))


def test_find_price_zero_reference_is_min_norm_preimage():
    rng = np.random.default_rng(1)
    s = FeasibleSet(20.0, 6)
    for _ in range(100):
        u = random_orthogonal(6, 3, rng)
        x = sample_ball(3, 20.0, rng)
        np.testing.assert_allclose(find_price(x, u, s, np.zeros(6)), u @ x, atol=1e-12)


def test_find_price_matches_oracle_example():
    rng = np.random.default_rng(2)
    r = 10.0
    u, x, p_ref = random_instance(rng, 4, 2, r, 0.5, 0.9)
    p = find_price(x, u, FeasibleSet(r, 4), p_ref)
    np.testing.assert_allclose(p, dykstra_oracle(x, u, r, p_ref), atol=1e-5)


def test_find_price_infeasible():
    u = random_orthogonal(3, 2, np.random.default_rng(3))
    s = FeasibleSet(1.0, 3)
    with pytest.raises(InfeasibleError):
        find_price(np.array([1.0 + 1e-6, 0.0]), u, s, np.zeros(3))
    # within tolerance: clamped, still feasible
    p = find_price(np.array([1.0 + 1e-10, 0.0]), u, s, np.ones(3))
    assert np.linalg.norm(p) <= 1.0 + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_find_price_invariants(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, n + 1))
        r = float(rng.uniform(1, 30))
        u, x, p_ref = random_instance(rng, n, d, r, rng.uniform(0, 3), rng.uniform(0, 1))
        s = FeasibleSet(r, n)
        p = find_price(x, u, s, p_ref)
        assert np.linalg.norm(u.T @ p - x) < 1e-9
        assert np.linalg.norm(p) <= r + 1e-9
        np.testing.assert_allclose(find_price(x, u, s, np.zeros(n)), u @ x, atol=1e-12)


# projection_step


def test_projection_step_examples():
    u = random_orthogonal(5, 3, np.random.default_rng(4))
    s = FeasibleSet(10.0, 5)
    alpha = 0.2
    inner = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(projection_step(inner, alpha, u, s), inner)
    out = projection_step(np.array([16.0, 0.0, 0.0]), alpha, u, s)
    np.testing.assert_allclose(out, [8.0, 0.0, 0.0])


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_projection_step_alpha_domain(alpha):
    u = np.eye(2)
    with pytest.raises(ValueError):
        projection_step(np.ones(2), alpha, u, FeasibleSet(2.0, 2))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.001, 0.999), scale=st.floats(0.0, 5.0))
def test_projection_step_idempotent_and_confined(seed, alpha, scale):
    rng = np.random.default_rng(seed)
    u = random_orthogonal(6, 3, rng)
    s = FeasibleSet(7.0, 6)
    x = rng.standard_normal(3) * scale * s.radius
    once = projection_step(x, alpha, u, s)
    assert np.linalg.norm(once) <= (1 - alpha) * s.radius + 1e-12
    np.testing.assert_allclose(projection_step(once, alpha, u, s), once, atol=1e-12)


def test_projection_step_matches_sampling_oracle():
    rng = np.random.default_rng(0)
    r, alpha = 4.0, 0.3
    s = FeasibleSet(r, 2)
    u = random_orthogonal(2, 2, rng)
    x = rng.standard_normal(2)
    x *= 1.5 * (1 - alpha) * r / np.linalg.norm(x)
    best = sampling_projection(x, alpha, u, r)
    got = projection_step(x, alpha, u, s)
    cos = best @ got / (np.linalg.norm(best) * np.linalg.norm(got))
    assert np.arccos(min(cos, 1.0)) < 1e-2
    assert abs(np.linalg.norm(best) - np.linalg.norm(got)) / np.linalg.norm(got) < 1e-3


def test_projection_step_optimality_conditions():
    # the projection of an outside point onto a ball is the unique feasible
    # point y with x - y a nonnegative multiple of y
    rng = np.random.default_rng(7)
    s = FeasibleSet(6.0, 8)
    for _ in range(200):
        u = random_orthogonal(8, 3, rng)
        alpha = rng.uniform(0.01, 0.99)
        x = rng.standard_normal(3) * rng.uniform(0, 20)
        y = projection_step(x, alpha, u, s)
        rad = (1 - alpha) * s.radius
        if np.linalg.norm(x) <= rad:
            np.testing.assert_array_equal(y, x)
        else:
            assert abs(np.linalg.norm(y) - rad) < 1e-12
            resid = x - y
            assert resid @ y > 0
            np.testing.assert_allclose(np.cross(np.append(resid, 0)[:3], np.append(y, 0)[:3]), 0, atol=1e-9)


# image of the ball under u.T


@pytest.mark.parametrize("seed", range(5))
def test_ball_image_both_directions(seed):
    rng = np.random.default_rng(seed)
    n, d, r = 12, 4, 20.0
    u = random_orthogonal(n, d, rng)
    s = FeasibleSet(r, n)
    for _ in range(500):
        p = sample_ball(n, r, rng)
        assert np.linalg.norm(u.T @ p) <= r + 1e-9
        x = sample_ball(d, r, rng)
        assert s.contains(u @ x)
    # boundary points of the d-ball lift to boundary points
    x = rng.standard_normal(d)
    x *= r / np.linalg.norm(x)
    assert abs(np.linalg.norm(u @ x) - r) < 1e-9


def test_sample_ball_mean_norm():
    rng = np.random.default_rng(6)
    n, r = 7, 3.0
    norms = np.array([np.linalg.norm(sample_ball(n, r, rng)) for _ in range(100_000)])
    assert norms.max() <= r
    assert abs(norms.mean() - r * n / (n + 1)) / (r * n / (n + 1)) < 0.01
