"""Shared fixtures and independent oracles for the test suite."""

import numpy as np
import pytest

from stiefel_landing.geometry import AmbientPoint, project_normal, project_tangent
from stiefel_landing.problems import haar_stiefel


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def spd_sqrt(M):
    """Symmetric square root via eigendecomposition (test-only oracle)."""
    w, v = np.linalg.eigh(M)
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def point_with_feasibility(rng, n, p, feas):
    """Random point whose Gram residual has Frobenius norm exactly ``feas``."""
    q = haar_stiefel(n, p, rng)
    if feas == 0.0:
        return AmbientPoint(q)
    s = rng.standard_normal((p, p))
    s = 0.5 * (s + s.T)
    s *= feas / np.linalg.norm(s)
    return AmbientPoint(q @ spd_sqrt(np.eye(p) + s))


def random_tangent(rng, point, scale=1.0):
    return scale * project_tangent(point, rng.standard_normal((point.n, point.p))).V


def random_normal(rng, point, scale=1.0):
    return scale * project_normal(point, rng.standard_normal((point.n, point.p))).V


def random_quadratic_problem(rng, n, p, samples=None):
    """Least-squares alignment objective used as a generic smooth test case."""
    from stiefel_landing.fields import Problem

    samples = samples or 3 * n
    A = rng.standard_normal((samples, n))
    B = rng.standard_normal((samples, p))

    def value(X):
        return float(0.5 / samples * np.linalg.norm(A @ X - B) ** 2)

    def grad(X):
        return A.T @ (A @ X - B) / samples

    def hvp(X, V):
        return A.T @ (A @ V) / samples

    return Problem(n, p, value, grad, hvp)


def fd_directional_value(prob, X, V, h=1e-5):
    """Central difference of the objective along V."""
    return (prob.value(X + h * V) - prob.value(X - h * V)) / (2.0 * h)


def fd_gradient_direction(prob, X, V, h=1e-5):
    """Central difference of the Euclidean gradient along V."""
    return (prob.euclid_grad(X + h * V) - prob.euclid_grad(X - h * V)) / (2.0 * h)


def decay_pairs(values, floor=1e-14):
    """(log v_k, log v_{k+1}) pairs with both entries above the floor."""
    return [
        (np.log(a), np.log(b))
        for a, b in zip(values[:-1], values[1:])
        if a > floor and b > floor
    ]


def slope_from_pairs(pairs):
    """Least-squares decay exponent; a single pair uses the exponent model
    v_{k+1} = v_k^s directly (unit constant)."""
    if not pairs:
        raise ValueError("no pairs above the floor")
    if len(pairs) == 1:
        x, y = pairs[0]
        return y / x
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    return float(np.polyfit(xs, ys, 1)[0])


def decay_slope(values, floor=1e-14):
    """Fitted slope of log v_{k+1} against log v_k over entries above floor."""
    return slope_from_pairs(decay_pairs(values, floor))


def loglog_slope(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = (xs > 0) & (ys > 0)
    return float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])


def euclid_tangent_basis(point):
    """Euclidean-orthonormal basis of the tangent space (columns, vectorized)."""
    n, p = point.n, point.p
    cols = []
    for i in range(n):
        for j in range(p):
            e = np.zeros((n, p))
            e[i, j] = 1.0
            cols.append(project_tangent(point, e).V.ravel())
    m = n * p - p * (p + 1) // 2
    u, s, _ = np.linalg.svd(np.array(cols).T)
    assert (s > 1e-10).sum() == m
    return u[:, :m]
