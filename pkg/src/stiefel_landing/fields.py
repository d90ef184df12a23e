"""First- and second-order landing fields and the operators built from them.

Everything here consumes an objective only through its value, Euclidean
gradient, and Hessian-vector product, and never forms an n x n matrix: all
intermediates are n x p or p x p, so the operators stay matrix-free in n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractViolationError
from .geometry import (
    AmbientPoint,
    NormalVector,
    TangentVector,
    frob,
    is_normal,
    is_tangent,
    project_normal,
    project_tangent,
    sym,
)
from .newton_schulz import ns_update

# Tangency / normality slack accepted on operator inputs when validation is on.
CONTRACT_TOL = 1e-8


@dataclass(frozen=True)
class Problem:
    """Objective bundle: dimensions plus value / gradient / Hessian-product.

    ``hvp(X, V)`` must be linear in V and symmetric as a bilinear form,
    i.e. <U, hvp(X, V)> = <V, hvp(X, U)>.
    """

    n: int
    p: int
    value: Callable[[np.ndarray], float]
    euclid_grad: Callable[[np.ndarray], np.ndarray]
    hvp: Callable[[np.ndarray, np.ndarray], np.ndarray]


def with_call_counts(prob: Problem):
    """Wrap a problem so value/grad/hvp invocations are tallied.

    Returns (wrapped problem, counts dict); the dict is updated in place.
    """
    counts = {"value": 0, "grad": 0, "hvp": 0}

    def value(X):
        counts["value"] += 1
        return prob.value(X)

    def grad(X):
        counts["grad"] += 1
        return prob.euclid_grad(X)

    def hvp(X, V):
        counts["hvp"] += 1
        return prob.hvp(X, V)

    return Problem(prob.n, prob.p, value, grad, hvp), counts


@dataclass(frozen=True)
class LandingParams:
    """Weight of the normal pull in the first-order field, plus the region radius."""

    lam: float = 0.5
    eps: float = 0.5

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")


def _grad_of(prob: Problem, point: AmbientPoint, grad):
    return prob.euclid_grad(point.X) if grad is None else grad


def riemannian_gradient(prob: Problem, point: AmbientPoint, grad=None) -> TangentVector:
    """2 skew(grad_f X^T) X, the gradient of f on the level set of X."""
    g = _grad_of(prob, point, grad)
    X = point.X
    return TangentVector(g @ (X.T @ X) - X @ (g.T @ X), point)


def first_order_landing_field(
    prob: Problem, point: AmbientPoint, params: LandingParams, grad=None
) -> np.ndarray:
    """Descent-plus-feasibility field: gradient + lambda * X(X^T X - I).

    Vanishes exactly at the feasible first-order stationary points; the two
    components are orthogonal under the Euclidean inner product.
    """
    t1 = riemannian_gradient(prob, point, grad=grad)
    return t1.V + params.lam * (point.X @ point.E)


def _curvature_term(prob: Problem, point: AmbientPoint, g: np.ndarray, V: np.ndarray):
    """2 skew(hvp(X,V) X^T + grad_f V^T) X without forming n x n factors."""
    X = point.X
    h = prob.hvp(X, V)
    return h @ (X.T @ X) + g @ (V.T @ X) - X @ (h.T @ X) - V @ (g.T @ X)


def _omega_times(point: AmbientPoint, g: np.ndarray, V: np.ndarray):
    """2 skew(grad_f X^T) V, again with p x p intermediates only."""
    X = point.X
    return g @ (X.T @ V) - X @ (g.T @ V)


def omega_norm(prob: Problem, point: AmbientPoint, grad=None) -> float:
    """||skew(grad_f X^T)||_F, a diagnostic for distance to stationarity."""
    g = _grad_of(prob, point, grad)
    X = point.X
    m = X.T @ g
    val = 0.5 * (np.tensordot(X.T @ X, g.T @ g, axes=2) - np.trace(m @ m))
    return float(np.sqrt(max(val, 0.0)))


def apply_hessian_approximation(
    prob: Problem,
    point: AmbientPoint,
    V: TangentVector,
    grad=None,
    validate: bool = False,
) -> TangentVector:
    """Projection-free Hessian surrogate on tangent vectors.

    Applies 2 skew(hvp(X,V) X^T + grad_f V^T) X, which already lands in the
    tangent space, so no projection or Gram inversion is needed.  Used as the
    operator of the cheap (non-symmetric) tangent system.
    """
    v = V.V if isinstance(V, TangentVector) else np.asarray(V, dtype=float)
    if validate and not is_tangent(point, v, CONTRACT_TOL):
        raise ContractViolationError("operator input is not tangent at the base point")
    g = _grad_of(prob, point, grad)
    return TangentVector(_curvature_term(prob, point, g, v), point)


def apply_normal_correction(
    prob: Problem,
    point: AmbientPoint,
    V: NormalVector,
    grad=None,
    validate: bool = False,
) -> TangentVector:
    """Tangent-space correction induced by a normal displacement.

    Same formula as :func:`apply_hessian_approximation` but restricted to
    normal inputs; it captures the first-order perturbation of the gradient
    field caused by the feasibility step.
    """
    v = V.V if isinstance(V, NormalVector) else np.asarray(V, dtype=float)
    if validate and not is_normal(point, v, CONTRACT_TOL):
        raise ContractViolationError("operator input is not normal at the base point")
    g = _grad_of(prob, point, grad)
    return TangentVector(_curvature_term(prob, point, g, v), point)


def apply_riemannian_hessian(
    prob: Problem,
    point: AmbientPoint,
    V: TangentVector,
    grad=None,
    validate: bool = False,
) -> TangentVector:
    """Full Hessian of f on the level set, self-adjoint for the metric.

    Adds to the projection-free surrogate the gradient cross term and the
    metric connection term, then projects back to the tangent space.
    """
    v = V.V if isinstance(V, TangentVector) else np.asarray(V, dtype=float)
    if validate and not is_tangent(point, v, CONTRACT_TOL):
        raise ContractViolationError("Hessian input is not tangent at the base point")
    g = _grad_of(prob, point, grad)
    X = point.X
    core = _curvature_term(prob, point, g, v)
    big_g = riemannian_gradient(prob, point, grad=g).V
    # Connection term: (1/2)(V Q X^T G + G Q X^T V) + (1/4) X Q (V^T G + G^T V),
    # with Q = (X^T X)^{-1} applied through the cached Cholesky factor.
    m1 = point.gram_solve(X.T @ big_g)
    m2 = point.gram_solve(X.T @ v)
    m3 = point.gram_solve(v.T @ big_g + big_g.T @ v)
    xi = 0.5 * (v @ m1 + big_g @ m2) + 0.25 * (X @ m3)
    rest = _omega_times(point, g, v) - xi - X @ point.gram_solve(X.T @ xi)
    return TangentVector(core + project_tangent(point, rest).V, point)


def newton_rhs(prob: Problem, point: AmbientPoint, grad=None) -> TangentVector:
    """Right-hand side -grad - correction(normal update) of the tangent systems."""
    g = _grad_of(prob, point, grad)
    t1 = riemannian_gradient(prob, point, grad=g)
    n1 = ns_update(point, 1)
    corr = apply_normal_correction(prob, point, n1, grad=g)
    return TangentVector(-t1.V - corr.V, point)


def apply_landing_jacobian(
    prob: Problem,
    point: AmbientPoint,
    V: np.ndarray,
    lam: float,
    grad=None,
) -> np.ndarray:
    """Exact derivative of the first-order landing field along an ambient V."""
    v = np.asarray(V, dtype=float)
    g = _grad_of(prob, point, grad)
    X = point.X
    return (
        _curvature_term(prob, point, g, v)
        + _omega_times(point, g, v)
        + lam * (v @ point.E)
        + 2.0 * lam * (X @ sym(X.T @ v))
    )


def apply_approx_jacobian(
    prob: Problem,
    point: AmbientPoint,
    V: np.ndarray,
    lam: float,
    grad=None,
) -> np.ndarray:
    """Block upper-triangular surrogate of the landing-field Jacobian.

    Tangent inputs see the projection-free Hessian surrogate, normal inputs
    are scaled by 2 lambda; the surrogate coincides with the exact Jacobian
    at feasible stationary points.
    """
    v = np.asarray(V, dtype=float)
    g = _grad_of(prob, point, grad)
    vn = project_normal(point, v).V
    return _curvature_term(prob, point, g, v) + 2.0 * lam * vn
