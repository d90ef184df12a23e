"""Geometric primitives of the layered manifolds around the Stiefel manifold.

An ambient iterate X (n x p, full column rank) determines the level set
{Z : Z^T Z = X^T X}.  This module provides the Gram residual E = X^T X - I,
the infeasibility measure and its gradient, tangent/normal projections, the
canonical-type metric, and safe-region tests.  All operations are pure
functions of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularBaseError

# Smallest admissible eigenvalue of X^T X before the base is declared singular.
GRAM_EIG_FLOOR = 1e-12


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def skew(a: np.ndarray) -> np.ndarray:
    """Skew-symmetric part (A - A^T) / 2."""
    return 0.5 * (a - a.T)


def frob(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


class AmbientPoint:
    """An n x p iterate with its cached Gram residual E = X^T X - I_p.

    The array is copied on construction and marked read-only, so the cached
    residual can never go stale.  The Cholesky factor of X^T X is computed
    lazily and raises :class:`SingularBaseError` when the smallest eigenvalue
    of the Gram matrix falls below ``GRAM_EIG_FLOOR``.
    """

    __slots__ = ("X", "n", "p", "E", "_cho", "_feas")

    def __init__(self, X):
        X = np.array(X, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError(f"expected a matrix, got ndim={X.ndim}")
        n, p = X.shape
        if n < p:
            raise ValueError(f"need n >= p, got shape ({n}, {p})")
        if not np.all(np.isfinite(X)):
            raise ValueError("point contains non-finite entries")
        X.setflags(write=False)
        self.X = X
        self.n = n
        self.p = p
        gram = X.T @ X
        E = 0.5 * (gram + gram.T) - np.eye(p)
        E.setflags(write=False)
        self.E = E
        self._cho = None
        self._feas = None

    @property
    def feas_norm(self) -> float:
        """Frobenius norm of the Gram residual, ||X^T X - I||_F."""
        if self._feas is None:
            self._feas = frob(self.E)
        return self._feas

    def gram_cholesky(self):
        if self._cho is None:
            gram = self.E + np.eye(self.p)
            if np.linalg.eigvalsh(gram)[0] < GRAM_EIG_FLOOR:
                raise SingularBaseError(
                    "Gram matrix X^T X is numerically singular at this point"
                )
            self._cho = cho_factor(gram, lower=True)
        return self._cho

    def gram_solve(self, B: np.ndarray) -> np.ndarray:
        """Apply (X^T X)^{-1} to B (p x m) via the cached Cholesky factor."""
        return cho_solve(self.gram_cholesky(), B)

    def __repr__(self):
        return f"AmbientPoint(n={self.n}, p={self.p}, feas={self.feas_norm:.3e})"


def as_point(X) -> AmbientPoint:
    return X if isinstance(X, AmbientPoint) else AmbientPoint(X)


@dataclass(frozen=True)
class TangentVector:
    """Ambient matrix tangent to the level set of base: V^T X + X^T V = 0."""

    V: np.ndarray
    base: AmbientPoint

    @property
    def norm(self) -> float:
        return frob(self.V)


@dataclass(frozen=True)
class NormalVector:
    """Ambient matrix normal (under the metric) to the level set of base."""

    V: np.ndarray
    base: AmbientPoint

    @property
    def norm(self) -> float:
        return frob(self.V)


@dataclass(frozen=True)
class SafeRegion:
    """Neighborhood ||X^T X - I||_F <= eps of the Stiefel manifold, eps in (0,1)."""

    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")


def gram_residual(point: AmbientPoint) -> np.ndarray:
    """E = X^T X - I_p (cached, symmetric)."""
    return point.E


def infeasibility(point: AmbientPoint) -> tuple[float, float]:
    """Return (||E||_F^2 / 4, ||E||_F); zero exactly on the Stiefel manifold."""
    feas = point.feas_norm
    return 0.25 * feas * feas, feas


def infeasibility_gradient(point: AmbientPoint) -> NormalVector:
    """Euclidean gradient X (X^T X - I) of the infeasibility measure."""
    return NormalVector(point.X @ point.E, point)


def project_tangent(point: AmbientPoint, ambient: np.ndarray) -> TangentVector:
    """Metric-orthogonal projection A - X (X^T X)^{-1} sym(X^T A)."""
    ambient = np.asarray(ambient, dtype=float)
    s = sym(point.X.T @ ambient)
    return TangentVector(ambient - point.X @ point.gram_solve(s), point)


def project_normal(point: AmbientPoint, ambient: np.ndarray) -> NormalVector:
    """Complementary projection A - project_tangent(A)."""
    ambient = np.asarray(ambient, dtype=float)
    s = sym(point.X.T @ ambient)
    return NormalVector(point.X @ point.gram_solve(s), point)


def metric_transform(point: AmbientPoint, eta: np.ndarray) -> np.ndarray:
    """(I - X(X^T X)^{-1}X^T / 2) eta (X^T X)^{-1}, the kernel of the metric."""
    eta = np.asarray(eta, dtype=float)
    z = point.gram_solve(eta.T).T  # eta (X^T X)^{-1}
    return z - 0.5 * point.X @ point.gram_solve(point.X.T @ z)


def metric_inner(point: AmbientPoint, xi: np.ndarray, eta: np.ndarray) -> float:
    """Inner product <xi, (I - X(X^T X)^{-1}X^T / 2) eta (X^T X)^{-1}>.

    Symmetric and positive definite on ambient matrices whenever the base
    Gram matrix is well conditioned.
    """
    xi = np.asarray(xi, dtype=float)
    return float(np.tensordot(xi, metric_transform(point, eta), axes=2))


def metric_norm(point: AmbientPoint, xi: np.ndarray) -> float:
    return float(np.sqrt(max(metric_inner(point, xi, xi), 0.0)))


def in_safe_region(point: AmbientPoint, region: SafeRegion) -> bool:
    """True iff ||X^T X - I||_F <= region.eps."""
    return point.feas_norm <= region.eps


def tangency_residual(point: AmbientPoint, V: np.ndarray) -> float:
    """||V^T X + X^T V||_F, zero for exact tangent vectors."""
    m = V.T @ point.X
    return frob(m + m.T)


def is_tangent(point: AmbientPoint, V: np.ndarray, tol: float = 1e-10) -> bool:
    """Tangency test scaled by ||V||_F ||X||_2."""
    nv = frob(V)
    if nv == 0.0:
        return True
    scale = nv * float(np.linalg.norm(point.X, 2))
    return tangency_residual(point, V) <= tol * scale


def is_normal(point: AmbientPoint, V: np.ndarray, tol: float = 1e-10) -> bool:
    """Normality test: the tangent projection of V vanishes relative to ||V||."""
    nv = frob(V)
    if nv == 0.0:
        return True
    return frob(project_tangent(point, V).V) <= tol * nv
