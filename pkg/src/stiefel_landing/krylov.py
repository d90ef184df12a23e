"""Matrix-free iterative solvers on the tangent space at a base point.

Two solvers are provided: a stabilized bi-conjugate gradient loop for the
non-symmetric cheap tangent system (Frobenius residuals), and a minimal
residual solver whose every inner product is taken in the base-point metric,
for the self-adjoint full-Hessian system.  Both start from the zero guess,
so the relative forcing rule keeps its meaning near a solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import (
    AmbientPoint,
    TangentVector,
    frob,
    metric_norm,
    metric_transform,
    project_tangent,
)

# Hard cap on inner iterations regardless of tangent-space dimension.
MAX_INNER_CAP = 500


@dataclass(frozen=True)
class TangentOperator:
    """Linear map on the tangent space at ``base``, applied to raw arrays."""

    base: AmbientPoint
    matvec: Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveReport:
    iterations: int
    residual_norm: float
    converged: bool
    breakdown: Optional[str] = None
    residuals: Optional[list] = None


def forcing_tolerance(b_norm: float, zeta_max: float, theta: float) -> float:
    """Adaptive inner tolerance min(zeta_max, ||b||^theta) * ||b||."""
    if not 0.0 < zeta_max < 1.0:
        raise ValueError(f"zeta_max must lie in (0, 1), got {zeta_max}")
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    if b_norm < 0.0:
        raise ValueError("b_norm must be nonnegative")
    if b_norm == 0.0:
        return 0.0
    return min(zeta_max, b_norm**theta) * b_norm


def default_max_iter(n: int, p: int) -> int:
    """Ten sweeps per tangent dimension, capped at MAX_INNER_CAP."""
    dim = n * p - p * (p + 1) // 2
    return min(max(10 * dim, 1), MAX_INNER_CAP)


def _as_array(b) -> np.ndarray:
    return b.V if isinstance(b, TangentVector) else np.asarray(b, dtype=float)


def _tangent_matvec(op: TangentOperator):
    """Apply the operator through the tangent projection of its input.

    In exact arithmetic every Krylov vector is tangent and the projection is
    the identity.  In floating point it pins the process to the subspace
    where the operator is well conditioned: the ambient extension of a
    tangent-space operator has a large near-kernel, and roundoff drift into
    it can otherwise be amplified into O(1) junk that a small residual does
    not detect.
    """
    base = op.base
    return lambda V: op.matvec(project_tangent(base, V).V)


def solve_nonsymmetric(
    op: TangentOperator,
    b,
    tol: float,
    max_iter: Optional[int] = None,
) -> tuple[TangentVector, SolveReport]:
    """BiCGSTAB for a (possibly non-symmetric) tangent-space system.

    Residuals are measured in the Frobenius norm.  On rho/omega breakdown the
    partial iterate is returned with ``converged=False`` and the reason set.
    The reported residual is recomputed from the final iterate, so
    ``converged=True`` certifies ||op(T) - b||_F <= tol.
    """
    base = op.base
    bv = _as_array(b)
    if max_iter is None:
        max_iter = default_max_iter(base.n, base.p)
    bnorm = frob(bv)
    history = [bnorm]
    if bnorm <= tol:
        return TangentVector(np.zeros_like(bv), base), SolveReport(
            0, bnorm, True, residuals=history
        )

    matvec = _tangent_matvec(op)
    x = np.zeros_like(bv)
    r = bv.copy()
    r_hat = bv.copy()
    rho_old = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros_like(bv)
    pvec = np.zeros_like(bv)
    breakdown = None
    iters = 0
    best_x = x
    best_res = bnorm
    best_iter = 0

    def dot(a, c):
        return float(np.tensordot(a, c, axes=2))

    for k in range(1, max_iter + 1):
        rho = dot(r_hat, r)
        if abs(rho) < 1e-30 * max(frob(r_hat) * frob(r), 1e-300):
            breakdown = "rho_breakdown"
            break
        beta = (rho / rho_old) * (alpha / omega)
        pvec = r + beta * (pvec - omega * v)
        v = matvec(pvec)
        denom = dot(r_hat, v)
        if abs(denom) < 1e-30 * max(frob(r_hat) * frob(v), 1e-300):
            breakdown = "alpha_breakdown"
            break
        alpha = rho / denom
        s = r - alpha * v
        iters = k
        if frob(s) <= tol:
            x = x + alpha * pvec
            history.append(frob(s))
            best_x, best_res, best_iter = x, frob(s), k
            break
        t = matvec(s)
        tt = dot(t, t)
        if tt < 1e-300:
            breakdown = "omega_breakdown"
            x = x + alpha * pvec
            history.append(frob(s))
            if frob(s) < best_res:
                best_x, best_res, best_iter = x, frob(s), k
            break
        omega = dot(t, s) / tt
        x = x + alpha * pvec + omega * s
        r = s - omega * t
        rnorm = frob(r)
        history.append(rnorm)
        rho_old = rho
        if rnorm < best_res:
            best_x, best_res, best_iter = x, rnorm, k
        if rnorm <= tol:
            break
        if abs(omega) < 1e-30:
            breakdown = "omega_breakdown"
            break
        # Past the attainable floor the recurrence wanders; keep the best
        # iterate and stop once no progress has been made for a long stretch
        # or the residual has clearly blown up.
        if rnorm > 1e3 * bnorm or k - best_iter > 50:
            breakdown = "stagnation"
            break

    x = project_tangent(base, best_x).V
    true_res = frob(matvec(x) - bv)
    converged = true_res <= tol
    if converged:
        breakdown = None
    elif breakdown is None and iters >= max_iter:
        breakdown = "max_iter"
    return TangentVector(x, base), SolveReport(
        iters, true_res, converged, breakdown, history
    )


def _g_arnoldi_solve(op: TangentOperator, bv: np.ndarray, bnorm: float, tol, max_iter):
    """Minimal-residual iteration in the base metric (Lanczos with full
    reorthogonalization; the projected least-squares problem is solved
    densely, which is exact MINRES for a self-adjoint operator)."""
    base = op.base
    matvec = _tangent_matvec(op)

    def mdot(vs, w):
        mw = metric_transform(base, w)
        coeffs = np.array([np.tensordot(v, mw, axes=2) for v in vs])
        return coeffs, float(np.tensordot(w, mw, axes=2))

    basis = [bv / bnorm]
    H = np.zeros((max_iter + 1, max_iter))
    history = [bnorm]
    y = np.zeros(0)
    iters = 0
    for k in range(max_iter):
        w = matvec(basis[k])
        for _pass in range(2):  # classical Gram-Schmidt with reorthogonalization
            coeffs, _ = mdot(basis, w)
            H[: k + 1, k] += coeffs
            for j, c in enumerate(coeffs):
                w = w - c * basis[j]
        _, wnorm2 = mdot([], w)
        hnext = np.sqrt(max(wnorm2, 0.0))
        H[k + 1, k] = hnext
        rhs = np.zeros(k + 2)
        rhs[0] = bnorm
        y, *_ = np.linalg.lstsq(H[: k + 2, : k + 1], rhs, rcond=None)
        resid = float(np.linalg.norm(H[: k + 2, : k + 1] @ y - rhs))
        history.append(resid)
        iters = k + 1
        if resid <= tol or hnext <= 1e-14 * bnorm:
            break
        basis.append(w / hnext)
    x = np.zeros_like(bv)
    for j, yj in enumerate(y):
        x = x + yj * basis[j]
    return project_tangent(base, x).V, iters, history


def solve_g_symmetric(
    op: TangentOperator,
    b,
    tol: float,
    max_iter: Optional[int] = None,
) -> tuple[TangentVector, SolveReport]:
    """Minimal residual solver for an operator self-adjoint in the base metric.

    All Krylov inner products and the reported residual use the metric at
    ``op.base``; the residual sequence is non-increasing.  If the recurrence
    and the recomputed true residual disagree by more than 1e-6 relative (a
    loss of orthogonality), the solve restarts once from the current iterate
    before reporting a breakdown.
    """
    base = op.base
    bv = _as_array(b)
    if max_iter is None:
        max_iter = default_max_iter(base.n, base.p)
    bnorm = metric_norm(base, bv)
    if bnorm <= tol:
        return TangentVector(np.zeros_like(bv), base), SolveReport(
            0, bnorm, True, residuals=[bnorm]
        )

    matvec = _tangent_matvec(op)
    x, iters, history = _g_arnoldi_solve(op, bv, bnorm, tol, max_iter)
    true_res = metric_norm(base, matvec(x) - bv)
    breakdown = None
    restarted = False
    if true_res > tol and abs(true_res - history[-1]) > 1e-6 * bnorm:
        # Orthogonality was lost; one restart on the residual equation.
        restarted = True
        r = bv - matvec(x)
        rnorm = metric_norm(base, r)
        if rnorm > 0.0:
            d, more, hist2 = _g_arnoldi_solve(op, r, rnorm, tol, max_iter)
            x = x + d
            iters += more
            history.extend(hist2[1:])
            true_res = metric_norm(base, matvec(x) - bv)
    converged = true_res <= tol
    if not converged:
        breakdown = "orthogonality_loss" if restarted else "max_iter"
    return TangentVector(x, base), SolveReport(
        iters, true_res, converged, breakdown, history
    )
