"""Outer loops: second-order landing steps, safeguard step sizes, traces.

The second-order update adds a tangent Newton-type component (from the cheap
non-symmetric system or the full self-adjoint one) to the order-1
orthogonalization update, tries the unit step, and falls back to the largest
provably safe step when the trial leaves the safe region.  A first-order
variant (gradient-plus-pull field with a fixed step) doubles as warm-start
engine and comparison baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NotInSafeRegionError
from .fields import (
    Problem,
    apply_hessian_approximation,
    apply_normal_correction,
    apply_riemannian_hessian,
    riemannian_gradient,
)
from .geometry import AmbientPoint, TangentVector, as_point, frob
from .krylov import (
    SolveReport,
    TangentOperator,
    forcing_tolerance,
    solve_g_symmetric,
    solve_nonsymmetric,
)
from .newton_schulz import ns_update


class Variant(str, Enum):
    SOL = "sol"
    SOL_SYM = "sol-sym"
    FIRST_ORDER = "first-order"


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max-iter"
    INNER_FAILURE = "inner-failure"


# Stopping rules: gradient norm plus feasibility (the reporting default), or
# gradient norm plus the norm of the order-1 normal update.
STOP_GRAD_FEAS = "grad-feas"
STOP_GRAD_NORMAL = "grad-normal"

# Safety factor on the attainable inner residual: the right-hand side is
# produced by cancellation of gradient-scale quantities, so no solver can
# push the residual below roughly this multiple of machine epsilon times
# that scale.  The forcing tolerance is floored accordingly.
INNER_NOISE_FACTOR = 100.0


@dataclass(frozen=True)
class SolverConfig:
    variant: Variant = Variant.SOL
    eps: float = 0.5
    lam: float = 0.5
    tol: float = 1e-12
    mxit: int = 200
    zeta_max: float = 0.1
    theta: float = 1.0
    first_order_step: float = 0.1
    max_inner: Optional[int] = None
    stopping: str = STOP_GRAD_FEAS
    record_iterates: bool = False

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.lam <= 0.0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.mxit < 0:
            raise ValueError(f"mxit must be nonnegative, got {self.mxit}")
        if self.first_order_step <= 0.0:
            raise ValueError(f"first_order_step must be positive, got {self.first_order_step}")
        if self.stopping not in (STOP_GRAD_FEAS, STOP_GRAD_NORMAL):
            raise ValueError(f"unknown stopping rule {self.stopping!r}")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True)
class IterTrace:
    iter: int
    f_value: float
    grad_norm: float
    feas: float
    step_size: float
    inner_iters: int
    inner_residual: float
    wall_time_s: float
    fallback: bool = False
    rhs_norm: float = 0.0
    inner_tol: float = 0.0


@dataclass
class SolveResult:
    X_final: AmbientPoint
    traces: list[IterTrace]
    status: Status
    iterates: Optional[list[AmbientPoint]] = field(default=None)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def safe_step_size(point: AmbientPoint, Lam: np.ndarray, eps: float) -> float:
    """Largest step in (0, 1] keeping X + eta * Lam inside the safe region.

    Valid for landing-structured directions (a tangent component plus the
    order-1 orthogonalization update); requires the current residual
    d = ||X^T X - I||_F to satisfy d <= eps.
    """
    d = point.feas_norm
    if d > eps:
        raise NotInSafeRegionError(
            f"step-size rule needs ||X^T X - I||_F <= eps, got {d:.3e} > {eps}"
        )
    g = frob(np.asarray(Lam, dtype=float))
    if g == 0.0:
        return 1.0
    half = 0.5 * d * (1.0 - d)
    disc = half * half + g * g * (eps - d)
    eta = (half + np.sqrt(max(disc, 0.0))) / (g * g)
    return float(min(eta, 1.0))


def stopping_metric(prob: Problem, point: AmbientPoint, grad=None) -> float:
    """||grad f(X)||_F + ||X^T X - I||_F, the reported optimality violation."""
    return riemannian_gradient(prob, point, grad=grad).norm + point.feas_norm


def alg_stopping_metric(prob: Problem, point: AmbientPoint, grad=None) -> float:
    """Gradient norm plus the norm of the order-1 normal update."""
    return riemannian_gradient(prob, point, grad=grad).norm + ns_update(point, 1).norm


def _metric(prob, point, grad, rule) -> float:
    if rule == STOP_GRAD_NORMAL:
        return alg_stopping_metric(prob, point, grad=grad)
    return stopping_metric(prob, point, grad=grad)


def _first_order_move(prob, point, cfg, grad):
    """One step of the baseline field; returns (new point, step size)."""
    t1 = riemannian_gradient(prob, point, grad=grad)
    lam_field = t1.V + cfg.lam * (point.X @ point.E)
    if frob(lam_field) == 0.0:
        return point, 0.0
    eta = min(cfg.first_order_step, safe_step_size(point, lam_field, cfg.eps))
    return AmbientPoint(point.X - eta * lam_field), eta


def inner_noise_floor(point: AmbientPoint, grad: np.ndarray) -> float:
    """Attainable absolute residual of the tangent systems in double precision."""
    scale = max(1.0, frob(grad)) * max(1.0, 1.0 + point.feas_norm)
    return INNER_NOISE_FACTOR * np.finfo(float).eps * scale


def _second_order_move(prob, point, cfg, grad):
    """Tangent solve plus normal update.

    Returns (new point, step, report, fallback, rhs norm, inner tolerance).
    """
    t1 = riemannian_gradient(prob, point, grad=grad)
    n1 = ns_update(point, 1)
    corr = apply_normal_correction(prob, point, n1, grad=grad)
    b = TangentVector(-t1.V - corr.V, point)
    bnorm = b.norm
    if bnorm == 0.0:
        tangent = np.zeros_like(point.X)
        report = SolveReport(0, 0.0, True)
        tol_f = 0.0
    else:
        # Forcing tolerance, floored at the roundoff level of the system data.
        tol_f = max(
            forcing_tolerance(bnorm, cfg.zeta_max, cfg.theta),
            inner_noise_floor(point, grad),
        )
        if cfg.variant is Variant.SOL:
            op = TangentOperator(
                point,
                lambda V: apply_hessian_approximation(prob, point, V, grad=grad).V,
            )
            sol, report = solve_nonsymmetric(op, b, tol_f, cfg.max_inner)
        else:
            op = TangentOperator(
                point,
                lambda V: apply_riemannian_hessian(prob, point, V, grad=grad).V,
            )
            # The solver converges in the metric norm; shrinking the target by
            # the norm-equivalence factor keeps the Frobenius forcing rule valid.
            tol_g = tol_f / np.sqrt(2.0 * (1.0 + cfg.eps))
            sol, report = solve_g_symmetric(op, b, tol_g, cfg.max_inner)
        tangent = sol.V

    if bnorm > 0.0 and not report.converged:
        # Inner failure: take a flagged baseline step so the run stays alive.
        new_point, eta = _first_order_move(prob, point, cfg, grad)
        return new_point, eta, report, True, bnorm, tol_f

    lam_dir = tangent + n1.V
    candidate = AmbientPoint(point.X + lam_dir)
    if candidate.feas_norm <= cfg.eps:
        return candidate, 1.0, report, False, bnorm, tol_f
    eta = safe_step_size(point, lam_dir, cfg.eps)
    return AmbientPoint(point.X + eta * lam_dir), eta, report, False, bnorm, tol_f


def sol_step(prob: Problem, point: AmbientPoint, cfg: SolverConfig, grad=None):
    """One second-order landing step; returns (new point, trace row).

    The trace row describes the new iterate; its ``iter`` field is 0 and its
    ``wall_time_s`` is the step duration (drivers renumber and accumulate).
    """
    point = as_point(point)
    if point.feas_norm > cfg.eps:
        raise NotInSafeRegionError(
            f"step requires an iterate in the safe region (feas {point.feas_norm:.3e} > {cfg.eps})"
        )
    started = time.perf_counter()
    g = prob.euclid_grad(point.X) if grad is None else grad
    new_point, eta, report, fallback, bnorm, tol_f = _second_order_move(prob, point, cfg, g)
    elapsed = time.perf_counter() - started
    trace = IterTrace(
        iter=0,
        f_value=float(prob.value(new_point.X)),
        grad_norm=riemannian_gradient(prob, new_point).norm,
        feas=new_point.feas_norm,
        step_size=eta,
        inner_iters=report.iterations,
        inner_residual=report.residual_norm,
        wall_time_s=elapsed,
        fallback=fallback,
        rhs_norm=bnorm,
        inner_tol=tol_f,
    )
    return new_point, trace


def _run(prob, X0, cfg, stop_fn):
    """Shared driver loop; ``stop_fn(metric_value, grad_norm)`` decides exit."""
    point = as_point(X0)
    if point.feas_norm > cfg.eps:
        raise NotInSafeRegionError(
            f"initial point outside the safe region (feas {point.feas_norm:.3e} > {cfg.eps});"
            " orthogonalize or warm-start first"
        )
    started = time.perf_counter()
    grad = prob.euclid_grad(point.X)
    grad_norm = riemannian_gradient(prob, point, grad=grad).norm
    traces = [
        IterTrace(0, float(prob.value(point.X)), grad_norm, point.feas_norm, 0.0, 0, 0.0, 0.0)
    ]
    iterates = [point] if cfg.record_iterates else None
    saw_inner_failure = False
    status = Status.MAX_ITER

    for k in range(cfg.mxit + 1):
        metric = _metric(prob, point, grad, cfg.stopping)
        if stop_fn(metric, grad_norm):
            status = Status.CONVERGED
            break
        if k == cfg.mxit:
            status = Status.INNER_FAILURE if saw_inner_failure else Status.MAX_ITER
            break
        if cfg.variant is Variant.FIRST_ORDER:
            new_point, eta = _first_order_move(prob, point, cfg, grad)
            report, fallback, bnorm, tol_f = SolveReport(0, 0.0, True), False, 0.0, 0.0
        else:
            new_point, eta, report, fallback, bnorm, tol_f = _second_order_move(
                prob, point, cfg, grad
            )
            saw_inner_failure = saw_inner_failure or fallback
        grad = prob.euclid_grad(new_point.X)
        grad_norm = riemannian_gradient(prob, new_point, grad=grad).norm
        traces.append(
            IterTrace(
                iter=k + 1,
                f_value=float(prob.value(new_point.X)),
                grad_norm=grad_norm,
                feas=new_point.feas_norm,
                step_size=eta,
                inner_iters=report.iterations,
                inner_residual=report.residual_norm,
                wall_time_s=time.perf_counter() - started,
                fallback=fallback,
                rhs_norm=bnorm,
                inner_tol=tol_f,
            )
        )
        point = new_point
        if iterates is not None:
            iterates.append(point)

    return SolveResult(point, traces, status, iterates)


def solve(prob: Problem, X0, cfg: SolverConfig) -> SolveResult:
    """Iterate the configured variant until the stopping metric reaches tol."""
    return _run(prob, X0, cfg, lambda metric, _gn: metric <= cfg.tol)


def first_order_landing_solve(
    prob: Problem, X0, cfg: SolverConfig, target_grad_norm: float
) -> SolveResult:
    """Run the first-order baseline until ||grad f||_F <= target_grad_norm.

    Used to reach the local regime before switching to the second-order
    variants; returns the best iterate with MAX_ITER status when the budget
    runs out first.
    """
    fo_cfg = replace(cfg, variant=Variant.FIRST_ORDER)
    return _run(prob, X0, fo_cfg, lambda _metric, gn: gn <= target_grad_norm)
