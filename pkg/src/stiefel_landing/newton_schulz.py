"""Multiplication-only orthogonalization updates with high-order contraction.

The order-r update X (q_r(E) - I) with E = X^T X - I moves along the normal
space of the current level set and contracts the Gram residual at rate r + 1:
||E_{k+1}||_F <= ||E_k||_F^{r+1} inside the safe region.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, ceil, log

import numpy as np

from .errors import MaxIterationsError, NotInSafeRegionError
from .geometry import AmbientPoint, NormalVector, frob

# Orders above this make the polynomial coefficients large enough to amplify
# roundoff in double precision; callers get a hard error instead of drift.
MAX_ORDER = 8

# Feasibility values below this are indistinguishable from roundoff; decay
# fits and stopping tests must not trust anything smaller.
ROUNDOFF_FLOOR = 1e-14


@dataclass(frozen=True)
class NsOrder:
    """Polynomial order r of the orthogonalization update, 1 <= r <= 8."""

    r: int

    def __post_init__(self):
        if not isinstance(self.r, int) or not 1 <= self.r <= MAX_ORDER:
            raise ValueError(f"order must be an integer in [1, {MAX_ORDER}], got {self.r}")


def _order(r) -> int:
    return r.r if isinstance(r, NsOrder) else NsOrder(int(r)).r


def ns_coefficients(r) -> np.ndarray:
    """Coefficients c_j = (-1)^j binom(2j, j) / 4^j of the truncated series
    for (I + S)^{-1/2}, computed as exact rationals and cast once to float."""
    r = _order(r)
    return np.array(
        [float(Fraction((-1) ** j * comb(2 * j, j), 4**j)) for j in range(r + 1)]
    )


def ns_polynomial(S: np.ndarray, r) -> np.ndarray:
    """Evaluate q_r(S) for symmetric S by Horner recursion in matrix powers."""
    S = np.asarray(S, dtype=float)
    c = ns_coefficients(r)
    p = S.shape[0]
    eye = np.eye(p)
    acc = c[-1] * eye
    for j in range(len(c) - 2, -1, -1):
        acc = c[j] * eye + S @ acc
    return 0.5 * (acc + acc.T)


def ns_update(point: AmbientPoint, r) -> NormalVector:
    """Additive update X (q_r(E) - I); lies in the normal space at X."""
    q = ns_polynomial(point.E, r)
    return NormalVector(point.X @ (q - np.eye(point.p)), point)


def ns_orthogonalize(
    point: AmbientPoint,
    r,
    tol: float = 1e-12,
    max_iter: int = 60,
) -> AmbientPoint:
    """Iterate X <- X q_r(E) until ||E||_F <= max(tol, roundoff floor).

    The starting point must satisfy ||E||_F < 1; each sweep raises the
    contraction exponent by a factor r + 1, so the iteration count is at most
    ceil(log_{r+1}(log tol / log ||E_0||)) + 1 away from the floor.
    """
    r = _order(r)
    if point.feas_norm >= 1.0:
        raise NotInSafeRegionError(
            f"orthogonalization needs ||X^T X - I||_F < 1, got {point.feas_norm:.3e}"
        )
    target = max(tol, ROUNDOFF_FLOOR)
    current = point
    for _ in range(max_iter):
        if current.feas_norm <= target:
            return current
        q = ns_polynomial(current.E, r)
        current = AmbientPoint(current.X @ q)
    if current.feas_norm <= target:
        return current
    raise MaxIterationsError(
        f"feasibility {current.feas_norm:.3e} above tolerance {target:.3e} "
        f"after {max_iter} sweeps"
    )


def sweeps_needed(e0: float, tol: float, r) -> int:
    """Upper bound on orthogonalization sweeps from ||E_0||_F = e0 to tol."""
    r = _order(r)
    if e0 <= max(tol, ROUNDOFF_FLOOR):
        return 0
    if e0 >= 1.0:
        raise NotInSafeRegionError("contraction bound requires e0 < 1")
    # Tiny slack keeps exact powers (log2 of 8, say) from rounding up twice.
    return ceil(log(log(tol) / log(e0), r + 1) - 1e-12) + 1
