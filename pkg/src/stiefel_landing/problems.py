"""Benchmark objectives and synthetic instance generators.

Three objective families, each exposed as a :class:`~stiefel_landing.fields.Problem`
(value, Euclidean gradient, Hessian-vector product):

* orthogonal alignment of two point sets (least squares over square
  orthogonal matrices),
* dominant-subspace extraction from a sample covariance,
* blind source separation with the log-cosh contrast on whitened data.

Generators are deterministic per seed and return plain data containers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficiencyError
from .fields import Problem

# Beyond this many features the covariance is applied through the data matrix
# instead of being formed explicitly.
DENSE_COV_LIMIT = 2000

# log cosh argument clamp; cosh overflows double precision near 710.
TANH_CLAMP = 30.0


@dataclass(frozen=True)
class ProcrustesData:
    """Point sets A, B (N x d each); the unknown is a square orthogonal d x d map."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.A.ndim != 2 or self.A.shape != self.B.shape:
            raise ValueError(f"A and B must share shape, got {self.A.shape} vs {self.B.shape}")
        if self.A.shape[0] < self.A.shape[1]:
            raise ValueError("need at least as many samples as columns")

    @property
    def samples(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class PcaData:
    """Data matrix A (N x n); the unknown is an n x p orthonormal frame."""

    A: np.ndarray
    p: int

    def __post_init__(self):
        if self.A.ndim != 2:
            raise ValueError("A must be a matrix")
        if not 1 <= self.p <= self.A.shape[1]:
            raise ValueError(f"p must lie in [1, {self.A.shape[1]}], got {self.p}")
        if self.A.shape[0] < self.p:
            raise ValueError("need at least p samples")


@dataclass(frozen=True)
class IcaData:
    """Whitened samples W (N x d): zero column means, W^T W / N = I."""

    W: np.ndarray

    def __post_init__(self):
        if self.W.ndim != 2 or self.W.shape[0] < self.W.shape[1]:
            raise ValueError("W must be N x d with N >= d")
        N = self.W.shape[0]
        mean = np.abs(self.W.mean(axis=0)).max()
        if mean > 1e-10:
            raise ValueError(f"columns must be centered, max |mean| = {mean:.3e}")
        cov_err = np.linalg.norm(self.W.T @ self.W / N - np.eye(self.W.shape[1]))
        if cov_err > 1e-8:
            raise ValueError(f"sample covariance must be identity, error {cov_err:.3e}")


def procrustes_problem(data: ProcrustesData) -> Problem:
    """(1/2N) ||A X - B||_F^2 with its gradient and constant Hessian."""
    A, B = data.A, data.B
    N = data.samples
    gram = A.T @ A

    def value(X):
        return float(0.5 / N * np.linalg.norm(A @ X - B) ** 2)

    def grad(X):
        return A.T @ (A @ X - B) / N

    def hvp(X, V):
        return gram @ V / N

    return Problem(data.dim, data.dim, value, grad, hvp)


def pca_problem(data: PcaData) -> Problem:
    """-(1/N) tr(X^T A^T A X); covariance cached when the feature count is small."""
    A = data.A
    N, n = A.shape
    if n <= DENSE_COV_LIMIT:
        C = A.T @ A

        def cov_apply(M):
            return C @ M

    else:

        def cov_apply(M):
            return A.T @ (A @ M)

    def value(X):
        return float(-np.tensordot(X, cov_apply(X), axes=2) / N)

    def grad(X):
        return -2.0 / N * cov_apply(X)

    def hvp(X, V):
        return -2.0 / N * cov_apply(V)

    return Problem(n, data.p, value, grad, hvp)


def _log_cosh(y):
    # |y| + log((1 + exp(-2|y|)) / 2): exact and overflow-free.
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _tanh(y):
    return np.tanh(np.clip(y, -TANH_CLAMP, TANH_CLAMP))


def ica_problem(data: IcaData) -> Problem:
    """-(1/N) sum log cosh((W X)_ij) on whitened data."""
    W = data.W
    N, d = W.shape

    def value(X):
        return float(-_log_cosh(W @ X).sum() / N)

    def grad(X):
        return -W.T @ _tanh(W @ X) / N

    def hvp(X, V):
        t = _tanh(W @ X)
        return -W.T @ ((1.0 - t * t) * (W @ V)) / N

    return Problem(d, d, value, grad, hvp)


def haar_stiefel(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the set of n x p orthonormal frames.

    QR of a Gaussian matrix with the R diagonal signs folded into Q, which
    makes the factorization unique and the law rotation invariant.
    """
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    q, r = np.linalg.qr(rng.standard_normal((n, p)))
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return q * signs


def synth_procrustes(n: int, d: int, sigma: float, seed: int):
    """Gaussian A (n x d), orthogonal ground truth, B = A X_true + sigma * noise."""
    if n < d:
        raise ValueError(f"need n >= d, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    x_true = haar_stiefel(d, d, rng)
    B = A @ x_true + sigma * rng.standard_normal((n, d))
    return ProcrustesData(A, B), x_true


def synth_pca(N: int, n: int, p: int, sigma: float, seed: int) -> PcaData:
    """Rows drawn from a normal law with covariance U U^T + sigma I,
    U a uniform n x p orthonormal frame."""
    if N < p:
        raise ValueError(f"need N >= p, got N={N}, p={p}")
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    rng = np.random.default_rng(seed)
    U = haar_stiefel(n, p, rng)
    A = rng.standard_normal((N, p)) @ U.T + np.sqrt(sigma) * rng.standard_normal((N, n))
    return PcaData(A, p)


def whiten(raw: np.ndarray, keep: int) -> IcaData:
    """Center columns and rescale through the truncated SVD so the kept
    directions have identity sample covariance."""
    raw = np.asarray(raw, dtype=float)
    N = raw.shape[0]
    if N < keep or keep < 1:
        raise ValueError(f"need 1 <= keep <= N, got keep={keep}, N={N}")
    centered = raw - raw.mean(axis=0)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    if keep > s.size or s[keep - 1] <= max(raw.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficiencyError(
            f"centered data has rank below keep={keep} (singular values {s[:keep]})"
        )
    return IcaData(np.sqrt(N) * u[:, :keep])


def synth_ica(N: int, d: int, seed: int) -> IcaData:
    """Unit-variance Laplacian sources mixed by a random invertible map,
    then whitened; a heavy-tailed stand-in instance for source separation."""
    if N < d:
        raise ValueError(f"need N >= d, got N={N}, d={d}")
    rng = np.random.default_rng(seed)
    sources = rng.laplace(scale=1.0 / np.sqrt(2.0), size=(N, d))
    mixing = rng.standard_normal((d, d)) + 0.1 * np.eye(d)
    return whiten(sources @ mixing.T, d)


def instance_digest(*arrays: np.ndarray) -> str:
    """Short stable hash of instance data, for reproducibility records."""
    import hashlib

    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=float)
        h.update(np.asarray(a.shape, dtype=np.int64).tobytes())
        h.update(a.tobytes())
    return h.hexdigest()[:16]
