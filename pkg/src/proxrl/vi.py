"""Variational inequalities VI(F, K): find x in K with <F(x), v - x> >= 0 on K.

Solvers return a :class:`VIResult`; hitting the iteration cap is reported
through ``converged=False`` (or raised with ``raise_on_failure=True``),
since it is the expected outcome for fields that are merely monotone.
"""

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence, SingularBasis, StepSizeOutOfRange, StepSizeWarning
from .geometry import FeasibleSet
from .png import project_weighted


def estimate_lipschitz(M, iters=500, seed=0, tol=1e-12):
    """Spectral norm of ``M`` by power iteration on ``M'M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    v = np.random.default_rng(seed).standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        u = M.T @ (M @ v)
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            return 0.0
        v = u / nrm
        new = np.sqrt(nrm)
        if abs(new - sigma) <= tol * new:
            return float(new)
        sigma = new
    return float(sigma)


@dataclass(frozen=True, eq=False)
class VIProblem:
    F: Callable[[np.ndarray], np.ndarray]
    K: FeasibleSet
    L: float
    mu_mono: float = 0.0
    M: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"Lipschitz constant must be positive, got {self.L}")
        if self.mu_mono < 0:
            raise ValueError("strong-monotonicity modulus must be nonnegative")

    @classmethod
    def affine(cls, M, q, K, L=None):
        """``F(x) = M x + q``; ``L`` defaults to a power-iteration estimate of ``||M||``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        q = np.asarray(q, dtype=float)
        L = estimate_lipschitz(M) if L is None else L
        mu = max(float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]), 0.0)
        return cls(lambda x: M @ x + q, K, L, mu, M, q)

    @classmethod
    def from_field(cls, F, K, L, mu_mono=0.0):
        return cls(F, K, L, mu_mono)

    def residual(self, x, step=1.0):
        """Natural residual ``||x - P_K(x - step F(x))||``; zero exactly at solutions."""
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.K.project(x - step * self.F(x))))


def rotation_problem():
    """Monotone but not strongly monotone: ``F(x) = (x2, -x1)`` on the unit box."""
    M = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return VIProblem.affine(M, np.zeros(2), FeasibleSet.box([-1.0, -1.0], [1.0, 1.0]), L=1.0)


@dataclass(frozen=True)
class VIResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float


def _finish(x, converged, k, res, name, raise_on_failure):
    if not converged and raise_on_failure:
        raise NonConvergence(f"{name} hit max_iter={k}", x=x, iterations=k)
    return VIResult(x, converged, k, res)


def basic_projection_solve(vi, alpha_or_D, x0, tol=1e-10, max_iter=10_000, callback=None,
                           raise_on_failure=False):
    """Iterate ``x <- P_{K,D}(x - D^{-1} F(x))`` until ``||x_{k+1} - x_k|| < tol``.

    ``alpha_or_D`` is a scalar ``alpha`` (``D = alpha I``) or an SPD matrix ``D``,
    in which case the projection is taken in the ``D`` metric.
    """
    x = np.asarray(x0, dtype=float).copy()
    if np.ndim(alpha_or_D) == 0:
        a = float(alpha_or_D)
        if a <= 0:
            raise StepSizeOutOfRange("alpha must be positive")
        step = lambda x: vi.K.project(x - vi.F(x) / a)
    else:
        D = np.asarray(alpha_or_D, dtype=float)
        step = lambda x: project_weighted(vi.K, D, x - np.linalg.solve(D, vi.F(x)))
    res = np.inf
    for k in range(1, max_iter + 1):
        nxt = step(x)
        res = float(np.linalg.norm(nxt - x))
        x = nxt
        if callback is not None:
            callback(k, x)
        if res < tol:
            return VIResult(x, True, k, res)
    return _finish(x, False, max_iter, res, "basic projection", raise_on_failure)


def extragradient_solve(vi, alpha, x0, tol=1e-10, max_iter=10_000, callback=None,
                        raise_on_failure=False):
    """Extragradient: ``y = P(x - a F(x))``, ``x = P(x - a F(y))``.

    Convergence is guaranteed for ``0 < alpha < 1 / (sqrt(2) L)``; larger
    steps run with a :class:`StepSizeWarning`. Stops when ``||x - y|| < tol``.
    """
    if not alpha > 0:
        raise StepSizeOutOfRange(f"alpha must be positive, got {alpha}")
    bound = 1.0 / (np.sqrt(2.0) * vi.L)
    if alpha >= bound:
        warnings.warn(f"alpha={alpha} is outside (0, {bound:.4g})", StepSizeWarning, stacklevel=2)
    x = np.asarray(x0, dtype=float).copy()
    P = vi.K.project
    res = np.inf
    for k in range(1, max_iter + 1):
        y = P(x - alpha * vi.F(x))
        res = float(np.linalg.norm(x - y))
        if res < tol:
            return VIResult(x, True, k - 1, res)
        x = P(x - alpha * vi.F(y))
        if callback is not None:
            callback(k, x)
    return _finish(x, False, max_iter, res, "extragradient", raise_on_failure)


# ---------------------------------------------------------------------------
# projected affine equation  Phi r = Pi (A Phi r + b)

@dataclass(frozen=True, eq=False)
class ProjectedAffineEquation:
    """Galerkin equation ``C r = d`` with ``C = Phi' Xi (I - A) Phi``, ``d = Phi' Xi b``.

    Sampling draws rows ``i ~ xi`` and columns ``j ~ p_ij`` proportional to
    ``|a_ij|`` (uniform on rows of ``A`` that are all zero).
    """

    A: np.ndarray
    b: np.ndarray
    Phi: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        for k in ("A", "b", "Phi", "xi"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.b.shape != (n,) or self.Phi.shape[0] != n:
            raise ValueError("A, b, Phi disagree on the number of states")
        if np.any(self.xi <= 0) or abs(self.xi.sum() - 1.0) > 1e-12:
            raise ValueError("xi must be a strictly positive distribution")

    @classmethod
    def from_mrp(cls, mrp, basis):
        return cls(mrp.gamma * mrp.P, mrp.R, basis.matrix(), mrp.xi)

    @property
    def column_probs(self):
        absA = np.abs(self.A)
        rows = absA.sum(axis=1, keepdims=True)
        n = self.A.shape[1]
        return np.where(rows > 0, absA / np.where(rows > 0, rows, 1.0), 1.0 / n)

    def exact(self):
        XPhi = self.xi[:, None] * self.Phi
        C = XPhi.T @ (self.Phi - self.A @ self.Phi)
        d = XPhi.T @ self.b
        return C, d


def projected_equation_estimate(pe, k_samples, seed):
    """Sample averages ``(C_k, d_k)`` from ``k_samples`` row/column draws."""
    rng = np.random.default_rng(seed)
    n = pe.A.shape[0]
    i = rng.choice(n, size=k_samples, p=pe.xi)
    cdf = np.cumsum(pe.column_probs, axis=1)
    u = rng.random(k_samples)
    j = np.minimum((u[:, None] > cdf[i]).sum(axis=1), n - 1)
    ratio = pe.A[i, j] / pe.column_probs[i, j]
    Fi = pe.Phi[i]
    C = Fi.T @ (Fi - ratio[:, None] * pe.Phi[j]) / k_samples
    d = Fi.T @ pe.b[i] / k_samples
    return C, d


def projected_equation_solve(pe, C=None, d=None):
    """Solve ``C r = d`` (exact ``C, d`` unless sampled ones are given)."""
    if C is None or d is None:
        C, d = pe.exact()
    s = np.linalg.svd(C, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise SingularBasis("projected-equation matrix C is singular")
    return np.linalg.solve(C, d)
