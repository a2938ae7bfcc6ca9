"""Proximal maps, projections and Bregman geometry.

Everything here is a pure function of its inputs. The two value types,
:class:`BregmanGeometry` and :class:`FeasibleSet`, are frozen after
construction and validate their own invariants.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DomainViolation,
    InfeasibleSet,
    NegativeRho,
    NonConvergence,
    NonPositiveDefinite,
)

PD_RTOL = 1e-10
HALFSPACE_TOL = 1e-10
HALFSPACE_MAX_ITER = 10_000


def check_pd(G, name="G"):
    """Return ``G`` as a float array after checking it is symmetric PD.

    The smallest eigenvalue must exceed ``1e-10`` times the largest.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[0] != G.shape[1]:
        raise NonPositiveDefinite(f"{name} must be square, got shape {G.shape}")
    if not np.allclose(G, G.T, atol=1e-12, rtol=0):
        raise NonPositiveDefinite(f"{name} is not symmetric")
    ev = np.linalg.eigvalsh(G)
    if ev[-1] <= 0 or ev[0] <= PD_RTOL * ev[-1]:
        raise NonPositiveDefinite(
            f"{name} is not positive definite (eigenvalues in [{ev[0]:.3g}, {ev[-1]:.3g}])"
        )
    return G


# ---------------------------------------------------------------------------
# proximal operators

def prox_l1(x, rho):
    """Soft thresholding, the prox of ``rho * ||.||_1``.

    >>> prox_l1(np.array([1.2, -0.3]), 0.5)
    array([0.7, 0. ])
    """
    if rho < 0:
        raise NegativeRho(f"rho must be nonnegative, got {rho}")
    if not np.isfinite(rho):
        raise NegativeRho(f"rho must be finite, got {rho}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - rho, 0.0)


@dataclass(frozen=True, eq=False)
class ProxFriendlyFunction:
    """A convex function ``h`` whose prox is cheap.

    ``kind`` is one of ``"zero"``, ``"l1"`` or ``"indicator"``.
    """

    kind: str = "zero"
    rho: float = 0.0
    set: Optional["FeasibleSet"] = None

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "indicator"):
            raise ValueError(f"unknown prox-friendly kind {self.kind!r}")
        if self.rho < 0:
            raise NegativeRho(f"rho must be nonnegative, got {self.rho}")
        if self.kind == "indicator" and self.set is None:
            raise ValueError("indicator function needs a set")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def l1(cls, rho):
        return cls("l1", rho=float(rho))

    @classmethod
    def indicator(cls, feasible_set):
        return cls("indicator", set=feasible_set)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return 0.0
        if self.kind == "l1":
            return self.rho * np.abs(x).sum()
        return 0.0 if self.set.contains(x, tol=1e-9) else np.inf

    def prox(self, x, step=1.0):
        """Prox of ``step * h`` evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return x.copy()
        if self.kind == "l1":
            return prox_l1(x, step * self.rho)
        return self.set.project(x)


# ---------------------------------------------------------------------------
# projections

def project_l2_ball(y, radius, center=None):
    y = np.asarray(y, dtype=float)
    c = np.zeros_like(y) if center is None else np.asarray(center, dtype=float)
    v = y - c
    nrm = np.linalg.norm(v)
    if nrm <= radius:
        return y.copy()
    return c + (radius / nrm) * v


def project_linf_ball(y, radius):
    return np.clip(np.asarray(y, dtype=float), -radius, radius)


def project_simplex(y, total=1.0):
    """Euclidean projection onto ``{x >= 0, sum(x) = total}`` by sorting."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - total
    k = np.arange(1, y.size + 1)
    cond = u - css / k > 0
    r = k[cond][-1]
    tau = css[r - 1] / r
    return np.maximum(y - tau, 0.0)


def project_l1_ball(y, radius):
    y = np.asarray(y, dtype=float)
    if np.abs(y).sum() <= radius:
        return y.copy()
    return np.sign(y) * project_simplex(np.abs(y), radius)


def hildreth(y, A, b, Ginv=None, tol=HALFSPACE_TOL, max_iter=HALFSPACE_MAX_ITER):
    """Project ``y`` onto ``{x : A x <= b}`` in the metric ``Ginv^{-1}``.

    Coordinate ascent on the dual multipliers (Hildreth's method). Each sweep
    updates one multiplier per constraint exactly, clipped at zero. Stops
    once violation and complementary slackness are both below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if Ginv is None:
        cols = A.T.copy()
    else:
        cols = Ginv @ A.T
    q = np.einsum("ij,ji->i", A, cols)
    active = q > 0
    lam = np.zeros(A.shape[0])
    x = y.copy()
    for it in range(max_iter):
        for i in np.flatnonzero(active):
            new = max(0.0, lam[i] + (A[i] @ x - b[i]) / q[i])
            if new != lam[i]:
                x -= (new - lam[i]) * cols[:, i]
                lam[i] = new
        slack = A @ x - b
        if slack.max(initial=-np.inf) <= tol and np.max(np.abs(lam * slack), initial=0.0) <= tol:
            return x
    raise NonConvergence(
        f"halfspace projection did not converge in {max_iter} sweeps", x=x, iterations=max_iter
    )


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """A closed convex set with a Euclidean projection.

    Build with the classmethods rather than the raw constructor.
    """

    kind: str = "whole_space"
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    radius: Optional[float] = None
    center: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict, repr=False)

    @classmethod
    def whole_space(cls):
        return cls("whole_space")

    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InfeasibleSet("box needs lo <= hi componentwise")
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def l2_ball(cls, radius, center=None):
        if radius <= 0:
            raise InfeasibleSet("radius must be positive")
        c = None if center is None else np.asarray(center, dtype=float)
        return cls("l2_ball", radius=float(radius), center=c)

    @classmethod
    def linf_ball(cls, radius):
        if radius <= 0:
            raise InfeasibleSet("radius must be positive")
        return cls("linf_ball", radius=float(radius))

    @classmethod
    def l1_ball(cls, radius):
        if radius <= 0:
            raise InfeasibleSet("radius must be positive")
        return cls("l1_ball", radius=float(radius))

    @classmethod
    def simplex(cls):
        return cls("simplex")

    @classmethod
    def halfspaces(cls, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A and b disagree on the number of constraints")
        res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1])
        if res.status == 2:
            raise InfeasibleSet("halfspace system has no feasible point")
        return cls("halfspaces", A=A, b=b)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "whole_space":
            return y.copy()
        if k == "box":
            return np.clip(y, self.lo, self.hi)
        if k == "l2_ball":
            return project_l2_ball(y, self.radius, self.center)
        if k == "linf_ball":
            return project_linf_ball(y, self.radius)
        if k == "l1_ball":
            return project_l1_ball(y, self.radius)
        if k == "simplex":
            return project_simplex(y)
        if self.contains(y, tol=0.0):
            return y.copy()
        return hildreth(y, self.A, self.b)

    def contains(self, x, tol=1e-10):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "whole_space":
            return True
        if k == "box":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        if k == "l2_ball":
            c = 0.0 if self.center is None else self.center
            return bool(np.linalg.norm(x - c) <= self.radius + tol)
        if k == "linf_ball":
            return bool(np.abs(x).max(initial=0.0) <= self.radius + tol)
        if k == "l1_ball":
            return bool(np.abs(x).sum() <= self.radius + tol)
        if k == "simplex":
            return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)
        return bool(np.all(self.A @ x <= self.b + tol))

    def as_halfspaces(self, dim):
        """``(A, b)`` with the set equal to ``{x : A x <= b}``, for polyhedral kinds."""
        k = self.kind
        eye = np.eye(dim)
        if k == "halfspaces":
            return self.A, self.b
        if k == "box":
            return np.vstack([eye, -eye]), np.concatenate([self.hi, -self.lo])
        if k == "linf_ball":
            r = np.full(dim, self.radius)
            return np.vstack([eye, -eye]), np.concatenate([r, r])
        if k == "simplex":
            one = np.ones((1, dim))
            return np.vstack([one, -one, -eye]), np.concatenate([[1.0, -1.0], np.zeros(dim)])
        if k == "l1_ball":
            signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * dim)).reshape(dim, -1).T
            return signs, np.full(signs.shape[0], self.radius)
        raise ValueError(f"{k} is not polyhedral")


def project_set(feasible_set, y):
    """Euclidean projection of ``y`` onto ``feasible_set``."""
    return feasible_set.project(y)


# ---------------------------------------------------------------------------
# distance-generating functions

def _power_link(v, r):
    # sign(v)|v|^(r-1) / ||v||_r^(r-2), written to avoid overflow; 0 at v = 0
    nrm = np.linalg.norm(v, ord=r)
    if nrm == 0.0:
        return np.zeros_like(v)
    return np.sign(v) * nrm * (np.abs(v) / nrm) ** (r - 1.0)


@dataclass(frozen=True, eq=False)
class BregmanGeometry:
    """Distance-generating function ``psi`` together with its conjugate.

    Kinds:

    ``euclidean``         psi(w) = ||w||^2 / 2
    ``p_norm``            psi(w) = ||w||_q^2 / 2 with 1/p + 1/q = 1; the
                          inverse link uses the p-norm
    ``neg_entropy``       psi(w) = sum w log w on the positive orthant
    ``quadratic``         psi(w) = w'Gw / 2 for symmetric PD ``G``
    ``diag_mahalanobis``  psi(w) = sum h_i w_i^2 / 2 for positive ``h``
    """

    kind: str = "euclidean"
    p: Optional[float] = None
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "p_norm":
            if self.p is None or not self.p > 1:
                raise ValueError(f"p_norm needs p > 1, got {self.p}")
        elif self.kind == "quadratic":
            object.__setattr__(self, "G", check_pd(self.G))
        elif self.kind == "diag_mahalanobis":
            h = np.asarray(self.h, dtype=float)
            if np.any(h <= 0):
                raise NonPositiveDefinite("diagonal weights must be positive")
            object.__setattr__(self, "h", h)
        elif self.kind not in ("euclidean", "neg_entropy"):
            raise ValueError(f"unknown geometry kind {self.kind!r}")

    @classmethod
    def euclidean(cls):
        return cls("euclidean")

    @classmethod
    def p_norm(cls, p):
        return cls("p_norm", p=float(p))

    @classmethod
    def neg_entropy(cls):
        return cls("neg_entropy")

    @classmethod
    def quadratic(cls, G):
        return cls("quadratic", G=G)

    @classmethod
    def diag_mahalanobis(cls, h):
        return cls("diag_mahalanobis", h=h)

    @property
    def q(self):
        """Conjugate exponent of ``p`` (primal-side norm of a p_norm geometry)."""
        if self.kind != "p_norm":
            return 2.0
        return self.p / (self.p - 1.0)

    @property
    def mu(self):
        """Strong-convexity modulus of psi."""
        if self.kind == "p_norm":
            # ||.||_q^2/2 is (q-1)-strongly convex w.r.t. ||.||_q for q <= 2
            return min(self.q - 1.0, 1.0)
        if self.kind == "quadratic":
            return float(np.linalg.eigvalsh(self.G)[0])
        if self.kind == "diag_mahalanobis":
            return float(self.h.min())
        return 1.0

    def _check_domain(self, w):
        if self.kind == "neg_entropy" and np.any(w <= 0):
            raise DomainViolation("negative entropy is defined on the positive orthant")

    def psi(self, w):
        w = np.asarray(w, dtype=float)
        self._check_domain(w)
        k = self.kind
        if k == "euclidean":
            return 0.5 * w @ w
        if k == "p_norm":
            return 0.5 * np.linalg.norm(w, ord=self.q) ** 2
        if k == "neg_entropy":
            return float(np.sum(w * np.log(w)))
        if k == "quadratic":
            return 0.5 * w @ self.G @ w
        return 0.5 * np.sum(self.h * w * w)

    def psi_conj(self, theta):
        """Legendre transform psi*(theta)."""
        t = np.asarray(theta, dtype=float)
        k = self.kind
        if k == "euclidean":
            return 0.5 * t @ t
        if k == "p_norm":
            return 0.5 * np.linalg.norm(t, ord=self.p) ** 2
        if k == "neg_entropy":
            return float(np.sum(np.exp(t - 1.0)))
        if k == "quadratic":
            return 0.5 * t @ np.linalg.solve(self.G, t)
        return 0.5 * np.sum(t * t / self.h)

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        self._check_domain(w)
        k = self.kind
        if k == "euclidean":
            return w.copy()
        if k == "p_norm":
            return _power_link(w, self.q)
        if k == "neg_entropy":
            return 1.0 + np.log(w)
        if k == "quadratic":
            return self.G @ w
        return self.h * w

    def grad_conj(self, theta):
        t = np.asarray(theta, dtype=float)
        k = self.kind
        if k == "euclidean":
            return t.copy()
        if k == "p_norm":
            return _power_link(t, self.p)
        if k == "neg_entropy":
            return np.exp(t - 1.0)
        if k == "quadratic":
            return np.linalg.solve(self.G, t)
        return t / self.h

    def divergence(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "euclidean":
            d = x - y
            return 0.5 * d @ d
        if k == "neg_entropy":
            self._check_domain(x)
            self._check_domain(y)
            return float(np.sum(x * np.log(x / y) - x + y))
        if k == "quadratic":
            d = x - y
            return 0.5 * d @ self.G @ d
        if k == "diag_mahalanobis":
            d = x - y
            return 0.5 * np.sum(self.h * d * d)
        return self.psi(x) - self.psi(y) - self.grad(y) @ (x - y)

    def conj_divergence(self, s, t):
        """Bregman divergence of psi* between dual points ``s`` and ``t``."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return self.psi_conj(s) - self.psi_conj(t) - self.grad_conj(t) @ (s - t)


def link_forward(geom, w):
    """Primal-to-dual map, the gradient of psi."""
    return geom.grad(w)


def link_inverse(geom, theta):
    """Dual-to-primal map, the gradient of psi*."""
    return geom.grad_conj(theta)


def bregman_div(geom, x, y):
    return geom.divergence(x, y)


def mirror_step(geom, w, grad, alpha, h=None):
    """One mirror-descent step, optionally with a prox applied in the dual."""
    theta = geom.grad(w) - alpha * np.asarray(grad, dtype=float)
    if h is not None:
        theta = h.prox(theta, alpha)
    return geom.grad_conj(theta)
