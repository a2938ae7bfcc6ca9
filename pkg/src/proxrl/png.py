"""Natural gradient, its mirror-descent form, and projected natural gradient.

A natural-gradient step ``x - alpha G^{-1} g`` is exactly a mirror step
under ``psi(x) = x'Gx / 2``. Under constraints the compatible projection
is the one measured in the same metric ``G``; projecting in the Euclidean
metric instead changes the fixed points.
"""

import csv
import itertools
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence, NonPositiveDefinite
from .geometry import BregmanGeometry, FeasibleSet, check_pd, hildreth

FISHER_FLOOR = 1e-8
KKT_TOL = 1e-10

CASE_A = np.diag([1.0, 0.01])
CASE_B = np.array([-0.2, -0.1])
CASE_STEP = 0.05
CASE_OPTIMUM = np.array([6.0 / 101.0, 95.0 / 101.0])
for _a in (CASE_A, CASE_B, CASE_OPTIMUM):
    _a.setflags(write=False)


def case_set():
    """``{x : x1 + x2 <= 1, x >= 0}``, the nonnegative part of the unit l1 ball."""
    return FeasibleSet.halfspaces([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]], [1.0, 0.0, 0.0])


def case_objective(x):
    x = np.asarray(x, dtype=float)
    return float(x @ CASE_A @ x + CASE_B @ x)


def case_grad(x):
    return 2.0 * CASE_A @ np.asarray(x, dtype=float) + CASE_B


def natural_gradient_step(x, grad, G, alpha):
    G = check_pd(G)
    return np.asarray(x, dtype=float) - alpha * np.linalg.solve(G, np.asarray(grad, dtype=float))


def mirror_step_quadratic(x, grad, G, alpha):
    """Mirror step ``grad psi*(grad psi(x) - alpha g)`` for ``psi = x'Gx/2``."""
    geom = BregmanGeometry.quadratic(G)
    return geom.grad_conj(geom.grad(x) - alpha * np.asarray(grad, dtype=float))


# ---------------------------------------------------------------------------
# projection in the G metric

def _active_set_qp(y, G, A, b, tol=KKT_TOL):
    # enumerate candidate active sets; keep the best KKT-feasible point
    d, m = y.size, A.shape[0]
    Ginv = np.linalg.inv(G)
    best, best_val = None, np.inf
    for k in range(0, min(m, d) + 1):
        for S in itertools.combinations(range(m), k):
            S = list(S)
            if S:
                As = A[S]
                K = As @ Ginv @ As.T
                lam, *_ = np.linalg.lstsq(K, As @ y - b[S], rcond=None)
                if np.any(lam < -tol):
                    continue
                x = y - Ginv @ As.T @ lam
                if np.abs(As @ x - b[S]).max() > 1e-8:
                    continue
            else:
                x = y
            if np.all(A @ x <= b + 1e-10):
                v = 0.5 * (x - y) @ G @ (x - y)
                if v < best_val - 1e-15:
                    best, best_val = x, v
    if best is None:
        raise NonConvergence("no KKT point found by active-set enumeration", x=y)
    return best


def _l2_ball_weighted(y, G, radius, center, tol=1e-13):
    c = np.zeros_like(y) if center is None else center
    x_of = lambda mu: np.linalg.solve(G + mu * np.eye(y.size), G @ y + mu * c)
    lo, hi = 0.0, 1.0
    while np.linalg.norm(x_of(hi) - c) > radius:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(x_of(mid) - c) > radius:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return x_of(hi)


def project_weighted(feasible_set, G, y):
    """``argmin_{x in set} (y - x)' G (y - x) / 2``.

    Boxes with diagonal ``G`` use the closed form (clipping). Polyhedral sets
    in up to three dimensions use exact active-set enumeration, larger ones
    dual coordinate ascent. Balls use bisection on the multiplier.
    """
    G = check_pd(G)
    y = np.asarray(y, dtype=float)
    S = feasible_set
    if S.kind == "whole_space" or S.contains(y, tol=0.0):
        return y.copy()
    diagonal = np.allclose(G, np.diag(np.diag(G)), atol=0, rtol=0)
    if S.kind in ("box", "linf_ball") and diagonal:
        return S.project(y)
    if S.kind == "l2_ball":
        if np.allclose(G, G[0, 0] * np.eye(y.size), atol=0, rtol=0):
            return S.project(y)
        return _l2_ball_weighted(y, G, S.radius, S.center)
    A, b = S.as_halfspaces(y.size)
    if y.size <= 3:
        return _active_set_qp(y, G, A, b)
    return hildreth(y, A, b, Ginv=np.linalg.inv(G))


def png_step(x, grad, G, alpha, feasible_set):
    """Projected natural gradient with the compatible ``G``-metric projection."""
    return project_weighted(feasible_set, G, natural_gradient_step(x, grad, G, alpha))


def psg_step(x, grad, alpha, feasible_set):
    """Projected (sub)gradient step in the Euclidean metric."""
    return feasible_set.project(np.asarray(x, dtype=float) - alpha * np.asarray(grad, dtype=float))


def png_euclid_step(x, grad, G, alpha, feasible_set):
    """Natural-gradient direction followed by a Euclidean projection."""
    return feasible_set.project(natural_gradient_step(x, grad, G, alpha))


# ---------------------------------------------------------------------------
# Fisher information estimate

@dataclass(frozen=True, eq=False)
class FisherEstimator:
    """Running estimate ``G <- (1 - mu) G + mu s s'`` starting from ``beta0 I``."""

    G: np.ndarray
    beta0: float = 1.0
    mu_schedule: Optional[Callable[[int], float]] = None
    t: int = 0

    @classmethod
    def init(cls, d, beta0=1.0, mu_schedule=None):
        if not beta0 > 0:
            raise NonPositiveDefinite("beta0 must be positive")
        return cls(beta0 * np.eye(d), float(beta0), mu_schedule, 0)

    def metric(self):
        """The estimate plus the ``1e-8 I`` floor, safe to invert."""
        return self.G + FISHER_FLOOR * np.eye(self.G.shape[0])


def fisher_update(est, score, mu=None):
    t = est.t + 1
    if mu is None:
        mu = est.mu_schedule(t) if est.mu_schedule is not None else 1.0 / t
    s = np.asarray(score, dtype=float)
    G = (1.0 - mu) * est.G + mu * np.outer(s, s)
    return replace(est, G=0.5 * (G + G.T), t=t)


# ---------------------------------------------------------------------------
# case study

CASE_ALGORITHMS = ("psg", "png", "png_euclid")


def quadratic_case_study(algorithm, iters=1000, alpha=CASE_STEP, x0=(0.0, 0.0)):
    """Minimise ``x'Ax + b'x`` over :func:`case_set` with metric ``G = A``.

    Returns the trajectory, shape ``(iters + 1, 2)``, starting at ``x0``.
    """
    if algorithm not in CASE_ALGORITHMS:
        from .errors import UnknownAlgorithm
        raise UnknownAlgorithm(algorithm)
    K = case_set()
    x = np.asarray(x0, dtype=float)
    traj = [x]
    for _ in range(iters):
        g = case_grad(x)
        if algorithm == "psg":
            x = psg_step(x, g, alpha, K)
        elif algorithm == "png":
            x = png_step(x, g, CASE_A, alpha, K)
        else:
            x = png_euclid_step(x, g, CASE_A, alpha, K)
        traj.append(x)
    return np.array(traj)


def write_trajectory_csv(path, trajectory, algorithm=""):
    """Write ``algorithm,iteration,x1,...`` rows with ``%.12e`` values."""
    traj = np.asarray(trajectory)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "iteration"] + [f"x{i + 1}" for i in range(traj.shape[1])])
        for k, row in enumerate(traj):
            w.writerow([algorithm, k] + ["%.12e" % v for v in row])
