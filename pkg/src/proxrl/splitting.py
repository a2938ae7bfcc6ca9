"""Operator splitting for composite objectives f + h.

A *prox map* here is any callable ``prox(v, lam)`` returning
``argmin_x  g(x) + ||x - v||^2 / (2 lam)``. :func:`as_prox_map` adapts a
:class:`~proxrl.geometry.ProxFriendlyFunction`, and :func:`prox_quadratic`
covers the common ``||x - c||^2 / 2`` term.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence, StepSizeOutOfRange
from .geometry import ProxFriendlyFunction


@dataclass(frozen=True)
class CompositeProblem:
    """``f(theta) + h(theta)`` with ``f`` smooth (``L``-Lipschitz gradient)."""

    smooth_grad: Callable[[np.ndarray], np.ndarray]
    L: float
    nonsmooth: ProxFriendlyFunction = ProxFriendlyFunction.zero()
    smooth_value: Optional[Callable[[np.ndarray], float]] = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"Lipschitz constant must be positive, got {self.L}")

    def value(self, theta):
        if self.smooth_value is None:
            raise ValueError("problem was built without smooth_value")
        return self.smooth_value(theta) + self.nonsmooth.value(theta)


def as_prox_map(h):
    """Turn a ProxFriendlyFunction into a ``prox(v, lam)`` callable."""
    if callable(h) and not isinstance(h, ProxFriendlyFunction):
        return h
    return lambda v, lam: h.prox(v, lam)


def prox_quadratic(c):
    """Prox map of ``||x - c||^2 / 2``."""
    c = np.asarray(c, dtype=float)
    return lambda v, lam: (np.asarray(v, dtype=float) + lam * c) / (1.0 + lam)


def fobos_step(prob, theta, alpha):
    """Forward gradient step on f followed by the prox of ``alpha * h``."""
    if not 0 < alpha <= (1.0 + 1e-12) / prob.L:
        raise StepSizeOutOfRange(f"alpha must lie in (0, 1/L] = (0, {1 / prob.L:.6g}], got {alpha}")
    theta = np.asarray(theta, dtype=float)
    return prob.nonsmooth.prox(theta - alpha * prob.smooth_grad(theta), alpha)


def fobos_solve(prob, theta0, alpha=None, tol=1e-10, max_iter=10_000):
    alpha = 1.0 / prob.L if alpha is None else alpha
    theta = np.asarray(theta0, dtype=float)
    for k in range(1, max_iter + 1):
        nxt = fobos_step(prob, theta, alpha)
        if np.linalg.norm(nxt - theta) < tol:
            return nxt
        theta = nxt
    raise NonConvergence("FOBOS hit max_iter", x=theta, iterations=max_iter)


def _split_loop(first, second, lam, z0, tol, max_iter, name):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = np.asarray(z0, dtype=float).copy()
    x_next = z
    for k in range(1, max_iter + 1):
        x_half = first(z, lam)
        z_half = 2.0 * x_half - z
        x_next = second(z_half, lam)
        z = z + x_next - x_half
        if np.linalg.norm(x_next - x_half) < tol:
            return x_next
    raise NonConvergence(f"{name} hit max_iter={max_iter}", x=x_next, iterations=max_iter)


def douglas_rachford(prox_A, prox_B, lam=1.0, z0=None, tol=1e-10, max_iter=10_000, dim=None):
    """Douglas-Rachford splitting for ``min A(x) + B(x)``.

    Each sweep resolves B at ``z``, reflects, resolves A at the reflection and
    moves ``z`` by the gap. Stops once the two resolvent outputs agree to
    ``tol`` in the 2-norm and returns the A-side point.
    """
    if z0 is None:
        if dim is None:
            raise ValueError("give z0 or dim")
        z0 = np.zeros(dim)
    return _split_loop(as_prox_map(prox_B), as_prox_map(prox_A), lam, z0, tol, max_iter,
                       "Douglas-Rachford")


def admm(prox_f, prox_g, lam=1.0, z0=None, tol=1e-10, max_iter=10_000, dim=None):
    """ADMM in its Douglas-Rachford form for ``min f(x) + g(x)``.

    The second proximal minimisation is anchored at the reflected point
    ``2 x_half - z``; anchoring it at ``x_half`` would make the method stall
    at ``prox_g(prox_f(z))`` instead of solving the sum.
    """
    if z0 is None:
        if dim is None:
            raise ValueError("give z0 or dim")
        z0 = np.zeros(dim)
    return _split_loop(as_prox_map(prox_f), as_prox_map(prox_g), lam, z0, tol, max_iter, "ADMM")
