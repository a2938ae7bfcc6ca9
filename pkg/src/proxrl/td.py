"""On-policy TD learning in primal/dual form.

Each step function takes a :class:`TdIterate` and one transition and
returns a new iterate; nothing is mutated. The dual weights ``theta_dual``
always equal the link function applied to the primal weights ``w``.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, ZeroDiagonal
from .geometry import BregmanGeometry, prox_l1

H_FLOOR = 1e-8


@dataclass(frozen=True)
class Schedule:
    """Stepsize rule ``t -> alpha_t`` for ``t = 1, 2, ...``.

    ``constant`` returns ``alpha0``; ``inv_sqrt`` returns ``alpha0 / sqrt(t)``.
    """

    kind: str = "constant"
    alpha0: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "inv_sqrt"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if not self.alpha0 >= 0:
            raise ValueError("alpha0 must be nonnegative")

    def __call__(self, t):
        if self.kind == "constant":
            return self.alpha0
        return self.alpha0 / math.sqrt(max(t, 1))


def constant(alpha):
    return Schedule("constant", alpha)


def inv_sqrt(alpha0):
    return Schedule("inv_sqrt", alpha0)


def decaying_p(d, horizon, p_end=2.0):
    """p-norm schedule starting at ``max(2, 2 ln d)`` and reaching ``p_end`` linearly."""
    p0 = max(2.0, 2.0 * math.log(d))

    def p_at(t):
        frac = min(max(t - 1, 0) / max(horizon - 1, 1), 1.0)
        return p0 + (p_end - p0) * frac

    return p_at


@dataclass(frozen=True, eq=False)
class TdIterate:
    w: np.ndarray
    theta_dual: np.ndarray
    e: np.ndarray
    gamma: float
    alpha: Schedule = Schedule()
    lam: float = 0.0
    beta_sparsity: float = 0.0
    geom: BregmanGeometry = BregmanGeometry()
    G_accum: Optional[np.ndarray] = None
    p_schedule: Optional[Callable[[int], float]] = None
    t: int = 0

    @classmethod
    def init(cls, w0, gamma, alpha=None, lam=0.0, beta_sparsity=0.0, geom=None,
             p_schedule=None):
        w0 = np.asarray(w0, dtype=float).copy()
        geom = geom or BregmanGeometry.euclidean()
        if p_schedule is not None:
            geom = BregmanGeometry.p_norm(p_schedule(1))
        alpha = alpha if isinstance(alpha, Schedule) else constant(0.1 if alpha is None else alpha)
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        return cls(w0, geom.grad(w0), np.zeros_like(w0), gamma, alpha, lam,
                   beta_sparsity, geom, np.zeros_like(w0), p_schedule, 0)

    @property
    def theta(self):
        return self.w


def _check(it, sample):
    if sample.phi.shape != it.w.shape or sample.phi_next.shape != it.w.shape:
        raise DimensionMismatch(
            f"features have shape {sample.phi.shape}, weights {it.w.shape}"
        )


def td_error(w, sample, gamma):
    return sample.r + gamma * (sample.phi_next @ w) - sample.phi @ w


def _trace(it, phi, start):
    if start:
        return phi.astype(float).copy()
    return it.gamma * it.lam * it.e + phi


def td0_step(it, sample, alpha=None):
    """TD(0): ``w <- w + alpha * delta * phi``."""
    _check(it, sample)
    t = it.t + 1
    a = it.alpha(t) if alpha is None else alpha
    delta = td_error(it.w, sample, it.gamma)
    w = it.w + a * delta * sample.phi
    return replace(it, w=w, theta_dual=w.copy(), t=t)


def td_lambda_step(it, sample):
    """Linear TD(lambda) with accumulating traces."""
    _check(it, sample)
    t = it.t + 1
    e = _trace(it, sample.phi, sample.start)
    delta = td_error(it.w, sample, it.gamma)
    w = it.w + it.alpha(t) * delta * e
    return replace(it, w=w, theta_dual=w.copy(), e=e, t=t)


def _geom_at(it, t):
    if it.p_schedule is None:
        return it.geom
    return BregmanGeometry.p_norm(it.p_schedule(t))


def _mirror(it, sample, shrink):
    _check(it, sample)
    t = it.t + 1
    a = it.alpha(t)
    geom = _geom_at(it, t)
    e = _trace(it, sample.phi, sample.start)
    delta = td_error(it.w, sample, it.gamma)
    theta = geom.grad(it.w) + a * delta * e
    if shrink:
        theta = prox_l1(theta, a * it.beta_sparsity)
    w = geom.grad_conj(theta)
    return replace(it, w=w, theta_dual=theta, e=e, geom=geom, t=t)


def mirror_td_step(it, sample):
    """Mirror-descent TD(lambda): the TD step is taken on the dual weights."""
    return _mirror(it, sample, shrink=False)


def sparse_mirror_td_step(it, sample):
    """Mirror-descent TD(lambda) with soft thresholding of the dual weights."""
    return _mirror(it, sample, shrink=True)


def composite_mirror_td_step(it, sample, eps=H_FLOOR):
    """Composite mirror-descent TD(lambda) with an adaptive diagonal metric.

    The accumulator keeps ``diag(sum phi phi')`` and ``H = sqrt`` of it,
    floored at ``eps`` for features that have not fired yet. The dual
    weights of this variant are ``H * w``.
    """
    _check(it, sample)
    if eps <= 0:
        raise ZeroDiagonal("the floor on H must be positive")
    t = it.t + 1
    a = it.alpha(t)
    e = _trace(it, sample.phi, sample.start)
    G = it.G_accum + sample.phi ** 2
    H = np.maximum(np.sqrt(G), eps)
    delta = td_error(it.w, sample, it.gamma)
    u = it.w + a * delta * e / H
    w = np.sign(u) * np.maximum(np.abs(u) - a * it.beta_sparsity / H, 0.0)
    return replace(it, w=w, theta_dual=H * w, e=e, G_accum=G, t=t)


# ---------------------------------------------------------------------------
# control

@dataclass(frozen=True, slots=True)
class QSample:
    """Transition with action features.

    ``phi`` is ``phi(s, a)``; ``phi_next_actions`` stacks ``phi(s', a')`` for
    every action (``None`` when ``s'`` is terminal).
    """

    r: float
    phi: np.ndarray
    phi_next_actions: Optional[np.ndarray]
    start: bool = False


def epsilon_greedy(w, phi_actions, epsilon, rng):
    if rng.random() < epsilon:
        return int(rng.integers(phi_actions.shape[0]))
    q = phi_actions @ w
    best = np.flatnonzero(q == q.max())
    return int(best[0] if best.size == 1 else rng.choice(best))


def mirror_q_step(it, sample, epsilon=0.1, rng=None):
    """Mirror-descent Q-learning step.

    Uses the greedy target ``r + gamma * max_a' phi(s', a')' w``. Returns
    ``(iterate, action)`` where ``action`` is drawn epsilon-greedily at ``s'``
    under the updated weights (``None`` at a terminal ``s'``).
    """
    if sample.phi.shape != it.w.shape:
        raise DimensionMismatch(f"features have shape {sample.phi.shape}, weights {it.w.shape}")
    t = it.t + 1
    a = it.alpha(t)
    geom = _geom_at(it, t)
    e = _trace(it, sample.phi, sample.start)
    nxt = sample.phi_next_actions
    q_next = 0.0 if nxt is None else float(np.max(nxt @ it.w))
    delta = sample.r + it.gamma * q_next - sample.phi @ it.w
    theta = geom.grad(it.w) + a * delta * e
    if it.beta_sparsity > 0:
        theta = prox_l1(theta, a * it.beta_sparsity)
    w = geom.grad_conj(theta)
    new = replace(it, w=w, theta_dual=theta, e=e, geom=geom, t=t)
    if nxt is None:
        return new, None
    rng = rng if rng is not None else np.random.default_rng()
    return new, epsilon_greedy(w, nxt, epsilon, rng)


def action_features(fmap, n_actions):
    """Stack a state feature map into per-action blocks ``phi(s, a)``."""

    def phi(s, a):
        f = fmap(s)
        out = np.zeros(f.size * n_actions)
        out[a * f.size:(a + 1) * f.size] = f
        return out

    def all_actions(s):
        f = fmap(s)
        return np.kron(np.eye(n_actions), f)

    return phi, all_actions


def run_td(step, it, samples, n_steps, callback=None):
    """Apply ``step`` to ``n_steps`` samples; ``callback(k, it)`` after each."""
    for k in range(1, n_steps + 1):
        it = step(it, next(samples))
        if callback is not None:
            callback(k, it)
    return it
