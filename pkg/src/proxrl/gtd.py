"""Gradient-TD methods as primal-dual (saddle-point) iterations.

Every method is written once against a small *oracle* interface so the
stochastic version (one transition) and the expected version (exact
expectations) share the same update code:

``td(theta)``   delta * phi                      / E[delta phi]
``Mw(w)``       phi (phi'w)                      / M w
``Atw(w)``      (phi - gamma phi') (phi'w)       / A_td' w
``gCw(w)``      gamma phi' (phi'w)               / gamma E[phi' phi^T] w
``rg(theta)``   delta (phi - gamma phi')         / its expectation

With ``beta = eta * alpha`` the primal variable ``theta`` moves at rate
``alpha`` and the dual ``w`` at rate ``beta``. GTD is the exception: its
dual ``y`` also moves at rate ``alpha``.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyHistory, UnknownAlgorithm
from .geometry import ProxFriendlyFunction, project_l1_ball, project_l2_ball, prox_l1
from .mdp import (
    build_gtd_system,
    expectations,
    mspbe,
    mstde_grad,
    neu,
    sample_indices,
    value_error,
    TransitionSample,
)
from .td import Schedule, constant

DEFAULT_ETA = 10.0


class SampleOracle:
    __slots__ = ("phi", "phin", "dphi", "r", "gamma")

    def __init__(self, sample, gamma):
        self.phi = sample.phi
        self.phin = sample.phi_next
        self.dphi = sample.phi - gamma * sample.phi_next
        self.r = sample.r
        self.gamma = gamma

    def delta(self, theta):
        return self.r - self.dphi @ theta

    def td(self, theta):
        return self.delta(theta) * self.phi

    def Mw(self, w):
        return (self.phi @ w) * self.phi

    def Atw(self, w):
        return (self.phi @ w) * self.dphi

    def gCw(self, w):
        return self.gamma * (self.phi @ w) * self.phin

    def rg(self, theta):
        return self.delta(theta) * self.dphi


class ExpectedOracle:
    """Exact expectations of one (MRP, basis) pair."""

    def __init__(self, mrp, basis):
        self.mrp, self.basis = mrp, basis
        self.ex = expectations(mrp, basis)
        self.gC = mrp.gamma * self.ex.C

    def td(self, theta):
        return self.ex.expected_td(theta)

    def Mw(self, w):
        return self.ex.M @ w

    def Atw(self, w):
        return self.ex.A_td.T @ w

    def gCw(self, w):
        return self.gC @ w

    def rg(self, theta):
        return -0.5 * mstde_grad(self.mrp, self.basis, theta)


# ---------------------------------------------------------------------------
# update rules: (oracle, theta, dual, alpha, beta, h) -> (theta, dual)

def _td(o, th, w, a, b, h):
    return h.prox(th + a * o.td(th), a), w


def _gtd(o, th, y, a, b, h):
    # both variables move at rate alpha here; eta does not enter
    y_new = y + a * (o.td(th) - y)
    return h.prox(th + a * o.Atw(y), a), y_new


def _gtd2(o, th, w, a, b, h):
    w_new = w + b * (o.td(th) - o.Mw(w))
    return h.prox(th + a * o.Atw(w), a), w_new


def _tdc(o, th, w, a, b, h):
    w_new = w + b * (o.td(th) - o.Mw(w))
    return h.prox(th + a * (o.td(th) - o.gCw(w)), a), w_new


def _rg(o, th, w, a, b, h):
    return h.prox(th + a * o.rg(th), a), w


def _gtd2_mp(o, th, w, a, b, h):
    w_half = w + b * (o.td(th) - o.Mw(w))
    th_half = h.prox(th + a * o.Atw(w), a)
    w_new = w + b * (o.td(th_half) - o.Mw(w_half))
    return h.prox(th + a * o.Atw(w_half), a), w_new


def _tdc_mp(o, th, w, a, b, h):
    w_half = w + b * (o.td(th) - o.Mw(w))
    th_half = h.prox(th + a * (o.td(th) - o.gCw(w)), a)
    w_new = w + b * (o.td(th_half) - o.Mw(w_half))
    return h.prox(th + a * (o.td(th_half) - o.gCw(w_half)), a), w_new


UPDATES = {
    "td": _td,
    "gtd": _gtd,
    "gtd2": _gtd2,
    "tdc": _tdc,
    "rg": _rg,
    "gtd2_mp": _gtd2_mp,
    "tdc_mp": _tdc_mp,
}
SADDLE_ALGORITHMS = tuple(UPDATES) + ("rotd",)


@dataclass(frozen=True, eq=False)
class SaddleIterate:
    """Primal ``theta``, dual ``dual`` (``y`` for GTD, ``w`` otherwise) and
    stepsize-weighted running sums for primal averaging."""

    theta: np.ndarray
    dual: np.ndarray
    gamma: float
    alpha: Schedule = constant(0.01)
    eta: float = DEFAULT_ETA
    reg: ProxFriendlyFunction = ProxFriendlyFunction.zero()
    t: int = 0
    sum_alpha: float = 0.0
    sum_theta: Optional[np.ndarray] = None
    sum_dual: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @classmethod
    def init(cls, theta0, gamma, alpha=0.01, eta=DEFAULT_ETA, reg=None, dual0=None):
        theta0 = np.asarray(theta0, dtype=float).copy()
        dual0 = np.zeros_like(theta0) if dual0 is None else np.asarray(dual0, dtype=float).copy()
        alpha = alpha if isinstance(alpha, Schedule) else constant(alpha)
        reg = reg or ProxFriendlyFunction.zero()
        z = np.zeros_like(theta0)
        return cls(theta0, dual0, gamma, alpha, float(eta), reg, 0, 0.0, z, z.copy())

    @property
    def beta(self):
        return self.eta * self.alpha(self.t + 1)


def advance(it, oracle, algorithm):
    """One update of ``algorithm`` using ``oracle`` for the expectations."""
    try:
        rule = UPDATES[algorithm]
    except KeyError:
        raise UnknownAlgorithm(algorithm) from None
    t = it.t + 1
    a = it.alpha(t)
    theta, dual = rule(oracle, it.theta, it.dual, a, it.eta * a, it.reg)
    return replace(
        it, theta=theta, dual=dual, t=t,
        sum_alpha=it.sum_alpha + a,
        sum_theta=it.sum_theta + a * theta,
        sum_dual=it.sum_dual + a * dual,
    )


def _check(it, sample):
    if sample.phi.shape != it.theta.shape or sample.phi_next.shape != it.theta.shape:
        raise DimensionMismatch(f"features {sample.phi.shape} vs weights {it.theta.shape}")


def _sampled(name):
    def step(it, sample):
        _check(it, sample)
        return advance(it, SampleOracle(sample, it.gamma), name)

    step.__name__ = f"{name}_step"
    return step


gtd_step = _sampled("gtd")
gtd_step.__doc__ = "GTD: ``y`` tracks E[delta phi]; ``theta`` follows ``(phi - gamma phi') y'phi``."
gtd2_step = _sampled("gtd2")
gtd2_step.__doc__ = "GTD2: ``w`` tracks M^{-1} E[delta phi] by LMS; ``theta`` follows ``(phi - gamma phi') phi'w``."
tdc_step = _sampled("tdc")
tdc_step.__doc__ = "TDC: TD(0) plus the correction ``-gamma phi' (phi'w)``."
residual_gradient_step = _sampled("rg")
residual_gradient_step.__doc__ = "Residual gradient: ``theta += alpha delta (phi - gamma phi')``."
gtd2_mp_step = _sampled("gtd2_mp")
gtd2_mp_step.__doc__ = (
    "GTD2 with an extragradient (mirror-prox) midpoint; the midpoint TD error\n"
    "reuses the same transition."
)
tdc_mp_step = _sampled("tdc_mp")
tdc_mp_step.__doc__ = "TDC with an extragradient midpoint evaluated on the same transition."
saddle_td0_step = _sampled("td")


def expected_step(it, oracle, algorithm):
    """Deterministic update from exact expectations (see :class:`ExpectedOracle`)."""
    return advance(it, oracle, algorithm)


# ---------------------------------------------------------------------------
# RO-TD: saddle point of ||A x - b||_m + h(x) on x = [w; theta]

@dataclass(frozen=True, eq=False)
class RotdIterate:
    x: np.ndarray
    y: np.ndarray
    gamma: float
    alpha: Schedule = constant(0.01)
    eta: float = DEFAULT_ETA
    rho1: float = 0.0
    rho2: float = 0.0
    norm_pair: tuple = (2.0, 2.0)
    t: int = 0
    sum_alpha: float = 0.0
    sum_x: Optional[np.ndarray] = None
    sum_y: Optional[np.ndarray] = None

    def __post_init__(self):
        m, n = self.norm_pair
        if not np.isclose(_inv(m) + _inv(n), 1.0):
            raise ValueError(f"norm pair {self.norm_pair} is not conjugate")
        if self.rho1 < 0 or self.rho2 < 0:
            from .errors import NegativeRho
            raise NegativeRho("rho1 and rho2 must be nonnegative")

    @classmethod
    def init(cls, theta0, gamma, alpha=0.01, eta=DEFAULT_ETA, rho1=0.0, rho2=0.0,
             norm_pair=(2.0, 2.0), w0=None):
        theta0 = np.asarray(theta0, dtype=float)
        w0 = np.zeros_like(theta0) if w0 is None else np.asarray(w0, dtype=float)
        x = np.concatenate([w0, theta0])
        alpha = alpha if isinstance(alpha, Schedule) else constant(alpha)
        z = np.zeros_like(x)
        return cls(x, z.copy(), gamma, alpha, float(eta), float(rho1), float(rho2),
                   tuple(float(v) for v in norm_pair), 0, 0.0, z.copy(), z.copy())

    @property
    def d(self):
        return self.x.size // 2

    @property
    def w(self):
        return self.x[: self.d]

    @property
    def theta(self):
        return self.x[self.d:]


def _inv(p):
    return 0.0 if np.isinf(p) else 1.0 / p


def project_unit_ball(y, n):
    """Projection onto the unit ball of the ``n``-norm, ``n`` in {1, 2, inf}."""
    if n == 2:
        return project_l2_ball(y, 1.0)
    if np.isinf(n):
        return np.clip(y, -1.0, 1.0)
    if n == 1:
        return project_l1_ball(y, 1.0)
    raise ValueError(f"unit-ball projection for the {n}-norm is not supported")


def yt_A(y, sample, gamma, eta):
    """``A_t' y`` in O(d) without forming the 2d x 2d matrix ``A_t``."""
    d = sample.phi.size
    y1, y2 = y[:d], y[d:]
    phi, phin = sample.phi, sample.phi_next
    s1 = phi @ y1
    top = (eta * s1 + gamma * (phin @ y2)) * phi
    bottom = (eta * s1 + phi @ y2) * (phi - gamma * phin)
    return np.concatenate([top, bottom])


def A_x_minus_b(x, sample, gamma, eta):
    """``A_t x - b_t`` in O(d)."""
    d = sample.phi.size
    w, theta = x[:d], x[d:]
    phi, phin = sample.phi, sample.phi_next
    delta = sample.r + gamma * (phin @ theta) - phi @ theta
    fw = phi @ w
    return np.concatenate([-eta * (delta - fw) * phi, gamma * fw * phin - delta * phi])


def _rotd_finish(it, x_half, y_half, a):
    d = it.d
    x = np.concatenate([prox_l1(x_half[:d], a * it.rho2), prox_l1(x_half[d:], a * it.rho1)])
    y = project_unit_ball(y_half, it.norm_pair[1])
    return replace(
        it, x=x, y=y, t=it.t + 1,
        sum_alpha=it.sum_alpha + a, sum_x=it.sum_x + a * x, sum_y=it.sum_y + a * y,
    )


def rotd_step(it, sample):
    """One stochastic RO-TD step.

    Primal descent ``x - alpha A_t' y`` and dual ascent ``y + alpha (A_t x - b_t)``
    from the same point, then soft thresholding of ``theta`` (by
    ``alpha rho1``) and ``w`` (by ``alpha rho2``) and projection of ``y`` onto
    the unit dual-norm ball.
    """
    if sample.phi.size != it.d:
        raise DimensionMismatch(f"features {sample.phi.shape} vs weights ({it.d},)")
    a = it.alpha(it.t + 1)
    x_half = it.x - a * yt_A(it.y, sample, it.gamma, it.eta)
    y_half = it.y + a * A_x_minus_b(it.x, sample, it.gamma, it.eta)
    return _rotd_finish(it, x_half, y_half, a)


def rotd_expected_step(it, system):
    """RO-TD step with the exact system ``A, b`` of :func:`build_gtd_system`."""
    a = it.alpha(it.t + 1)
    x_half = it.x - a * system.A.T @ it.y
    y_half = it.y + a * (system.A @ it.x - system.b)
    return _rotd_finish(it, x_half, y_half, a)


def primal_average(it):
    """Stepsize-weighted averages of the primal and dual iterates."""
    if it.sum_alpha <= 0:
        raise EmptyHistory("no steps with positive stepsize have been taken")
    if isinstance(it, RotdIterate):
        return it.sum_x / it.sum_alpha, it.sum_y / it.sum_alpha
    return it.sum_theta / it.sum_alpha, it.sum_dual / it.sum_alpha


# ---------------------------------------------------------------------------
# drivers

METRICS = ("mspbe", "neu", "value_error", "sparsity")


def evaluate_metric(name, mrp, basis, theta, ex):
    """Metric ``name`` at ``theta``; ``ex`` holds the precomputed expectations."""
    if name == "mspbe":
        return mspbe(mrp, basis, theta, ex)
    if name == "neu":
        return neu(mrp, basis, theta, ex)
    if name == "value_error":
        return value_error(mrp, basis, theta)
    if name == "sparsity":
        return float(np.count_nonzero(np.abs(theta) > 1e-8))
    raise ValueError(f"unknown metric {name!r}")


def _report_theta(it, averaged):
    if isinstance(it, RotdIterate):
        return primal_average(it)[0][it.d:] if averaged and it.sum_alpha > 0 else it.theta
    if averaged and it.sum_alpha > 0:
        return primal_average(it)[0]
    return it.theta


def run_expected(algorithm, mrp, basis, n_iter, theta0=None, alpha=0.01, eta=DEFAULT_ETA,
                 reg=None, metrics=("mspbe",), rho1=0.0, rho2=0.0, averaged=None):
    """Iterate the expected update ``n_iter`` times.

    Returns ``(iterate, traces)`` where ``traces[m]`` has ``n_iter + 1``
    entries, the first at the initial point. RO-TD reports its averaged
    ``theta`` unless ``averaged=False``.
    """
    if algorithm not in SADDLE_ALGORITHMS:
        raise UnknownAlgorithm(algorithm)
    theta0 = np.zeros(basis.d) if theta0 is None else np.asarray(theta0, dtype=float)
    ex = expectations(mrp, basis)
    averaged = (algorithm == "rotd") if averaged is None else averaged
    if algorithm == "rotd":
        system = build_gtd_system(mrp, basis, eta)
        it = RotdIterate.init(theta0, mrp.gamma, alpha, eta, rho1, rho2)
        step = lambda it: rotd_expected_step(it, system)
    else:
        oracle = ExpectedOracle(mrp, basis)
        it = SaddleIterate.init(theta0, mrp.gamma, alpha, eta, reg)
        step = lambda it: advance(it, oracle, algorithm)
    traces = {m: [evaluate_metric(m, mrp, basis, theta0, ex)] for m in metrics}
    for _ in range(n_iter):
        it = step(it)
        th = _report_theta(it, averaged)
        for m in metrics:
            traces[m].append(evaluate_metric(m, mrp, basis, th, ex))
    return it, {m: np.array(v) for m, v in traces.items()}


def run_sampled(algorithm, mrp, basis, n_samples, seed, theta0=None, alpha=0.01,
                eta=DEFAULT_ETA, reg=None, metrics=("mspbe",), rho1=0.0, rho2=0.0,
                averaged=None, record=None):
    """Run on ``n_samples`` i.i.d. transitions drawn with ``seed``.

    All indices are drawn up front so the stream depends only on the seed.
    ``record`` lists the sample counts at which metrics are evaluated
    (default: every step, including 0).
    """
    if algorithm not in SADDLE_ALGORITHMS:
        raise UnknownAlgorithm(algorithm)
    rng = np.random.default_rng(seed)
    ss, sn = sample_indices(mrp, n_samples, rng)
    Phi = basis.matrix()
    ex = expectations(mrp, basis)
    theta0 = np.zeros(basis.d) if theta0 is None else np.asarray(theta0, dtype=float)
    averaged = (algorithm == "rotd") if averaged is None else averaged
    if algorithm == "rotd":
        it = RotdIterate.init(theta0, mrp.gamma, alpha, eta, rho1, rho2)
    else:
        it = SaddleIterate.init(theta0, mrp.gamma, alpha, eta, reg)
    rec = set(range(n_samples + 1)) if record is None else set(record)
    steps, traces = [], {m: [] for m in metrics}

    def log(k):
        th = _report_theta(it, averaged)
        steps.append(k)
        for m in metrics:
            traces[m].append(evaluate_metric(m, mrp, basis, th, ex))

    if 0 in rec:
        log(0)
    for k in range(n_samples):
        s, s2 = ss[k], sn[k]
        smp = TransitionSample(s, float(mrp.R[s]), s2, Phi[s], Phi[s2])
        if algorithm == "rotd":
            it = rotd_step(it, smp)
        else:
            it = advance(it, SampleOracle(smp, mrp.gamma), algorithm)
        if k + 1 in rec:
            log(k + 1)
    return it, np.array(steps), {m: np.array(v) for m, v in traces.items()}


def l1_solution_path(mrp, basis, rhos, alpha=0.05, eta=1.0, tol=1e-12, max_iter=200_000):
    """Solutions of ``min MSPBE/2 + rho ||theta||_1`` via expected proximal GTD2.

    Each ``rho`` is run to a fixed-point residual below ``tol`` and warm
    starts the next one. Returns an array of shape ``(len(rhos), d)``.
    """
    from .errors import NonConvergence

    oracle = ExpectedOracle(mrp, basis)
    theta = np.zeros(basis.d)
    w = np.zeros(basis.d)
    out = []
    for rho in rhos:
        it = SaddleIterate.init(theta, mrp.gamma, alpha, eta, ProxFriendlyFunction.l1(rho), w)
        for k in range(max_iter):
            nxt = advance(it, oracle, "gtd2")
            res = max(np.abs(nxt.theta - it.theta).max(), np.abs(nxt.dual - it.dual).max())
            it = nxt
            if res < tol:
                break
        else:
            raise NonConvergence(f"path point rho={rho} did not converge", x=it.theta,
                                 iterations=max_iter)
        theta, w = it.theta, it.dual
        out.append(theta.copy())
    return np.array(out)
