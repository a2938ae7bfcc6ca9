"""Finite Markov reward processes, linear features and TD objectives.

Notation used throughout::

    M    = Phi' Xi Phi                 feature covariance
    A_td = Phi' Xi (Phi - gamma P Phi) expected TD matrix E[phi (phi - gamma phi')']
    b_td = Phi' Xi R                   expected reward correlation E[r phi]

so the expected TD update at ``theta`` is ``E[delta phi] = b_td - A_td theta``.
All objectives are computed exactly by dense linear algebra.
"""

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import DimensionMismatch, SingularBasis

RANK_RTOL = 1e-10
MRP_HEADER = "# proxrl-mrp v1"


def stationary_distribution(P):
    """Left Perron vector of ``P`` normalised to sum to one."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    # solve x'(I - P) = 0 with sum(x) = 1 as a least-squares system
    lhs = np.vstack([(np.eye(n) - P).T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    x = np.clip(x, 0.0, None)
    return x / x.sum()


@dataclass(frozen=True, eq=False)
class MarkovRewardProcess:
    """Policy-evaluation model: transitions ``P``, expected rewards ``R``,
    discount ``gamma`` and state weighting ``xi``.

    Episodic tasks mark absorbing states in ``terminal`` (a zero-reward
    self-loop in ``P``). Trajectory sampling leaves a terminal state by
    drawing a fresh start from ``restart`` (default: ``xi`` restricted to
    the non-terminal states).
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    xi: np.ndarray
    terminal: Optional[np.ndarray] = None
    restart: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        R = np.asarray(self.R, dtype=float).ravel()
        xi = np.asarray(self.xi, dtype=float).ravel()
        n = P.shape[0]
        if P.shape != (n, n) or R.size != n or xi.size != n:
            raise DimensionMismatch(
                f"P {P.shape}, R {R.shape} and xi {xi.shape} disagree on the state count"
            )
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("P must be row-stochastic")
        if np.any(xi <= 0) or abs(xi.sum() - 1.0) > 1e-12:
            raise ValueError("xi must be a strictly positive distribution")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        term = np.zeros(n, dtype=bool) if self.terminal is None else np.asarray(self.terminal, bool)
        if self.restart is None:
            rs = np.where(term, 0.0, xi)
        else:
            rs = np.asarray(self.restart, dtype=float).ravel()
        if term.size != n or rs.size != n or rs.sum() <= 0 or np.any(rs < 0):
            raise DimensionMismatch("terminal mask or restart distribution has the wrong shape")
        rs = rs / rs.sum()
        for k, v in (("P", P), ("R", R), ("xi", xi), ("terminal", term), ("restart", rs)):
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def n(self):
        return self.P.shape[0]

    def value_function(self):
        return np.linalg.solve(np.eye(self.n) - self.gamma * self.P, self.R)

    def with_xi(self, xi):
        return MarkovRewardProcess(self.P, self.R, self.gamma, xi, self.terminal, self.restart)


def save_mrp(mrp, path):
    """Write ``mrp`` in the plain-text matrix format.

    Layout: the header line, ``n <int>``, ``gamma <float>``, then the blocks
    ``P`` (n rows), ``R``, ``xi``, ``terminal`` and ``restart`` (one row each), every
    value printed with ``%.17g`` so the round trip is exact.
    """
    fmt = "%.17g"
    lines = [MRP_HEADER, f"n {mrp.n}", f"gamma {mrp.gamma:.17g}", "P"]
    lines += [" ".join(fmt % v for v in row) for row in mrp.P]
    lines += ["R", " ".join(fmt % v for v in mrp.R)]
    lines += ["xi", " ".join(fmt % v for v in mrp.xi)]
    lines += ["terminal", " ".join(str(int(t)) for t in mrp.terminal)]
    lines += ["restart", " ".join(fmt % v for v in mrp.restart)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mrp(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != MRP_HEADER:
        raise ValueError(f"{path}: missing header {MRP_HEADER!r}")
    n = int(lines[1].split()[1])
    gamma = float(lines[2].split()[1])
    rows = lambda i, k: np.array([[float(t) for t in ln.split()] for ln in lines[i:i + k]])
    i = lines.index("P") + 1
    P = rows(i, n)
    R = rows(lines.index("R") + 1, 1)[0]
    xi = rows(lines.index("xi") + 1, 1)[0]
    term = rows(lines.index("terminal") + 1, 1)[0].astype(bool)
    restart = rows(lines.index("restart") + 1, 1)[0]
    return MarkovRewardProcess(P, R, gamma, xi, term, restart)


# ---------------------------------------------------------------------------
# features

def _check_rank(Phi):
    s = np.linalg.svd(Phi, compute_uv=False)
    if s.size == 0 or s[-1] <= RANK_RTOL * s[0] or Phi.shape[1] > Phi.shape[0]:
        raise SingularBasis(
            f"feature matrix {Phi.shape} is not full column rank "
            f"(singular values {s[-1] if s.size else 0:.3g} .. {s[0] if s.size else 0:.3g})"
        )


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """Linear features, either a finite matrix ``Phi`` or a map ``fmap(state)``.

    Finite kinds (``explicit``, ``tabular``, ``noise_augmented``) carry
    ``Phi``; continuous kinds (``fourier``, ``rbf_grid``) carry ``fmap``.
    ``allow_rank_deficient`` skips the full-column-rank check, in which case
    MSPBE falls back to a pseudo-inverse of ``M``.
    """

    kind: str
    d: int
    Phi: Optional[np.ndarray] = None
    fmap: Optional[Callable] = None
    allow_rank_deficient: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.Phi is not None:
            Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
            if not np.all(np.isfinite(Phi)):
                raise ValueError("features must be finite")
            if not self.allow_rank_deficient:
                _check_rank(Phi)
            Phi.setflags(write=False)
            object.__setattr__(self, "Phi", Phi)

    @classmethod
    def explicit(cls, Phi, allow_rank_deficient=False):
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        return cls("explicit", Phi.shape[1], Phi=Phi, allow_rank_deficient=allow_rank_deficient)

    @classmethod
    def tabular(cls, n):
        return cls("tabular", n, Phi=np.eye(n))

    @classmethod
    def noise_augmented(cls, base, k_noise, seed, allow_rank_deficient=False):
        """Append ``k_noise`` fixed N(0, 1) columns to a finite basis.

        Padding a tabular basis always loses full column rank, so such
        callers must pass ``allow_rank_deficient=True``.
        """
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((base.n_states, k_noise))
        Phi = np.hstack([base.matrix(), noise])
        return cls("noise_augmented", Phi.shape[1], Phi=Phi,
                   allow_rank_deficient=allow_rank_deficient or base.allow_rank_deficient,
                   params={"k_noise": k_noise, "seed": seed, "d_base": base.d})

    @property
    def finite(self):
        return self.Phi is not None

    @property
    def n_states(self):
        return self.Phi.shape[0]

    def matrix(self):
        if self.Phi is None:
            raise ValueError(f"{self.kind} basis has no finite feature matrix")
        return self.Phi

    def features(self, s):
        if self.Phi is not None:
            return self.Phi[s]
        return self.fmap(s)


@dataclass(frozen=True, slots=True)
class TransitionSample:
    """One observed transition; ``start`` marks the first step of an episode."""

    s: object
    r: float
    s_next: object
    phi: np.ndarray
    phi_next: np.ndarray
    start: bool = False


def make_sample(basis, s, r, s_next, start=False):
    return TransitionSample(s, float(r), s_next, basis.features(s), basis.features(s_next), start)


# ---------------------------------------------------------------------------
# exact expectations and objectives

@dataclass(frozen=True, eq=False)
class TDExpectations:
    """Dense expectations of one (MRP, basis) pair, under ``xi``."""

    M: np.ndarray
    A_td: np.ndarray
    b_td: np.ndarray
    C: np.ndarray
    gamma: float
    rank_deficient: bool
    M_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.rank_deficient:
            inv = np.linalg.pinv(self.M, rcond=RANK_RTOL, hermitian=True)
        else:
            ev = np.linalg.eigvalsh(self.M)
            if ev[0] <= RANK_RTOL * ev[-1]:
                raise SingularBasis("feature covariance M is singular under xi")
            inv = np.linalg.inv(self.M)
        object.__setattr__(self, "M_inv", 0.5 * (inv + inv.T))

    def expected_td(self, theta):
        return self.b_td - self.A_td @ theta

    def m_solve(self, v):
        return self.M_inv @ v


def expectations(mrp, basis):
    Phi = basis.matrix()
    if Phi.shape[0] != mrp.n:
        raise DimensionMismatch(f"basis has {Phi.shape[0]} rows, MRP has {mrp.n} states")
    XPhi = mrp.xi[:, None] * Phi
    PPhi = mrp.P @ Phi
    M = Phi.T @ XPhi
    C = PPhi.T @ XPhi
    A_td = M - mrp.gamma * XPhi.T @ PPhi
    b_td = XPhi.T @ mrp.R
    return TDExpectations(M, A_td, b_td, C, mrp.gamma, basis.allow_rank_deficient)


def _vec(theta, d):
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != d:
        raise DimensionMismatch(f"theta has {theta.size} entries, basis has {d} features")
    return theta


def bellman_apply(mrp, V):
    V = np.asarray(V, dtype=float)
    if V.shape != (mrp.n,):
        raise DimensionMismatch(f"V has shape {V.shape}, expected ({mrp.n},)")
    return mrp.R + mrp.gamma * mrp.P @ V


def mspbe(mrp, basis, theta, ex=None):
    """Mean-square projected Bellman error ``E[d phi]' M^{-1} E[d phi]``."""
    ex = ex or expectations(mrp, basis)
    e = ex.expected_td(_vec(theta, basis.d))
    return float(max(e @ ex.m_solve(e), 0.0))


def mspbe_grad(mrp, basis, theta, ex=None):
    ex = ex or expectations(mrp, basis)
    e = ex.expected_td(_vec(theta, basis.d))
    return -2.0 * ex.A_td.T @ ex.m_solve(e)


def neu(mrp, basis, theta, ex=None):
    """Squared norm of the expected TD update."""
    ex = ex or expectations(mrp, basis)
    e = ex.expected_td(_vec(theta, basis.d))
    return float(e @ e)


def neu_grad(mrp, basis, theta, ex=None):
    ex = ex or expectations(mrp, basis)
    e = ex.expected_td(_vec(theta, basis.d))
    return -2.0 * ex.A_td.T @ e


def mstde(mrp, basis, theta):
    """Mean-square TD error ``E[delta^2]`` over ``xi`` and ``P``."""
    Phi = basis.matrix()
    v = Phi @ _vec(theta, basis.d)
    delta = mrp.R[:, None] + mrp.gamma * v[None, :] - v[:, None]
    return float(mrp.xi @ (mrp.P * delta ** 2).sum(axis=1))


def mstde_grad(mrp, basis, theta):
    Phi = basis.matrix()
    v = Phi @ _vec(theta, basis.d)
    delta = mrp.R[:, None] + mrp.gamma * v[None, :] - v[:, None]
    W = mrp.xi[:, None] * mrp.P * delta
    # d delta(s,s') / d theta = gamma phi(s') - phi(s)
    return 2.0 * (mrp.gamma * Phi.T @ W.sum(axis=0) - Phi.T @ W.sum(axis=1))


def value_error(mrp, basis, theta, norm="linf"):
    """Distance between the true value function and ``Phi theta``."""
    diff = mrp.value_function() - basis.matrix() @ _vec(theta, basis.d)
    if norm == "linf":
        return float(np.abs(diff).max())
    if norm == "xi_weighted":
        return float(np.sqrt(mrp.xi @ diff ** 2))
    raise ValueError(f"unknown norm {norm!r}")


def td_fixed_point(mrp, basis):
    """Minimiser of the MSPBE (min-norm when the system is singular)."""
    ex = expectations(mrp, basis)
    theta, *_ = np.linalg.lstsq(ex.A_td, ex.b_td, rcond=None)
    return theta


# ---------------------------------------------------------------------------
# the joint primal-dual linear system over x = [w; theta]

@dataclass(frozen=True, eq=False)
class GtdLinearSystem:
    A: np.ndarray
    b: np.ndarray
    M: np.ndarray
    eta: float

    @property
    def d(self):
        return self.M.shape[0]

    def solve(self):
        """Return ``(w, theta)`` solving ``A x = b`` (least squares if singular)."""
        x, *_ = np.linalg.lstsq(self.A, self.b, rcond=None)
        return x[: self.d], x[self.d:]


def build_gtd_system(mrp, basis, eta):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    ex = expectations(mrp, basis)
    if not basis.allow_rank_deficient:
        s = np.linalg.eigvalsh(ex.M)
        if s[0] <= RANK_RTOL * s[-1]:
            raise SingularBasis("feature covariance M is singular under xi")
    A = np.block([[eta * ex.M, eta * ex.A_td], [mrp.gamma * ex.C, ex.A_td]])
    b = np.concatenate([eta * ex.b_td, ex.b_td])
    return GtdLinearSystem(A, b, ex.M, float(eta))


def sampled_gtd_matrices(sample, gamma, eta):
    """Dense ``(A_t, b_t)`` for a single transition."""
    phi, phin = sample.phi, sample.phi_next
    dphi = phi - gamma * phin
    A = np.block([
        [eta * np.outer(phi, phi), eta * np.outer(phi, dphi)],
        [gamma * np.outer(phin, phi), np.outer(phi, dphi)],
    ])
    b = np.concatenate([eta * sample.r * phi, sample.r * phi])
    return A, b


# ---------------------------------------------------------------------------
# sampling

def sample_indices(mrp, n, rng):
    """Vectorised i.i.d. draws ``s ~ xi``, ``s' ~ P(s, .)``."""
    s = rng.choice(mrp.n, size=n, p=mrp.xi)
    cdf = np.cumsum(mrp.P, axis=1)
    u = rng.random(n)
    s_next = np.minimum((u[:, None] > cdf[s]).sum(axis=1), mrp.n - 1)
    return s, s_next


def iid_sampler(mrp, basis, seed, batch=4096) -> Iterator[TransitionSample]:
    """Endless stream of i.i.d. transitions with ``r = R(s)``."""
    rng = np.random.default_rng(seed)
    Phi = basis.matrix()
    while True:
        ss, sn = sample_indices(mrp, batch, rng)
        for s, s2 in zip(ss.tolist(), sn.tolist()):
            yield TransitionSample(s, float(mrp.R[s]), s2, Phi[s], Phi[s2], False)


def trajectory_sampler(mrp, basis, seed, s0=None) -> Iterator[TransitionSample]:
    """On-policy trajectory following ``P`` from ``s0`` (default ``s0 ~ xi``).

    Transitions out of terminal states are not emitted. The process restarts
    from ``mrp.restart`` and that first step is flagged ``start=True`` so
    traces can be reset.
    """
    rng = np.random.default_rng(seed)
    Phi = basis.matrix()
    cdf = np.cumsum(mrp.P, axis=1)
    s = int(rng.choice(mrp.n, p=mrp.restart)) if s0 is None else int(s0)
    start = True
    while True:
        if mrp.terminal[s]:
            s, start = int(rng.choice(mrp.n, p=mrp.restart)), True
            continue
        s2 = min(int(np.searchsorted(cdf[s], rng.random(), side="right")), mrp.n - 1)
        yield TransitionSample(s, float(mrp.R[s]), s2, Phi[s], Phi[s2], start)
        s, start = s2, False
