"""Benchmark problems at desk scale.

Finite problems return ``(MarkovRewardProcess, FeatureBasis)``. Mountain
car is continuous and only exposes its step function plus feature maps.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensions
from .mdp import FeatureBasis, MarkovRewardProcess, stationary_distribution

BAIRD_THETA0 = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0])
BAIRD_THETA0.setflags(write=False)

TWO_STATE_XI_FLOOR = 1e-8


def baird_star(gamma=0.99):
    """Seven-state star counterexample with the classic eight features.

    Every state jumps to the hub (state 6) and all rewards are zero. The
    feature matrix has more columns than rows, so the basis is flagged
    rank-deficient and objectives use a pseudo-inverse.
    """
    n, d = 7, 8
    Phi = np.zeros((n, d))
    for i in range(6):
        Phi[i, i] = 2.0
        Phi[i, 7] = 1.0
    Phi[6, 6] = 1.0
    Phi[6, 7] = 2.0
    P = np.zeros((n, n))
    P[:, 6] = 1.0
    mrp = MarkovRewardProcess(P, np.zeros(n), gamma, np.full(n, 1.0 / n))
    return mrp, FeatureBasis.explicit(Phi, allow_rank_deficient=True)


_DEPENDENT = np.array([
    [1.0, 0.0, 0.0],
    [1 / np.sqrt(2), 1 / np.sqrt(2), 0.0],
    [1 / np.sqrt(3), 1 / np.sqrt(3), 1 / np.sqrt(3)],
    [0.0, 1 / np.sqrt(2), 1 / np.sqrt(2)],
    [0.0, 0.0, 1.0],
])


def random_walk_5(basis_kind="tabular", gamma=0.99):
    """Five-state chain with an absorbing state past each end.

    States 0..4 are the chain, 5 and 6 the left and right terminals. Falling
    off the left end pays -1 and off the right end +1, so the expected
    rewards of the edge states are -1/2 and +1/2. Episodes restart in the
    centre; ``xi`` is the stationary distribution of that restarted chain.
    Terminal states have all-zero features.
    """
    n = 7
    P = np.zeros((n, n))
    for i in range(5):
        P[i, i - 1 if i > 0 else 5] = 0.5
        P[i, i + 1 if i < 4 else 6] = 0.5
    P[5, 5] = P[6, 6] = 1.0
    R = np.zeros(n)
    R[0], R[4] = -0.5, 0.5
    restart = np.zeros(n)
    restart[2] = 1.0
    loop = P.copy()
    loop[5:] = restart
    xi = stationary_distribution(loop)
    term = np.array([False] * 5 + [True] * 2)
    mrp = MarkovRewardProcess(P, R, gamma, xi, term, restart)

    if basis_kind == "tabular":
        F = np.eye(5)
    elif basis_kind == "inverted":
        F = 0.5 * (np.ones((5, 5)) - np.eye(5))
    elif basis_kind == "dependent":
        F = _DEPENDENT
    else:
        raise ValueError(f"unknown random-walk basis {basis_kind!r}")
    Phi = np.vstack([F, np.zeros((2, F.shape[1]))])
    return mrp, FeatureBasis.explicit(Phi)


def two_state(gamma=0.9, xi_floor=TWO_STATE_XI_FLOOR):
    """Two states, both moving to state 1; rewards (0, -1); features (1, 2).

    The stationary weighting is (0, 1); the first entry is floored at
    ``xi_floor`` to keep the weighting strictly positive.
    """
    P = np.array([[0.0, 1.0], [0.0, 1.0]])
    R = np.array([0.0, -1.0])
    xi = np.array([xi_floor, 1.0 - xi_floor])
    return MarkovRewardProcess(P, R, gamma, xi), FeatureBasis.explicit([[1.0], [2.0]])


def random_mdp(n_states=100, n_actions=5, n_features=51, seed=0, gamma=0.95):
    """Random MDP evaluated under a fixed random policy.

    Transition rows and the policy are normalised uniform draws, rewards are
    uniform on [0, 1), and features are ``n_features - 1`` uniform columns
    plus a constant column. ``xi`` is the on-policy stationary distribution.
    """
    if min(n_states, n_actions, n_features) < 1 or n_features > n_states:
        raise InvalidDimensions(
            f"need positive sizes with n_features <= n_states, got "
            f"({n_states}, {n_actions}, {n_features})"
        )
    rng = np.random.default_rng(seed)
    Pa = rng.random((n_states, n_actions, n_states))
    Pa /= Pa.sum(axis=-1, keepdims=True)
    pi = rng.random((n_states, n_actions))
    pi /= pi.sum(axis=-1, keepdims=True)
    P = np.einsum("sa,sat->st", pi, Pa)
    P /= P.sum(axis=1, keepdims=True)
    R = rng.random(n_states)
    Phi = np.hstack([rng.random((n_states, n_features - 1)), np.ones((n_states, 1))])
    mrp = MarkovRewardProcess(P, R, gamma, stationary_distribution(P))
    return mrp, FeatureBasis.explicit(Phi)


def gridworld_noisy(size=10, n_noise=0, seed=0, gamma=0.9):
    """Grid navigation to the bottom-right corner under a fixed policy.

    The policy moves right until the last column, then down. Each move costs
    -1; the goal is absorbing with reward 0. Features are tabular plus
    ``n_noise`` fixed N(0, 1) columns; with noise the basis is
    rank-deficient by construction.
    """
    n = size * size
    goal = n - 1
    P = np.zeros((n, n))
    R = np.full(n, -1.0)
    for s in range(n):
        r, c = divmod(s, size)
        if s == goal:
            P[s, s] = 1.0
            R[s] = 0.0
        elif c < size - 1:
            P[s, s + 1] = 1.0
        else:
            P[s, s + size] = 1.0
    term = np.zeros(n, dtype=bool)
    term[goal] = True
    mrp = MarkovRewardProcess(P, R, gamma, np.full(n, 1.0 / n), term)
    base = FeatureBasis.tabular(n)
    if n_noise == 0:
        return mrp, base
    return mrp, FeatureBasis.noise_augmented(base, n_noise, seed, allow_rank_deficient=True)


# ---------------------------------------------------------------------------
# mountain car

MC_POS = (-1.2, 0.6)
MC_VEL = (-0.07, 0.07)
MC_GOAL = 0.5


@dataclass(frozen=True)
class MountainCarState:
    position: float
    velocity: float

    @property
    def terminal(self):
        return self.position >= MC_GOAL

    def as_array(self):
        return np.array([self.position, self.velocity])


def mountain_car_reset(rng):
    return MountainCarState(float(rng.uniform(-0.6, -0.4)), 0.0)


def mountain_car_step(state, action):
    """Classic dynamics; reward -1 per step, episode ends at ``position >= 0.5``."""
    if action not in (-1, 0, 1):
        raise ValueError(f"action must be -1, 0 or +1, got {action}")
    v = state.velocity + 0.001 * action - 0.0025 * np.cos(3.0 * state.position)
    v = float(np.clip(v, *MC_VEL))
    x = float(np.clip(state.position + v, *MC_POS))
    if x == MC_POS[0]:
        v = 0.0
    return MountainCarState(x, v), -1.0


def _scale(s, ranges):
    s = s.as_array() if isinstance(s, MountainCarState) else np.asarray(s, dtype=float)
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    return (s - lo) / (hi - lo)


def fourier_basis(order, ranges=(MC_POS, MC_VEL)):
    """Full Fourier cosine basis over the unit cube, ``(order+1)**dims`` terms."""
    dims = len(ranges)
    coeffs = np.array(list(itertools.product(range(order + 1), repeat=dims)), dtype=float)

    def fmap(s):
        return np.cos(np.pi * coeffs @ _scale(s, ranges))

    return FeatureBasis("fourier", coeffs.shape[0], fmap=fmap,
                        params={"order": order, "coeffs": coeffs, "ranges": ranges})


def rbf_grid(resolutions=(2, 4, 8, 16, 32), ranges=(MC_POS, MC_VEL), constant=True):
    """Stacked Gaussian RBF grids, one ``k x k`` grid per resolution ``k``.

    Each width equals the grid spacing of its resolution on the unit square.
    The default gives 1364 bumps plus one constant feature.
    """
    centers, widths = [], []
    dims = len(ranges)
    for k in resolutions:
        axis = np.linspace(0.0, 1.0, k)
        grid = np.array(list(itertools.product(axis, repeat=dims)))
        centers.append(grid)
        widths.append(np.full(grid.shape[0], 1.0 / (k - 1) if k > 1 else 1.0))
    C = np.vstack(centers)
    W = np.concatenate(widths)

    def fmap(s):
        u = _scale(s, ranges)
        f = np.exp(-0.5 * ((C - u) ** 2).sum(axis=1) / W ** 2)
        return np.append(f, 1.0) if constant else f

    d = C.shape[0] + int(constant)
    return FeatureBasis("rbf_grid", d, fmap=fmap,
                        params={"resolutions": tuple(resolutions), "ranges": ranges})
