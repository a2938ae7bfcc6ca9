"""
Mirror Q-learning on mountain car
=================================

A third-order Fourier basis with one block per action. Zero initial weights
are optimistic under -1 rewards, so a greedy policy explores on its own.
"""

####################################################################

import numpy as np

from proxrl.envs import fourier_basis, mountain_car_reset, mountain_car_step
from proxrl.td import QSample, TdIterate, action_features, epsilon_greedy, mirror_q_step

ACTIONS = (-1, 0, 1)
basis = fourier_basis(3)
phi, phi_all = action_features(basis.fmap, len(ACTIONS))
rng = np.random.default_rng(0)
it = TdIterate.init(np.zeros(basis.d * len(ACTIONS)), gamma=1.0, alpha=0.005, lam=0.9)

####################################################################
# Episodes, capped at 1000 steps each.

lengths = []
for ep in range(40):
    s = mountain_car_reset(rng)
    a = epsilon_greedy(it.w, phi_all(s), 0.0, rng)
    start = True
    for t in range(1000):
        s2, r = mountain_car_step(s, ACTIONS[a])
        nxt = None if s2.terminal else phi_all(s2)
        it, a2 = mirror_q_step(it, QSample(r, phi(s, a), nxt, start), epsilon=0.0, rng=rng)
        start = False
        if a2 is None:
            break
        s, a = s2, a2
    lengths.append(t + 1)

print("episode lengths:", lengths)
print("mean first 10 / last 10:", np.mean(lengths[:10]), np.mean(lengths[-10:]))
