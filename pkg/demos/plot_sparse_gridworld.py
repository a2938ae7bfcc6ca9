"""
Sparse mirror TD with noise features
====================================

Tabular gridworld features padded with random Gaussian columns. The l1 prox
in the dual space zeroes coordinates; larger ``beta`` zeroes more.
"""

####################################################################

import numpy as np

from proxrl.envs import gridworld_noisy
from proxrl.mdp import iid_sampler
from proxrl.td import TdIterate, constant, run_td, sparse_mirror_td_step

mrp, basis = gridworld_noisy(5, n_noise=20, seed=0)
V = mrp.value_function()
Phi = basis.matrix()

for beta in (0.0, 1e-3, 1e-2, 1e-1):
    it = TdIterate.init(np.zeros(basis.d), mrp.gamma, alpha=constant(0.02), beta_sparsity=beta)
    it = run_td(sparse_mirror_td_step, it, iid_sampler(mrp, basis, 0), 20_000)
    zeros = int(np.sum(np.abs(it.w) <= 1e-8))
    err = np.abs(Phi @ it.w - V).max()
    print(f"beta {beta:7.0e}: zero weights {zeros:3d}/{basis.d}  max value error {err:.3f}")
