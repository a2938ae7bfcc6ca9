"""
Off-policy stability on Baird's star
====================================

Expected-update TD(0) blows up on the star counterexample. The saddle-point
methods stay bounded under the stepsizes pinned in ``configs/baird_*.cfg``.
"""

####################################################################
# Setup

import numpy as np

from proxrl.envs import BAIRD_THETA0, baird_star
from proxrl.gtd import run_expected

mrp, basis = baird_star()

####################################################################
# TD(0) diverges under the full expected update.

_, td = run_expected("td", mrp, basis, 1000, theta0=BAIRD_THETA0, alpha=0.1)
print(f"td      mspbe 0 -> 1000: {td['mspbe'][0]:.3e} -> {td['mspbe'][-1]:.3e}")

####################################################################
# Gradient TD and the extragradient (MP) variants.

for alg in ("gtd2", "tdc", "gtd2_mp", "tdc_mp"):
    _, tr = run_expected(alg, mrp, basis, 2000, theta0=BAIRD_THETA0, alpha=0.01, eta=0.5)
    x = tr["mspbe"]
    print(f"{alg:8s} mspbe @0 {x[0]:9.3f}  @500 {x[500]:9.4f}  @2000 {x[-1]:9.5f}"
          f"  max {np.max(x):9.3f}")
