"""
Projected natural gradient on a badly scaled quadratic
======================================================

Minimise ``x'Ax/2 + b'x`` over ``{x >= 0, x1 + x2 <= 1}`` with
``A = diag(1, 0.01)``. Projecting back under the metric keeps the fixed point
correct; a Euclidean projection after a natural step does not.
"""

####################################################################

import numpy as np

from proxrl.png import CASE_OPTIMUM, case_objective, quadratic_case_study

for alg in ("psg", "png", "png_euclid"):
    traj = quadratic_case_study(alg)
    end = traj[-1]
    print(f"{alg:10s} end {np.round(end, 5)}  dist {np.linalg.norm(end - CASE_OPTIMUM):.2e}"
          f"  f {case_objective(end):.6f}")
print(f"optimum    {np.round(CASE_OPTIMUM, 5)}  f {case_objective(CASE_OPTIMUM):.6f}")

####################################################################
# Steps needed to get within 1e-3 of the optimum.

for alg in ("psg", "png"):
    d = np.linalg.norm(quadratic_case_study(alg) - CASE_OPTIMUM, axis=1)
    hit = np.flatnonzero(d <= 1e-3)
    print(alg, "first within 1e-3 at", int(hit[0]) if hit.size else None)
