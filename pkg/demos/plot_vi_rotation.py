"""
Extragradient versus basic projection on a rotation
===================================================

``F(x) = (x2, -x1)`` is monotone but not strongly monotone. Plain projection
steps spiral outward while extragradient contracts to the origin.
"""

####################################################################

import numpy as np

from proxrl.vi import basic_projection_solve, extragradient_solve, rotation_problem

vi = rotation_problem()
x0 = np.ones(2)

bp = basic_projection_solve(vi, 10.0, x0, max_iter=2000)
eg = extragradient_solve(vi, 0.1, x0, max_iter=10_000)
print(f"basic projection: converged={bp.converged}  |x|={np.linalg.norm(bp.x):.3f}")
print(f"extragradient:    converged={eg.converged}  iterations={eg.iterations}"
      f"  |x|={np.linalg.norm(eg.x):.2e}")
