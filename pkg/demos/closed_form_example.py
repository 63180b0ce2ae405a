"""
An explicit solution and its discrete residual
==============================================

The axisymmetric family ``u = (1 - y)^alpha`` with ``y = x_{n+1}``
solves the equation exactly for a right-hand side we can write down.  Here
we put it on three grids and watch the residual.
"""

import numpy as np

from cmk import spheregrid as sg
from cmk.problem import ProblemSpec, prop53_example, prop53_f, residual

n, k, p0 = 3, 2, 0.2

# the right-hand side at the equator
print("f at y=0:", prop53_f(0.0, n, k, p0))

# residual of the exact u, sampled on the grid
for J in (64, 128, 256):
    grid = sg.build_grid(n, "axisym", J)
    u, f, alpha = prop53_example(n, k, p0, grid)
    r = residual(u, ProblemSpec(n, k, p0, f)).values
    worst = int(np.argmax(np.abs(r)))
    print(f"J={J:4d}  alpha={alpha:.4f}  sup|R|={np.abs(r).max():.3e}  at theta={grid.theta[worst]:.4f}")

# The largest residual lives at the node nearest the north pole.  There u
# behaves like theta^(2 alpha), so the radii go like theta^(2 alpha - 2) and
# for k = 2 the sup residual shrinks only like h^(4 alpha - 4).
