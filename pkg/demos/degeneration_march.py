"""
Marching eps down toward a degenerate solution
==============================================

For small ``p0`` the explicit family loses positivity at the poles.  We
solve the regularized problem for a shrinking ``eps`` and follow the minimum
of ``u`` along with the smallest principal radius at the node next to the pole.
"""

import numpy as np

from cmk import spheregrid as sg
from cmk.problem import check_f_convexity, make_spec
from cmk.solver import epsilon_continuation

n, k, p0 = 3, 2, 0.1
grid = sg.build_grid(n, "axisym", 64)
spec = make_spec(grid, k, p0, f="prop53")

cert = check_f_convexity(spec.f, k, p0)
print("convexity certificate:", cert.passes)

schedule = [0.1 * 4.0**-m for m in range(8)]
for eps, u, rep in epsilon_continuation(spec, schedule=schedule):
    lam = np.linalg.eigvalsh(sg.assemble_w(grid, u.values, eps))[0, 0]
    print(
        f"eps={eps:.2e}  min u={u.values.min():.3e}  lower bound={rep.extra['lower_bound']:.3e}"
        f"  pole radius={lam:.4f}  newton={sum(rep.iterations)}"
    )
