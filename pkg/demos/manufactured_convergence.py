"""
Grid convergence on a manufactured solution
===========================================

Pick a smooth target ``u``, compute the ``f`` it produces, solve the equation
from scratch and compare.  Each grid is three times finer than the last, so
coarse nodes sit exactly on fine nodes.
"""

from cmk import diagnostics as dg

for n, k, kind, res in [(3, 2, "axisym", [32, 96, 288]), (2, 1, "full2d", [(8, 16), (24, 48)])]:
    table = dg.manufactured_convergence(n, k, 0.5, kind, res, amplitude=0.1)
    print(f"n={n} k={k} {kind}")
    for row in table["rows"]:
        est = row["richardson_estimate"]
        est = "-" if est is None else f"{est:.3e}"  # needs a coarser grid
        print(
            f"  {str(row['resolution']):>10}  error={row['error']:.3e}"
            f"  richardson={est}  newton/step={row['newton_per_step']:.1f}"
        )
