"""Solution derivatives of y' = exp(-y - 1/2) and the factorial bounds they meet.

Run: python demos/derivative_bounds.py
"""

import math

from odecover.derivs import certify_bounds, expand_autonomous, expand_nonautonomous, solution_derivatives
from odecover.odes import builtin_ode, extremal_ode

ode = extremal_ode()
values = solution_derivatives(ode, 8, 0.0, -0.5)
print("k   y^(k)(0)      (k-1)!")
for k in range(1, 9):
    print(f"{k:<3d} {values[k]:<13.6g} {math.factorial(k - 1)}")

print("\nterms in the expansion of y^(k):")
for k in range(1, 9):
    a, n = expand_autonomous(k), expand_nonautonomous(k)
    print(f"k={k}: autonomous {len(a.terms):4d} distinct / {a.total_multiplicity:6d} total, "
          f"nonautonomous {len(n.terms):4d} / {n.total_multiplicity}")

print("\ncertificates for y' = sin(x + y):")
for c in certify_bounds(builtin_ode("sinxy"), 6):
    print(f"k={c.order}  max|y^(k)| = {c.observed_max:.4f}  bound = {c.bound:g}")
