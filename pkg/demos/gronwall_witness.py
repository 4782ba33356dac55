"""The pair y' = y, z' = z with y(0) = 1, z(0) = 0.9 meets its stability bound with equality.

Run: python demos/gronwall_witness.py
"""

import numpy as np

from odecover.gronwall import harmonic_pair, linear_pair, verify_pair

grid = np.linspace(0, 1, 11)
rep = verify_pair(linear_pair(L=1.0, y0=1.0, z0=0.9), grid, enforce_domain=False)
print("linear pair ratios:", np.round(rep.ratios, 12))

pair = harmonic_pair(eps=0.05, y0=(0.6, 0.0), z0=(0.55, 0.1), b=2.0)
for k in (0, 1):
    r = verify_pair(pair, grid, k=k, enforce_domain=False)
    print(f"harmonic pair, derivative {k}: max ratio {r.max_ratio:.4f} at x={r.worst_x:.2f}")
