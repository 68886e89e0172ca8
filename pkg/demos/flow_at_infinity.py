"""Dynamics on the sphere at infinity: count equilibria, descend energy.

Compactifying the phase space maps grow-up trajectories onto a
hemisphere whose equator carries its own flow. The equilibria there are
the normalized modes +/- phi_j with j^2 <= b / a_inf, and the flow
descends a Dirichlet-type energy until it parks on one of them. The
script first tabulates equilibrium counts against b, then runs the
sphere flow from a random state and prints the energy staircase.

Run from the repository root:

    python3 demos/flow_at_infinity.py
"""

import numpy as np

from sturmlab.field import SpatialGrid, StateField, field_from_modes, norm, eigenmode
from sturmlab.compactify import (
    infinity_equilibria,
    sphere_flow_run,
    plane_flow_rates,
)

grid = SpatialGrid(257)

print("equilibria at infinity (a_inf = 1):")
for b in (0.5, 1.0, 5.0, 17.0):
    eqs = infinity_equilibria(1.0, b, grid)
    ids = " ".join(e.node_id() for e in sorted(eqs, key=lambda e: (e.j, -e.sign)))
    print(f"    b = {b:5.1f}: {len(eqs):2d} points   {ids}")
print()

rng = np.random.default_rng(11)
chi0 = field_from_modes(grid, rng.standard_normal(32))
chi0 = (1.0 / norm(chi0)) * chi0
res = sphere_flow_run(chi0, 1.0, t_max=40.0)

print("sphere flow from a random unit state:")
stride = max(1, len(res.times) // 12)
for t, e in list(zip(res.times, res.energies))[::stride]:
    print(f"    t = {t:7.3f}   E = {e:12.6f}")
sign = "+" if res.limit_sign > 0 else "-"
target = res.limit_sign * eigenmode(res.limit_index, grid).values
dist = norm(res.final_chi() - StateField(grid, target))
print(f"    limit: {sign}phi{res.limit_index}, distance {dist:.2e}, "
      f"final E = {res.energies[-1]:.6f} (mode energy j^2/2 = "
      f"{res.limit_index ** 2 / 2.0})")
print()

print("linearized rates in the plane chart at phi_j (a_inf = 1):")
for j in (2, 1, 0):
    rates = plane_flow_rates(j, 1.0, [k for k in range(4) if k != j])
    terms = ", ".join(f"k={k}: {r:+.0f}" for k, r in rates)
    print(f"    at phi{j}: {terms}")
print("Positive rates point down the mode ladder, so within the equator")
print("phi_j connects to every phi_k with k < j.")
