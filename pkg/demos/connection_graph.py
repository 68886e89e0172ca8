"""Assemble and verify the unbounded attractor for a minimal grow-up system.

For u_t = u_xx + b*u with 0 < b < 1 the only bounded equilibrium is 0
and the sphere at infinity carries just +/- phi_0. The attractor is
three nodes with two heteroclinics 0 -> +/-phi_0. This script runs the
full pipeline (equilibrium scan, linearization, prediction, trajectory
verification) and writes the verified graph to demos/minimal_graph.dot.

Run from the repository root:

    python3 demos/connection_graph.py
"""

import os

from sturmlab.field import SpatialGrid
from sturmlab.dynamics import StepController, preset_spec
from sturmlab.connection import Scenario, assemble_attractor

grid = SpatialGrid(257)
coeff = preset_spec("linear", b=0.5)
ctrl = StepController(dt_init=1e-3, dt_max=1e-1, t_max=80.0,
                      growup_norm_threshold=1e6)
scenario = Scenario(coeff=coeff, ctrl=ctrl, grid=grid,
                    eta_min=-2.0, eta_max=2.0, scan_n=101, name="minimal")

report = assemble_attractor(scenario)

print("bounded equilibria:")
for e in report.bounded:
    print(f"    {e.node_id()}: eta = {e.eta:+.6f}, morse index {e.morse_index}")
print("equilibria at infinity:")
for p in report.infinity:
    print(f"    {p.node_id()}")
print("edges:")
for e in report.graph.edges:
    print(f"    {e.source} -> {e.target}  [{e.kind}]  {e.status}")
print(f"unverified predictions: {report.unverified}")
print(f"unpredicted captures:   {report.unpredicted}")
print(f"Sturm permutation:      {report.to_json_dict()['sturm_permutation']}")

out = os.path.join(os.path.dirname(__file__), "minimal_graph.dot")
with open(out, "w") as fh:
    fh.write(report.to_dot())
print(f"wrote {out} (render with: dot -Tpng {out} -o graph.png)")
