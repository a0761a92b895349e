"""Detect near-returns, close them into C^r periodic curves, and build the
tubular flow box with its nearest-point projection."""

import math

import numpy as np

from orbitclose import parse_field
from orbitclose.closing import (arclength, build_flowbox, curvature_radius,
                                hermite_close, interpolation_residual, project)
from orbitclose.flow import check_return_jets, find_returns, integrate, synthesize_event
from orbitclose.geometry import Euclidean, FlatTorus

# an irrational line flow on the torus never closes, but comes back close
torus = FlatTorus((1.0, 1.0))
line = parse_field("[1.0, 1.41421356]", 2)
events = find_returns(line, torus, [0.0, 0.0], alpha_max=0.05, horizon=100.0,
                      t_min_filter=0.5)
print(f"{len(events)} torus near-returns; best alpha ="
      f" {min(e.alpha for e in events):.4f}")

# return-jet closeness of the almost-periodic point: the deviation of the
# transported field jets is bounded by b L^r alpha with measured b, L
best = min(events, key=lambda e: e.alpha)
rep = check_return_jets(line, torus, best, order=2)
print("return-jet deviations:", [f"{d:.2e}" for d in rep.deviations],
      "<= bound", f"{rep.bound:.2e}")

# close a rotation-field event with a prescribed 1e-4 gap
E2 = Euclidean(2)
rot = parse_field("[-y, x]", 2)
ev = synthesize_event(rot, E2, [1.0, 0.0], 2 * math.pi, 1e-4)
traj = integrate(rot, E2, ev.x0, (0.0, ev.T), rtol=1e-11, atol=1e-11)
orbit = hermite_close(traj, ev, order=2)
print("closure bitwise:", np.array_equal(orbit.point(0.0), orbit.point(orbit.T)))
print("endpoint derivative residuals:", [f"{r:.2e}" for r in orbit.endpoint_residuals])

prof = interpolation_residual(orbit, rot, samples=400)
print("defect sup per order:", [f"{v:.2e}" for v in prof.per_order_sup],
      " measured H =", f"{prof.H:.3f}")

arc = arclength(orbit)
curv = curvature_radius(orbit)
print(f"arc length {arc.total:.6f}, Rc_min {curv.rc_min:.6f}")

box = build_flowbox(orbit, "auto")
print(f"auto tube radius eps = {box.epsilon:.3f}; overlaps: {box.overlaps}")

x = orbit.point(1.0) * 1.1
pr = project(box, x)
print(f"projection of {x}: foot parameter {pr.nearest.t:.4f}, "
      f"distance {pr.nearest.d:.4f}, unique: {pr.unique}")
