"""Freeze a pendulum libration orbit at its slow point: the perturbed field
vanishes there exactly and nearby orbits take forever to pass -- a
homoclinic point by surgery."""

import numpy as np

from orbitclose.catalog import catalog_field
from orbitclose.closing import build_flowbox, hermite_close
from orbitclose.flow import ReturnEvent, find_returns, integrate
from orbitclose.perturbation import make_bump, perturb_homoclinic

PEND, CYL = catalog_field("pendulum")
x0 = np.array([0.0, 1.999])    # near-separatrix libration

events = find_returns(PEND, CYL, x0, alpha_max=1e-6, horizon=40.0,
                      t_min_filter=5.0)
T = events[0].T
print(f"libration period T = {T:.6f}")

traj = integrate(PEND, CYL, x0, (0.0, T), rtol=1e-11, atol=1e-11)
orbit = hermite_close(traj, ReturnEvent(x0=x0, T=T, x_ret=traj(T), alpha=0.0), 2)
box = build_flowbox(orbit, "auto")

ts = np.linspace(0, orbit.T, 4096, endpoint=False)
speeds = np.array([orbit.speed(t) for t in ts])
y_slow = orbit.point(float(ts[int(np.argmin(speeds))]))
print("slow point:", y_slow, " |X| =", np.linalg.norm(PEND.value(y_slow)))

Y = perturb_homoclinic(PEND, orbit, y_slow, tau=0.5,
                       bump=make_bump(box.epsilon, order=2), box=box)
print("Y(y_slow) =", Y.value(y_slow), "(exact zero)")
print("reparametrization derivative bounds:", Y.p_derivative_bounds,
      "<= 1 + tau =", 1.5)

arc = Y.arc
s0 = (Y.freeze.s_star + 1.5 * Y.freeze.w) % arc.total
x_start = orbit.point(float(arc.t_of_s(s0)))
for t_end in (10.0, 25.0, 50.0):
    tr = integrate(Y, CYL, x_start, (0.0, t_end), rtol=1e-9, atol=1e-9)
    print(f"  distance to y_slow at t={t_end:5.1f}:"
          f" {CYL.distance(tr(t_end), y_slow):.2e}")
