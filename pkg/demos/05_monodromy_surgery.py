"""Section return maps, Floquet multipliers, and eigenvalue surgery."""

import math

import numpy as np

from orbitclose.catalog import catalog_field
from orbitclose.closing import hermite_close
from orbitclose.flow import ReturnEvent, integrate, return_time_map
from orbitclose.hyperbolicity import (check_hyperbolic_margin,
                                      eigenvalue_adjuster, make_cross_section,
                                      section_monodromy)
from orbitclose.perturbation import make_bump

# planar limit cycle: the analytic section multiplier is e^{-4 pi}
LC, E2 = catalog_field("limit_cycle_r3")
rep = section_monodromy(LC, E2, np.array([1.0, 0.0]), 0.0, 2 * math.pi)
mult = float(np.real(rep.eigenvalues[0]))
print(f"limit-cycle multiplier {mult:.6e} vs e^(-4 pi) ="
      f" {math.exp(-4 * math.pi):.6e}")
print("splitting dims:", rep.splitting_dims, " margin:", f"{rep.margin:.6f}")

# skew system: multipliers {e^{-4 pi}, mu}; drive mu = 0.9 to exactly 1
SKEW, E3 = catalog_field("linear_skew_mu", mu=0.9)
x0 = np.array([1.0, 0.0, 0.0])
T = 2 * math.pi
mono = section_monodromy(SKEW, E3, x0, 0.0, T)
print("skew multipliers:", np.sort(np.abs(mono.eigenvalues)))
ok, _ = check_hyperbolic_margin(mono, 0.05)
print("hyperbolic with margin 0.05:", ok)

traj = integrate(SKEW, E3, x0, (0.0, T), rtol=1e-12, atol=1e-12)
orbit = hermite_close(traj, ReturnEvent(x0=x0, T=T, x_ret=traj(T), alpha=0.0), 2)
res = eigenvalue_adjuster(SKEW, E3, orbit, mono, np.array([0.0, 0.0, 1.0]),
                          make_bump(0.35, order=2))
print(f"surgery: mu {res.mu_before:.3f} -> {res.mu_after:.12f}")
print("off-target before/after:", res.off_target_before, res.off_target_after)

sec = make_cross_section(SKEW, E3, x0)
T_y, _ = return_time_map(SKEW, E3, sec, x0, horizon=10.0, with_gradient=False)
T_z, _ = return_time_map(res.field, E3, sec, x0, horizon=10.0,
                         with_gradient=False)
print(f"return time preserved: {abs(T_y - T_z):.2e}")
