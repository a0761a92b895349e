"""Geodesics and parallel transport on the round sphere.

The sphere uses a stereographic chart pair internally (handoff at
|u| = 1.5 R); points and tangents at the API are embedded 3-vectors, so
inner products are the ambient ones.
"""

import math

import numpy as np

from orbitclose.geometry import Sphere2, geodesic, parallel_transport, exp_map

S2 = Sphere2(1.0)
rng = np.random.default_rng(0)

p = np.array([0.0, 0.0, -1.0])      # south pole
v = np.array([1.0, 0.3, 0.0])
v *= math.pi / np.linalg.norm(v)    # length pi*R: endpoint is the antipode

seg = geodesic(S2, p, v, 1.0)
print("exp_map of a length-pi vector lands at", exp_map(S2, p, v),
      "(antipode of", p, ")")

w1 = np.array([0.0, 1.0, 0.0])
w2 = np.array([1.0, 0.0, 0.0])
t1 = parallel_transport(S2, seg, w1)
t2 = parallel_transport(S2, seg, w2)
print("inner product before:", w1 @ w2, " after transport:", f"{t1 @ t2:.2e}")

# holonomy around a latitude loop at polar angle theta0: 2*pi*(1 - cos theta0)
theta0 = 0.8
a = math.tan(theta0 / 2.0)


def latitude(phi):
    return (np.array([a * math.cos(phi), a * math.sin(phi)]),
            np.array([-a * math.sin(phi), a * math.cos(phi)]))


w0 = np.array([1.0, 0.0])
w1 = S2.parallel_transport_curve(latitude, (0.0, 2 * math.pi), w0, chart=1)
rot = math.atan2(w0[0] * w1[1] - w0[1] * w1[0], float(w0 @ w1))
print(f"holonomy angle {abs(rot):.8f} vs 2*pi*(1-cos {theta0}) ="
      f" {2 * math.pi * (1 - math.cos(theta0)):.8f}")
