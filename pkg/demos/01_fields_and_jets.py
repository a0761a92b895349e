"""Parse vector fields, take exact derivatives, and estimate Lipschitz
constants.

The DSL accepts infix arithmetic, sin/cos/exp/log/sqrt, and a bracketed
component list. Derivatives come from truncated-Taylor jets on the
expression tree, so they are exact to roundoff.
"""

import numpy as np

from orbitclose import Box, estimate_lipschitz, eval_jet, lie_derivative, parse_field

lorenz = parse_field("[s*(y-x), x*(r-z)-y, x*y-b*z]", 3, name="lorenz",
                     parameters={"s": 10.0, "r": 28.0, "b": 8.0 / 3.0})
print("lorenz at (1,1,1):", lorenz.value((1.0, 1.0, 1.0)))

jet = eval_jet(lorenz, (1.0, 1.0, 1.0), 0.0, 2)
print("Jacobian:\n", jet.jacobian())
print("d^2 X_2 / dx dy =", jet.partial((1, 1, 0, 0))[2], "(the xy term)")

# iterated Lie derivatives: [h, X] = dX.h - dh.X, nested
X = parse_field("[x^2, 0.0]", 2)
h = parse_field("[1.0, 0.0]", 2)
print("[h, [h, X]] at (1.5, 0):", lie_derivative(X, [h, h], (1.5, 0.0)))

# Lipschitz table over a box: per-order operator norms of derivative tensors
est = estimate_lipschitz(lorenz, Box([-20, -25, 0], [20, 25, 50]), 2, 5)
print("per-order Lipschitz constants:", [f"{v:.3g}" for v in est.per_order])
print("L =", f"{est.L:.6g}", "over", est.sample_count, "grid points")
