"""Charted Riemannian geometry on Euclidean n-space, the flat torus, and the
round 2-sphere.

Boundary representation: points and tangent vectors on the flat kinds are
plain chart coordinates. On the sphere they are vectors in the isometric
embedding R^3 (so norms and inner products are the ambient ones); the
stereographic chart pair, with handoff at |u| = 1.5 R, is used internally for
every ODE solve. Chart-level objects (metric, Christoffel symbols) always
take chart coordinates.

Torus axes may be aperiodic (period None), which gives cylinders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .errors import ChartDomainError, GeodesicAmbiguous
from .jets import Jet
from .odeint import integrate_ode


# --------------------------------------------------------------------------
# Geodesic segments
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicSegment:
    """Geodesic with dense parameter access; ``speed`` is the constant g-norm
    of the velocity."""

    manifold: object
    start: np.ndarray
    initial_velocity: np.ndarray
    span: tuple
    speed: float
    pieces: tuple

    def point(self, tau):
        return self.manifold._segment_point(self, tau)

    def velocity(self, tau):
        return self.manifold._segment_velocity(self, tau)

    def end_point(self):
        return self.point(self.span[1])


# --------------------------------------------------------------------------
# Base class
# --------------------------------------------------------------------------

class ChartedManifold:
    kind = "abstract"

    def __init__(self, dimension):
        self.dimension = dimension

    # chart-level metric interface -----------------------------------------

    def chart_metric(self, x, chart=0):
        return np.eye(self.dimension)

    def metric_jets(self, x, order, chart=0):
        """n x n table of Jets of the metric components."""
        n = self.dimension
        one = Jet.constant(1.0, n, order)
        zero = Jet.constant(0.0, n, order)
        return [[one if i == j else zero for j in range(n)] for i in range(n)]

    def chart_inner(self, x, u, v, chart=0):
        g = self.chart_metric(x, chart)
        return float(np.asarray(u) @ g @ np.asarray(v))

    def chart_norm(self, x, v, chart=0):
        return math.sqrt(max(self.chart_inner(x, v, v, chart), 0.0))

    def basis_norm_sum(self, x, chart=0):
        g = self.chart_metric(x, chart)
        return float(np.sum(np.sqrt(np.diag(g))))

    def check_chart_domain(self, x, chart=0):
        pass

    def christoffel(self, x, chart=0):
        """Gamma^j_{kl} from metric jets via the standard formula."""
        self.check_chart_domain(x, chart)
        n = self.dimension
        jets = self.metric_jets(np.asarray(x, dtype=float), 1, chart)
        g = np.array([[jets[i][j].value for j in range(n)] for i in range(n)])
        dg = np.empty((n, n, n))
        for k in range(n):
            e = [0] * n
            e[k] = 1
            for i in range(n):
                for j in range(n):
                    dg[k, i, j] = jets[i][j].partial(e)
        ginv = np.linalg.inv(g)
        gamma = np.empty((n, n, n))
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    s = 0.0
                    for m in range(n):
                        s += ginv[j, m] * (dg[k, m, l] + dg[l, m, k] - dg[m, k, l])
                    gamma[j, k, l] = 0.5 * s
        return gamma

    def christoffel_fast(self, x, chart=0):
        """Closed-form Gammas for ODE right-hand sides (asserted against
        the jet route in tests)."""
        n = self.dimension
        return np.zeros((n, n, n))

    # boundary-representation interface ------------------------------------

    def inner(self, x, u, v):
        return float(np.asarray(u) @ np.asarray(v))

    def norm(self, x, v):
        return float(np.linalg.norm(v))

    def wrap(self, x):
        return np.asarray(x, dtype=float)

    def align(self, base, x):
        """Representative of x nearest to base (deck translate on the torus)."""
        return np.asarray(x, dtype=float)

    def uniqueness_radius(self):
        return math.inf

    # ops shared by the flat kinds (overridden for the sphere) --------------

    def geodesic(self, p, v, tau_end):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        if tau_end <= 0:
            raise ValueError("tau_end must be positive")
        piece = ("line", 0.0, float(tau_end), p, v)
        return GeodesicSegment(manifold=self, start=p, initial_velocity=v,
                               span=(0.0, float(tau_end)),
                               speed=float(np.linalg.norm(v)), pieces=(piece,))

    def _segment_point(self, seg, tau):
        _, t0, t1, p, v = seg.pieces[0]
        return p + tau * v

    def _segment_velocity(self, seg, tau):
        return seg.pieces[0][4].copy()

    def parallel_transport(self, seg, w0):
        return np.asarray(w0, dtype=float).copy()

    def exp_map(self, p, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return np.asarray(p, dtype=float).copy()
        return self.geodesic(p, v, 1.0).end_point()

    def minimal_geodesic(self, a, b):
        a = np.asarray(a, dtype=float)
        v = self.align(a, b) - a
        return GeodesicSegment(manifold=self, start=a, initial_velocity=v,
                               span=(0.0, 1.0), speed=float(np.linalg.norm(v)),
                               pieces=(("line", 0.0, 1.0, a, v),))

    def parallel_transport_curve(self, pathfun, span, w0, chart=0,
                                 rtol=1e-10, atol=1e-10):
        """Transport w0 along an arbitrary chart curve tau -> (x, xdot)."""
        def rhs(tau, w):
            x, xd = pathfun(tau)
            gam = self.christoffel_fast(x, chart)
            return -np.einsum("kij,i,j->k", gam, xd, w)

        res = integrate_ode(rhs, span, np.asarray(w0, dtype=float),
                            rtol=rtol, atol=atol)
        return res.y[-1]


# --------------------------------------------------------------------------
# Flat kinds
# --------------------------------------------------------------------------

class Euclidean(ChartedManifold):
    kind = "euclidean"

    def distance(self, x, y):
        return float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))


class FlatTorus(ChartedManifold):
    """Flat torus; ``periods`` entries may be None for aperiodic axes."""

    kind = "flat_torus"

    def __init__(self, periods):
        super().__init__(len(periods))
        self.periods = tuple(None if p is None else float(p) for p in periods)

    def wrap(self, x):
        x = np.asarray(x, dtype=float).copy()
        for i, p in enumerate(self.periods):
            if p is not None:
                x[i] %= p
        return x

    def align(self, base, x):
        base = np.asarray(base, dtype=float)
        x = np.asarray(x, dtype=float).copy()
        for i, p in enumerate(self.periods):
            if p is not None:
                x[i] -= p * round((x[i] - base[i]) / p)
        return x

    def distance(self, x, y):
        d = np.asarray(x, float) - np.asarray(y, float)
        total = 0.0
        for i, p in enumerate(self.periods):
            di = abs(d[i])
            if p is not None:
                di %= p
                di = min(di, p - di)
            total += di * di
        return math.sqrt(total)

    def uniqueness_radius(self):
        ps = [p for p in self.periods if p is not None]
        return min(ps) / 2.0 if ps else math.inf

    def minimal_geodesic(self, a, b):
        a = np.asarray(a, dtype=float)
        b_rep = self.align(a, b)
        for i, p in enumerate(self.periods):
            if p is not None and abs(abs(b_rep[i] - a[i]) - p / 2.0) < 1e-12 \
                    and abs(b_rep[i] - a[i]) > 1e-12:
                raise GeodesicAmbiguous(
                    f"axis {i}: points half a period apart, two minimal geodesics")
        v = b_rep - a
        return GeodesicSegment(manifold=self, start=a, initial_velocity=v,
                               span=(0.0, 1.0), speed=float(np.linalg.norm(v)),
                               pieces=(("line", 0.0, 1.0, a, v),))


# --------------------------------------------------------------------------
# Round 2-sphere, stereographic chart pair
# --------------------------------------------------------------------------

class Sphere2(ChartedManifold):
    """Round sphere of radius R embedded in R^3.

    Chart 0 projects from the north pole (covers the south), chart 1 from the
    south pole. Handoff when |u| crosses 1.5 R; chart validity |u| <= 2.5 R.
    """

    kind = "sphere2"

    def __init__(self, radius=1.0):
        super().__init__(2)
        self.radius = float(radius)
        R = self.radius
        src = f"4.0*{R!r}^4/({R!r}^2 + x^2 + y^2)^2"
        self._metric_expr = ex.parse_expression(src, ("x", "y"))
        self.handoff = 1.5 * R
        self.valid = 2.5 * R

    # chart machinery -------------------------------------------------------

    def check_chart_domain(self, x, chart=0):
        if float(np.hypot(*np.asarray(x, float))) > self.valid:
            raise ChartDomainError(
                f"|u|={np.hypot(*x):.3g} outside chart {chart} validity "
                f"{self.valid:.3g}")

    def conformal_factor(self, u):
        R = self.radius
        return 4.0 * R**4 / (R**2 + float(u @ u)) ** 2

    def chart_metric(self, x, chart=0):
        return self.conformal_factor(np.asarray(x, float)) * np.eye(2)

    def metric_jets(self, x, order, chart=0):
        x = np.asarray(x, dtype=float)
        coords = [Jet.variable(x[i], i, 2, order) for i in range(2)]
        lam = ex.eval_expr(self._metric_expr, coords, 0.0, {})
        zero = Jet.constant(0.0, 2, order)
        return [[lam, zero], [zero, lam]]

    def christoffel_fast(self, x, chart=0):
        u = np.asarray(x, dtype=float)
        R = self.radius
        phi = -2.0 * u / (R * R + u @ u)
        gamma = np.zeros((2, 2, 2))
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    gamma[k, i, j] = ((k == i) * phi[j] + (k == j) * phi[i]
                                      - (i == j) * phi[k])
        return gamma

    def embed(self, u, chart):
        u = np.asarray(u, dtype=float)
        R = self.radius
        D = float(u @ u) + R * R
        xy = 2.0 * R * R * u / D
        z = R * (float(u @ u) - R * R) / D
        if chart == 1:
            z = -z
        return np.array([xy[0], xy[1], z])

    def to_chart(self, P, chart):
        P = np.asarray(P, dtype=float)
        R = self.radius
        denom = R - P[2] if chart == 0 else R + P[2]
        if abs(denom) < 1e-12 * R:
            raise ChartDomainError(f"point at the chart-{chart} pole")
        return R * P[:2] / denom

    def pick_chart(self, P):
        return 0 if P[2] <= 0.0 else 1

    def pushforward(self, u, chart):
        """3x2 Jacobian of the embedding."""
        u = np.asarray(u, dtype=float)
        R = self.radius
        D = float(u @ u) + R * R
        B = np.empty((3, 2))
        for j in range(2):
            for i in range(2):
                B[i, j] = 2 * R * R * ((i == j) / D - 2 * u[i] * u[j] / D**2)
            B[2, j] = 4 * R**3 * u[j] / D**2
        if chart == 1:
            B[2, :] = -B[2, :]
        return B

    def tangent_to_chart(self, u, chart, w_embedded):
        B = self.pushforward(u, chart)
        return B.T @ np.asarray(w_embedded, float) / self.conformal_factor(u)

    def _transition(self, u):
        R = self.radius
        r2 = float(u @ u)
        u_new = R * R * u / r2
        uhat = u / math.sqrt(r2)
        J = (R * R / r2) * (np.eye(2) - 2.0 * np.outer(uhat, uhat))
        return u_new, J

    # boundary ops ----------------------------------------------------------

    def wrap(self, x):
        x = np.asarray(x, dtype=float)
        return self.radius * x / np.linalg.norm(x)

    def distance(self, x, y):
        P, Q = np.asarray(x, float), np.asarray(y, float)
        return self.radius * math.atan2(np.linalg.norm(np.cross(P, Q)),
                                        float(P @ Q))

    def uniqueness_radius(self):
        return math.pi * self.radius

    def geodesic(self, p, v, tau_end, rtol=1e-11, atol=1e-11):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        speed = float(np.linalg.norm(v))
        if speed == 0.0:
            raise ValueError("zero initial velocity")
        chart = self.pick_chart(p)
        u = self.to_chart(p, chart)
        du = self.tangent_to_chart(u, chart, v)
        W = np.eye(2)
        R = self.radius

        def rhs(tau, y):
            uu, dd = y[0:2], y[2:4]
            Wm = y[4:8].reshape(2, 2)
            phi = -2.0 * uu / (R * R + uu @ uu)
            pd = float(phi @ dd)
            acc = -(2.0 * pd * dd - float(dd @ dd) * phi)
            Wd = -(np.outer(dd, phi @ Wm) + pd * Wm - np.outer(phi, dd @ Wm))
            return np.concatenate([dd, acc, Wd.ravel()])

        pieces = []
        tau = 0.0
        h2 = self.handoff**2
        guard = 0
        while tau < tau_end:
            y0 = np.concatenate([u, du, W.ravel()])
            res = integrate_ode(rhs, (tau, tau_end), y0, rtol=rtol, atol=atol,
                                event=lambda s, y: y[0]**2 + y[1]**2 - h2,
                                event_direction=1, max_norm=1e8)
            if res.event_time is None:
                pieces.append(("ode", tau, tau_end, chart, res.sol))
                tau = tau_end
            else:
                te, ye = res.event_time, res.event_state
                pieces.append(("ode", tau, te, chart, res.sol))
                u_new, J = self._transition(ye[0:2])
                u, du = u_new, J @ ye[2:4]
                W = J @ ye[4:8].reshape(2, 2)
                chart = 1 - chart
                tau = te
            guard += 1
            if guard > 64:
                raise ChartDomainError("too many chart handoffs in one geodesic")
        return GeodesicSegment(manifold=self, start=p, initial_velocity=v,
                               span=(0.0, float(tau_end)), speed=speed,
                               pieces=tuple(pieces))

    def _piece_at(self, seg, tau):
        for piece in seg.pieces:
            if tau <= piece[2] or piece is seg.pieces[-1]:
                return piece
        return seg.pieces[-1]

    def _segment_point(self, seg, tau):
        _, _, _, chart, sol = self._piece_at(seg, tau)
        y = sol(tau)
        return self.embed(y[0:2], chart)

    def _segment_velocity(self, seg, tau):
        _, _, _, chart, sol = self._piece_at(seg, tau)
        y = sol(tau)
        return self.pushforward(y[0:2], chart) @ y[2:4]

    def parallel_transport(self, seg, w0):
        first = seg.pieces[0]
        chart0 = first[3]
        u0 = first[4](seg.span[0])[0:2]
        c = self.tangent_to_chart(u0, chart0, w0)
        last = seg.pieces[-1]
        y_end = last[4](seg.span[1])
        W_end = y_end[4:8].reshape(2, 2)
        return self.pushforward(y_end[0:2], last[3]) @ (W_end @ c)

    def exp_map(self, p, v):
        v = np.asarray(v, dtype=float)
        if not np.any(v):
            return np.asarray(p, dtype=float).copy()
        return self.geodesic(p, v, 1.0).end_point()

    def minimal_geodesic(self, a, b):
        P, Q = np.asarray(a, float), np.asarray(b, float)
        R = self.radius
        theta = self.distance(P, Q) / R
        if theta > math.pi - 1e-6:
            raise GeodesicAmbiguous("nearly antipodal points")
        if theta < 1e-14:
            raise ValueError("coincident points have a trivial geodesic")
        Ph, Qh = P / R, Q / R
        direction = Qh - math.cos(theta) * Ph
        direction /= np.linalg.norm(direction)
        return self.geodesic(P, (R * theta) * direction, 1.0)

    def inner(self, x, u, v):
        return float(np.asarray(u) @ np.asarray(v))


# --------------------------------------------------------------------------
# Module-level ops (spec surface)
# --------------------------------------------------------------------------

def make_manifold(kind, dimension=None, periods=None, radius=1.0):
    if kind == "euclidean":
        return Euclidean(int(dimension))
    if kind == "flat_torus":
        return FlatTorus(periods)
    if kind == "sphere2":
        return Sphere2(radius)
    raise ValueError(f"unknown manifold kind {kind!r}")


def christoffel(man, point, chart=0):
    return man.christoffel(point, chart)


def geodesic(man, p, v, tau_end):
    return man.geodesic(p, v, tau_end)


def parallel_transport(man, seg, w0):
    return man.parallel_transport(seg, w0)


def exp_map(man, p, v):
    return man.exp_map(p, v)


def distance(man, x, y):
    return man.distance(x, y)


def orthonormal_complement(man, x, v, chart=0):
    """g-orthonormal basis of the g-orthogonal complement of v at x
    (chart coordinates); columns of the returned (n, n-1) matrix."""
    n = man.dimension
    g = man.chart_metric(x, chart)
    v = np.asarray(v, dtype=float)
    vs = [v / math.sqrt(v @ g @ v)]
    basis = []
    for eidx in list(np.argsort(np.abs(v))):
        if len(vs) == n:
            break
        cand = np.zeros(n)
        cand[eidx] = 1.0
        for b in vs:
            cand = cand - (cand @ g @ b) * b
        nrm = math.sqrt(max(cand @ g @ cand, 0.0))
        if nrm > 1e-8:
            cand /= nrm
            vs.append(cand)
            basis.append(cand)
    if len(basis) != n - 1:
        raise ValueError("failed to build an orthonormal complement")
    return np.stack(basis, axis=1)
