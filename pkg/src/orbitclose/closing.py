"""Close a near-return into a C^r curve and build its tubular flow box.

The closed curve keeps the true trajectory outside a blend window [T-w, T]
and replaces it inside by the two-point Hermite polynomial that matches the
trajectory jets at T-w and the t=0 jets at T, forcing exact closure. The
flow box is the radius-eps tube with nearest-point projection; self-overlap
regions are detected by a strand-separation scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar

from .errors import AlphaTooLarge, RadiusTooLarge, WindowTooSmall, ZeroSpeed
from .expr import eval_expr
from .field import Box, estimate_lipschitz
from .flow import flow_series, flow_taylor
from .jets import Jet


# --------------------------------------------------------------------------
# Two-point Hermite interpolation (repeated-node divided differences)
# --------------------------------------------------------------------------

def hermite_coefficients(left_derivs, right_derivs):
    """Power-basis coefficients on [0, 1] of the polynomial matching the
    given derivative values (d^q/du^q, q = 0..r) at u=0 and u=1."""
    m = len(left_derivs)
    nodes = np.array([0.0] * m + [1.0] * m)
    k = 2 * m
    # divided-difference table with repeated nodes
    table = np.zeros((k, k))
    vals = {0.0: left_derivs, 1.0: right_derivs}
    for i in range(k):
        table[i, 0] = vals[nodes[i]][0]
    fact = [math.factorial(j) for j in range(m + 1)]
    for j in range(1, k):
        for i in range(k - j):
            if nodes[i + j] == nodes[i]:
                table[i, j] = vals[nodes[i]][j] / fact[j]
            else:
                table[i, j] = (table[i + 1, j - 1] - table[i, j - 1]) / \
                    (nodes[i + j] - nodes[i])
    # Newton form -> power basis
    coeffs = np.zeros(k)
    coeffs[0] = table[0, 0]
    basis = np.zeros(k)
    basis[0] = 1.0
    for j in range(1, k):
        shifted = np.zeros(k)
        shifted[1:] = basis[:-1]
        basis = shifted - nodes[j - 1] * basis
        coeffs += table[0, j] * basis
    return coeffs


def _poly_derive(coeffs):
    n = len(coeffs)
    if n <= 1:
        return np.zeros(1)
    return coeffs[1:] * np.arange(1, n)


def _poly_eval(coeffs, u):
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * u + c
    return acc


# --------------------------------------------------------------------------
# ClosedOrbit
# --------------------------------------------------------------------------

@dataclass
class ClosedOrbit:
    """Periodic C^r curve: trajectory outside the blend window, Hermite
    bridge inside. Parameter is time mod T; f(0) is x0 bit-exactly."""

    field: object
    manifold: object
    event: object
    order: int
    T: float
    window: tuple                 # (T - w, T)
    traj: object
    hermite: tuple                # per-coordinate derivative coeff arrays
    endpoint_residuals: tuple     # |d^q f(T^-) - d^q phi(0)|, q = 0..order
    v_min: float
    v_max: float
    arc: object = dc_field(default=None, repr=False)
    curvature: object = dc_field(default=None, repr=False)
    residuals: object = dc_field(default=None, repr=False)

    @property
    def x0(self):
        return self.traj.x0

    @property
    def w(self):
        return self.T - self.window[0]

    def _wrap_time(self, t):
        t = math.fmod(t, self.T)
        if t < 0.0:
            t += self.T
        return t

    def point(self, t):
        t = self._wrap_time(t)
        if t <= self.window[0]:
            return self.traj.sol(t)
        u = (t - self.window[0]) / self.w
        return np.array([_poly_eval(c[0], u) for c in self.hermite])

    def points_many(self, ts):
        return np.array([self.point(t) for t in ts])

    def jets(self, t, order):
        """Time derivatives d^q f/dt^q, q = 0..order, shape (order+1, n)."""
        t = self._wrap_time(t)
        if t <= self.window[0]:
            return flow_taylor(self.field, self.traj.sol(t), t, order)
        u = (t - self.window[0]) / self.w
        n = self.field.dimension
        out = np.empty((order + 1, n))
        for i, coeff_list in enumerate(self.hermite):
            for q in range(order + 1):
                cq = coeff_list[q] if q < len(coeff_list) else None
                out[q, i] = 0.0 if cq is None else \
                    _poly_eval(cq, u) / self.w ** q
        return out

    def local_series(self, t, order):
        """Taylor coefficients of f and f' at t, both (order+1, n).

        Along the trajectory part, f' is the stored X(f) evaluation, so the
        defect f' - X(f) is bitwise zero there.
        """
        t = self._wrap_time(t)
        if t <= self.window[0]:
            return flow_series(self.field, self.traj.sol(t), t, order)
        jets = self.jets(t, order + 1)
        fact = [math.factorial(q) for q in range(order + 2)]
        f = np.stack([jets[q] / fact[q] for q in range(order + 1)])
        fp = np.stack([jets[q + 1] / fact[q] for q in range(order + 1)])
        return f, fp

    def velocity(self, t):
        return self.jets(t, 1)[1]

    def speed(self, t):
        if self.manifold.kind in ("euclidean", "flat_torus"):
            return float(np.linalg.norm(self.velocity(t)))
        g = self.manifold.chart_metric(self.point(t))
        v = self.velocity(t)
        return math.sqrt(max(v @ g @ v, 0.0))


def hermite_close(traj, event, order, window=None):
    """Blend the trajectory into an exactly closed C^r curve.

    The bridge lives on [T-w, T]; its right endpoint carries the t=0 jets of
    the trajectory, so the seam at 0/T matches through ``order`` and the
    closure f(0) = f(T) is bit-exact by parameterization mod T.
    """
    field, man = traj.field, traj.manifold
    T, alpha = event.T, event.alpha
    if alpha > 0.99 * man.uniqueness_radius():
        raise AlphaTooLarge(f"alpha={alpha:.3g} exceeds the uniqueness radius")
    if alpha == 0.0:
        # already closed: no bridge, f is the trajectory with parameter mod T
        left = flow_taylor(field, traj.sol(T), T, order)
        right = flow_taylor(field, traj.x0, 0.0, order)
        right[0] = man.align(left[0], right[0])
        endpoint = tuple(float(np.linalg.norm(left[q] - right[q]))
                         for q in range(order + 1))
        orbit = ClosedOrbit(field=field, manifold=man, event=event, order=order,
                            T=T, window=(T, T), traj=traj, hermite=(),
                            endpoint_residuals=endpoint, v_min=0.0, v_max=0.0)
        ts = np.linspace(0.0, T, 1024, endpoint=False)
        speeds = np.array([orbit.speed(t) for t in ts])
        orbit.v_min, orbit.v_max = float(speeds.min()), float(speeds.max())
        return orbit

    if window is None:
        window = max(T / 20.0, 10.0 * alpha ** (1.0 / (order + 1)))
        window = min(window, 0.249 * T)
    w = float(window)
    if not (0.0 < w < T / 4.0):
        raise ValueError(f"window {w} must lie in (0, T/4)")
    t_a = T - w

    left = flow_taylor(field, traj.sol(t_a), t_a, order)        # at T - w
    right = flow_taylor(field, traj.x0, 0.0, order)             # t=0 data
    # common chart: the deck translate of x0 next to the trajectory's end,
    # where the bridge closes (not next to the window start)
    right = right.copy()
    right[0] = man.align(traj.sol(T), right[0])

    n = field.dimension
    hermite = []
    for i in range(n):
        ld = [left[q, i] * w ** q for q in range(order + 1)]
        rd = [right[q, i] * w ** q for q in range(order + 1)]
        c0 = hermite_coefficients(ld, rd)
        derivs = [c0]
        for _ in range(order + 2):
            derivs.append(_poly_derive(derivs[-1]))
        hermite.append(tuple(derivs))

    # endpoint matching: bridge jets at u=1 against the t=0 trajectory jets
    endpoint = []
    for q in range(order + 1):
        got = np.array([_poly_eval(hermite[i][q], 1.0) / w ** q for i in range(n)])
        endpoint.append(float(np.linalg.norm(got - right[q])))

    orbit = ClosedOrbit(field=field, manifold=man, event=event, order=order,
                        T=T, window=(t_a, T), traj=traj, hermite=tuple(hermite),
                        endpoint_residuals=tuple(endpoint), v_min=0.0, v_max=0.0)

    ts = np.linspace(0.0, T, 1024, endpoint=False)
    speeds = np.array([orbit.speed(t) for t in ts])
    orbit.v_min, orbit.v_max = float(speeds.min()), float(speeds.max())

    if alpha > 0 and order >= 1:
        # overshoot guard; H is only defined from the q >= 1 residuals, and
        # the budget degenerates for constant fields (L = 0)
        prof = interpolation_residual(orbit, field, samples=256)
        budget = 10.0 * prof.b * (prof.L ** order + prof.H ** order) * \
            prof.L ** order * alpha
        if budget > 0.0 and prof.per_order_sup[0] > budget:
            raise WindowTooSmall(
                f"window residual {prof.per_order_sup[0]:.3g} exceeds "
                f"10*b*(L^r+H^r)*L^r*alpha = {budget:.3g}")
        orbit.residuals = prof
    return orbit


# --------------------------------------------------------------------------
# Interpolation defect along the curve
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualProfile:
    per_order_sup: tuple      # sup_t |d^q/dt^q (X(f_t,t) - f'_t)|
    t_samples: np.ndarray
    per_order_values: np.ndarray   # (order+1, len(t_samples))
    H: float
    b: float
    L: float
    alpha: float


def _defect_series(orbit, field, t, order):
    """Taylor coefficients (through ``order``) of g(t) = X(f_t, t) - f'_t."""
    f_coeffs, fprime_coeffs = orbit.local_series(t, order)
    n = field.dimension
    coords = [Jet(1, order, {(q,): f_coeffs[q, i] for q in range(order + 1)})
              for i in range(n)]
    tj = Jet.variable(orbit._wrap_time(t), 0, 1, order)
    out = np.empty((order + 1, n))
    for i, comp in enumerate(field.components):
        v = eval_expr(comp, coords, tj, field.parameters)
        for q in range(order + 1):
            xq = v.coeff((q,)) if isinstance(v, Jet) else (v if q == 0 else 0.0)
            out[q, i] = xq - fprime_coeffs[q, i]
    return out


def interpolation_residual(orbit, field, samples=1000, lipschitz=None):
    """Per-order sup of the defect along the curve plus the measured
    interpolation constant H = max_{q>=1} (residual_q / (b L^r alpha))^{1/q}."""
    order = orbit.order
    t_a, T = orbit.window[0], orbit.T
    n_win = samples // 2
    ts = np.concatenate([
        np.linspace(0.0, t_a, samples - n_win, endpoint=False),
        np.linspace(t_a + 1e-12, T - 1e-12, n_win),
    ])
    vals = np.zeros((order + 1, len(ts)))
    fact = [math.factorial(q) for q in range(order + 1)]
    for k, t in enumerate(ts):
        series = _defect_series(orbit, field, t, order)
        for q in range(order + 1):
            vals[q, k] = np.linalg.norm(series[q] * fact[q])
    sup = tuple(float(v) for v in vals.max(axis=1))

    man = orbit.manifold
    if lipschitz is None:
        pts = orbit.points_many(np.linspace(0.0, T, 256, endpoint=False))
        region = Box.around(pts, margin=0.05 * (1.0 + np.ptp(pts)))
        lipschitz = estimate_lipschitz(field, region, order,
                                       3 if field.dimension > 2 else 5)
    b = 3.0 * man.basis_norm_sum(orbit.x0)
    alpha = orbit.event.alpha
    H = 0.0
    if alpha > 0:
        denom = b * lipschitz.L ** order * alpha
        for q in range(1, order + 1):
            if denom > 0:
                H = max(H, (sup[q] / denom) ** (1.0 / q))
    return ResidualProfile(per_order_sup=sup, t_samples=ts,
                           per_order_values=vals, H=float(H), b=float(b),
                           L=float(lipschitz.L), alpha=float(alpha))


# --------------------------------------------------------------------------
# Arc length
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ArcLength:
    t_knots: np.ndarray
    s_knots: np.ndarray
    total: float
    s_of_t: object
    t_of_s: object


def arclength(orbit, knots=512, tol=1e-10):
    """Monotone s(t) table by adaptive quadrature of the g-speed, with the
    inverse built from cubic Hermite data dt/ds = 1/speed."""
    if orbit.v_min <= 1e-10 * max(orbit.v_max, 1.0):
        raise ZeroSpeed(f"v_min={orbit.v_min:.3g}; route to homoclinic mode")
    if orbit.arc is not None:
        return orbit.arc
    T = orbit.T
    breaks = sorted({0.0, orbit.window[0], T})
    ts = np.unique(np.concatenate([
        np.linspace(a, b, max(2, int(knots * (b - a) / T)))
        for a, b in zip(breaks[:-1], breaks[1:])]))
    speed = orbit.speed
    s = np.zeros(len(ts))
    for i in range(1, len(ts)):
        val, _ = quad(speed, ts[i - 1], ts[i], epsabs=tol, epsrel=tol, limit=200)
        s[i] = s[i - 1] + val
    if np.any(np.diff(s) <= 0):
        raise ZeroSpeed("arc length not strictly increasing")
    sp = np.array([speed(t) for t in ts])
    s_of_t = CubicHermiteSpline(ts, s, sp)
    t_of_s = CubicHermiteSpline(s, ts, 1.0 / sp)
    arc = ArcLength(t_knots=ts, s_knots=s, total=float(s[-1]),
                    s_of_t=s_of_t, t_of_s=t_of_s)
    orbit.arc = arc
    return arc


# --------------------------------------------------------------------------
# Curvature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureProfile:
    t_samples: np.ndarray
    kappa: np.ndarray
    kappa_max: float
    rc_min: float


_RC_CAP = 1e6


def _kappa_at(orbit, t):
    man = orbit.manifold
    jets = orbit.jets(t, 2)
    fp, fpp = jets[1], jets[2]
    x = jets[0]
    flat = man.kind in ("euclidean", "flat_torus")
    if flat:
        v2 = float(fp @ fp)
        return float(np.linalg.norm(fpp / v2 - fp * (float(fp @ fpp) / v2**2)))
    g = man.chart_metric(x)
    v2 = float(fp @ g @ fp)
    v = math.sqrt(v2)
    jets_g = man.metric_jets(x, 1)
    n = len(x)
    dg = np.empty((n, n, n))
    for k in range(n):
        e = [0] * n
        e[k] = 1
        for i in range(n):
            for j in range(n):
                dg[k, i, j] = jets_g[i][j].partial(e)
    gdot = np.einsum("kij,k->ij", dg, fp)
    vdot = (2.0 * float(fp @ g @ fpp) + float(fp @ gdot @ fp)) / (2.0 * v)
    u = fp / v
    dudt = fpp / v - fp * (vdot / v2)
    duds = dudt / v
    gam = man.christoffel_fast(x)
    cov = duds + np.einsum("kij,i,j->k", gam, u, u)
    return math.sqrt(max(cov @ g @ cov, 0.0))


def curvature_radius(orbit, samples=1024):
    """kappa(s) profile and Rc_min = 1 / max kappa (capped at 1e6)."""
    if orbit.v_min <= 1e-10 * max(orbit.v_max, 1.0):
        raise ZeroSpeed("zero-speed orbit has no curvature parameterization")
    if orbit.curvature is not None:
        return orbit.curvature
    T = orbit.T
    ts = np.linspace(0.0, T, samples, endpoint=False)
    ks = np.array([_kappa_at(orbit, t) for t in ts])
    imax = int(np.argmax(ks))
    lo = ts[imax] - 2 * T / samples
    hi = ts[imax] + 2 * T / samples
    res = minimize_scalar(lambda t: -_kappa_at(orbit, t), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-9})
    kmax = max(float(ks.max()), float(-res.fun))
    rc = _RC_CAP if kmax < 1.0 / _RC_CAP else 1.0 / kmax
    prof = CurvatureProfile(t_samples=ts, kappa=ks, kappa_max=kmax,
                            rc_min=float(rc))
    orbit.curvature = prof
    return prof


# --------------------------------------------------------------------------
# FlowBox and projection
# --------------------------------------------------------------------------

class _OutsideType:
    """Sentinel: the query point is not inside the tube."""

    def __repr__(self):
        return "Outside"

    def __bool__(self):
        return False


OUTSIDE = _OutsideType()


@dataclass(frozen=True)
class ProjectionBranch:
    t: float
    foot: np.ndarray
    d: float


@dataclass(frozen=True)
class Projection:
    x: np.ndarray
    branches: tuple

    @property
    def unique(self):
        return len(self.branches) == 1

    @property
    def nearest(self):
        return self.branches[0]

    def normal_geodesic(self, man, k=0):
        """The normal geodesic from the k-th foot to the query point."""
        return man.minimal_geodesic(self.branches[k].foot, self.x)


@dataclass
class FlowBox:
    orbit: ClosedOrbit
    epsilon: float
    rc_min: float
    uniqueness_radius: float
    overlaps: tuple              # ((ta0, ta1), (tb0, tb1)) parameter pairs
    samples_t: np.ndarray
    samples_x: np.ndarray
    v_min: float
    v_max: float
    _cells: dict = dc_field(default=None, repr=False)

    def summary(self):
        return {
            "epsilon": self.epsilon,
            "rc_min": self.rc_min,
            "overlaps": [{"t_a0": a[0], "t_a1": a[1], "t_b0": b[0], "t_b1": b[1]}
                         for a, b in self.overlaps],
        }


def _circ_gap(a, b, period):
    d = abs(a - b) % period
    return min(d, period - d)


def build_flowbox(orbit, epsilon="auto", samples=2048, max_samples=262144):
    """Tube of radius eps with overlap bookkeeping.

    auto radius: min(Rc_min, global-uniqueness radius)/2, where the
    uniqueness radius is half the closest approach between strands. A pair
    is a strand pair when its arc separation exceeds pi*Rc_min (Schur:
    closer pairs are curvature-protected, which keeps the convex circle
    overlap-free) or when the pair is close only through a deck translate
    on the torus (curvature cannot protect topological returns).
    """
    man = orbit.manifold
    torus = man.kind == "flat_torus"
    prof = curvature_radius(orbit)
    rc = prof.rc_min
    arc = arclength(orbit)
    T = orbit.T
    ts = np.linspace(0.0, T, samples, endpoint=False)
    xs = orbit.points_many(ts)
    ss = arc.s_of_t(ts)

    # closest strand approach
    gur = math.inf
    total = arc.total
    m = min(samples, 1024)
    idx = np.linspace(0, samples - 1, m, dtype=int)
    pts = xs[idx]
    svals = ss[idx]
    diff = pts[:, None, :] - pts[None, :, :]
    chord_cover = np.linalg.norm(diff, axis=2)
    if torus:
        for i, p in enumerate(man.periods):
            if p is not None:
                diff[:, :, i] -= p * np.round(diff[:, :, i] / p)
    chord = np.linalg.norm(diff, axis=2)
    sgap = np.abs(svals[:, None] - svals[None, :]) % total
    sgap = np.minimum(sgap, total - sgap)
    strand = sgap > math.pi * rc * (1.0 + 1e-9)
    if torus:
        strand |= (chord < chord_cover * (1.0 - 1e-9)) & (sgap > 0)
    if np.any(strand):
        gur = float(chord[strand].min()) / 2.0

    if epsilon == "auto":
        eps = min(rc, gur) / 2.0
    else:
        eps = float(epsilon)
        if eps >= rc:
            raise RadiusTooLarge(f"epsilon {eps} >= Rc_min {rc}")

    # overlap regions: strand pairs closer than 2 eps
    overlaps = []
    close = strand & (chord < 2.0 * eps)
    if np.any(close):
        pair_idx = np.argwhere(close)
        pair_idx = pair_idx[pair_idx[:, 0] < pair_idx[:, 1]]
        gap_guard = 2.0 * (T / m)
        regions = []
        for i, j in pair_idx:
            ta, tb = ts[idx[i]], ts[idx[j]]
            placed = False
            for reg in regions:
                if min(abs(ta - reg[0][0]), abs(ta - reg[0][1])) <= gap_guard and \
                   min(abs(tb - reg[1][0]), abs(tb - reg[1][1])) <= gap_guard:
                    reg[0][0], reg[0][1] = min(reg[0][0], ta), max(reg[0][1], ta)
                    reg[1][0], reg[1][1] = min(reg[1][0], tb), max(reg[1][1], tb)
                    placed = True
                    break
            if not placed:
                regions.append([[ta, ta], [tb, tb]])
        overlaps = [((r[0][0], r[0][1]), (r[1][0], r[1][1])) for r in regions]

    # re-sample so the spatial hash has arc spacing well below eps
    needed = int(math.ceil(3.0 * total / eps))
    if needed > samples:
        if needed > max_samples:
            raise RadiusTooLarge(
                f"tube radius {eps:.3g} too thin to index along arc length "
                f"{total:.3g}")
        ts = np.linspace(0.0, T, needed, endpoint=False)
        xs = orbit.points_many(ts)

    box = FlowBox(orbit=orbit, epsilon=float(eps), rc_min=rc,
                  uniqueness_radius=float(gur), overlaps=tuple(overlaps),
                  samples_t=ts, samples_x=xs, v_min=orbit.v_min,
                  v_max=orbit.v_max)
    cells = {}
    for k, x in enumerate(xs):
        key = tuple(np.floor(man.wrap(x) / eps).astype(int))
        cells.setdefault(key, []).append(k)
    box._cells = {k: np.array(v) for k, v in cells.items()}
    return box


def _newton_foot(box, x, t0, max_iter=30):
    orbit = box.orbit
    man = orbit.manifold
    t = float(t0)
    T = orbit.T
    for _ in range(max_iter):
        jets = orbit.jets(t, 2)
        foot = man.align(x, jets[0])
        dvec = x - foot
        g = float(-dvec @ jets[1])
        gp = float(jets[1] @ jets[1] - dvec @ jets[2])
        if gp <= 0:
            return None
        step = -g / gp
        t += step
        if abs(step) < 1e-12 * max(1.0, T):
            break
    jets = orbit.jets(t, 1)
    foot = man.align(x, jets[0])
    d = float(np.linalg.norm(x - foot))
    if d > 2.0 * box.epsilon:
        return None
    return t % T, foot, d


_NEIGHBOR_OFFSETS = {}


def _neighbor_offsets(n):
    if n not in _NEIGHBOR_OFFSETS:
        ranges = [(-2, -1, 0, 1, 2)] * n
        out = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(n, -1).T
        _NEIGHBOR_OFFSETS[n] = out
    return _NEIGHBOR_OFFSETS[n]


def project(box, x, t_hint=None):
    """Nearest-point projection(s) of x onto the orbit.

    Newton on d/dt |x - f_t|^2 from spatial-hash candidates; branches closer
    than eps/v_max in parameter collapse to the nearest one. Returns OUTSIDE
    when no foot lies within eps.
    """
    x = np.asarray(x, dtype=float)
    orbit = box.orbit
    man = orbit.manifold
    T = orbit.T
    eps = box.epsilon
    seeds = []
    if t_hint is not None:
        seeds.append(float(t_hint))
    cells = box._cells
    hits = []
    seen = set()
    for off in _neighbor_offsets(x.size):
        key = tuple(np.floor(man.wrap(x + off * eps) / eps).astype(int))
        if key in seen:
            continue
        seen.add(key)
        arr = cells.get(key)
        if arr is not None:
            hits.append(arr)
    if hits:
        cand = np.concatenate(hits)
        if man.kind == "flat_torus":
            dists = np.array([np.linalg.norm(man.align(x, s) - x)
                              for s in box.samples_x[cand]])
        else:
            dists = np.linalg.norm(box.samples_x[cand] - x, axis=1)
        keep = dists < 2.5 * eps
        cand, dists = cand[keep], dists[keep]
        if len(cand):
            # one Newton seed per strand: cluster candidates by parameter and
            # keep the closest sample of each cluster
            spacing = T / len(box.samples_t)
            gap = max(eps / box.v_max, 3.0 * spacing)
            order_idx = np.argsort(box.samples_t[cand])
            cand, dists = cand[order_idx], dists[order_idx]
            tvals = box.samples_t[cand]
            start = 0
            groups = []
            for i in range(1, len(cand) + 1):
                if i == len(cand) or tvals[i] - tvals[i - 1] > gap:
                    groups.append((start, i))
                    start = i
            # first and last group may wrap around t = 0
            if len(groups) >= 2 and (tvals[0] + T - tvals[-1]) <= gap:
                a0, a1 = groups[0]
                b0, b1 = groups[-1]
                best_a = a0 + int(np.argmin(dists[a0:a1]))
                best_b = b0 + int(np.argmin(dists[b0:b1]))
                groups = groups[1:-1]
                k = best_a if dists[best_a] <= dists[best_b] else best_b
                seeds.append(float(tvals[k]))
            for a, b in groups:
                k = a + int(np.argmin(dists[a:b]))
                seeds.append(float(tvals[k]))
    if not seeds:
        return OUTSIDE

    feet = []
    gap = eps / box.v_max
    for t0 in seeds:
        res = _newton_foot(box, x, t0)
        if res is None:
            continue
        t, foot, d = res
        merged = False
        for i, (ti, fi, di) in enumerate(feet):
            if _circ_gap(t, ti, T) <= gap:
                if d < di:
                    feet[i] = (t, foot, d)
                merged = True
                break
        if not merged:
            feet.append((t, foot, d))
    branches = [ProjectionBranch(t=t, foot=foot, d=d)
                for t, foot, d in feet if d < eps]
    if not branches:
        return OUTSIDE
    branches.sort(key=lambda b: b.d)
    return Projection(x=x, branches=tuple(branches))


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------

def export_orbit_csv(orbit, path, samples=1000):
    """Rows "t,s,x1..xn,kappa" at 12 significant digits."""
    arc = arclength(orbit)
    ts = np.linspace(0.0, orbit.T, samples, endpoint=False)
    n = orbit.field.dimension
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t,s," + ",".join(f"x{i+1}" for i in range(n)) + ",kappa\n")
        for t in ts:
            x = orbit.point(t)
            row = [t, float(arc.s_of_t(t)), *x, _kappa_at(orbit, t)]
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
