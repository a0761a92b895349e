"""Flow integration, linearized (variational) flow, almost-periodic return
detection, and the return-jet closeness check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import GeodesicAmbiguous, NoCrossing, TangentialCrossing
from .field import Box, estimate_lipschitz, iterated_directional
from .jets import Jet
from .odeint import integrate_ode


@dataclass
class Trajectory:
    """Dense solution of x' = X(x, t). Immutable after construction."""

    field: object
    manifold: object
    x0: np.ndarray
    t_span: tuple
    sol: object
    rtol: float
    atol: float
    nsteps: int
    nfev: int

    def __call__(self, t):
        return self.sol(t)

    def eval_many(self, ts):
        return self.sol.eval_many(ts)

    def velocity(self, t):
        return self.field.value(self.sol(t), t)


def _rhs_of(field, man):
    check = man.check_chart_domain if man.kind == "sphere2" else None

    def rhs(t, y):
        if check is not None:
            check(y)
        return field.value(y, t)

    return rhs


def integrate(field, man, x0, t_span, rtol=1e-10, atol=1e-10, max_norm=1e6):
    """Integrate the field's flow with dense output; backward time allowed."""
    x0 = np.asarray(x0, dtype=float)
    res = integrate_ode(_rhs_of(field, man), t_span, x0, rtol=rtol, atol=atol,
                        max_norm=max_norm)
    return Trajectory(field=field, manifold=man, x0=x0, t_span=tuple(t_span),
                      sol=res.sol, rtol=rtol, atol=atol, nsteps=res.nsteps,
                      nfev=res.nfev)


# --------------------------------------------------------------------------
# Flow Taylor coefficients (exact time derivatives of the flow map)
# --------------------------------------------------------------------------

def flow_series(field, x, t0, order):
    """Taylor coefficients of the flow at (x, t0) and of its velocity.

    Returns (f_coeffs, fprime_coeffs), both (order+1, n). The velocity series
    is the X(f(t), t) evaluation itself (coefficient recurrence
    c_{k+1} = rhs_k/(k+1)), so f' - X(f) is bitwise zero along trajectories.
    """
    from .expr import eval_expr

    n = len(x)
    series = [np.asarray(x, dtype=float)]
    rhs = []
    for k in range(order + 1):
        coords = [Jet(1, k, {(m,): series[m][i] for m in range(k + 1)})
                  for i in range(n)]
        tj = Jet.variable(t0, 0, 1, k)
        cur = np.empty(n)
        for i, comp in enumerate(field.components):
            v = eval_expr(comp, coords, tj, field.parameters)
            cur[i] = v.coeff((k,)) if isinstance(v, Jet) else (v if k == 0 else 0.0)
        rhs.append(cur)
        if k < order:
            series.append(cur / (k + 1))
    return np.stack(series), np.stack(rhs)


def flow_taylor(field, x, t0, order):
    """d^q phi/dt^q at (x, t0) for q = 0..order."""
    f_coeffs, _ = flow_series(field, x, t0, order)
    out = np.empty_like(f_coeffs)
    fact = 1.0
    for q in range(order + 1):
        out[q] = f_coeffs[q] * fact
        fact *= (q + 1)
    return out


# --------------------------------------------------------------------------
# Variational flow
# --------------------------------------------------------------------------

def variational_flow(field, man, x0, T, rtol=1e-10, atol=1e-10,
                     return_endpoint=False):
    """Linearized flow d phi_T(x0) via M' = dX(phi_t) M, M(0) = I."""
    n = field.dimension
    x0 = np.asarray(x0, dtype=float)

    def rhs(t, y):
        x = y[:n]
        M = y[n:].reshape(n, n)
        dx = field.value(x, t)
        dM = field.jacobian(x, t) @ M
        return np.concatenate([dx, dM.ravel()])

    y0 = np.concatenate([x0, np.eye(n).ravel()])
    res = integrate_ode(rhs, (0.0, float(T)), y0, rtol=rtol, atol=atol,
                        max_norm=1e12)
    M = res.y[-1][n:].reshape(n, n)
    if return_endpoint:
        return M, res.y[-1][:n]
    return M


# --------------------------------------------------------------------------
# Return detection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReturnEvent:
    x0: np.ndarray
    T: float
    x_ret: np.ndarray
    alpha: float
    t_anchor: float = 0.0


def _distance_many(man, x0, pts):
    if man.kind == "euclidean":
        return np.linalg.norm(pts - x0, axis=1)
    if man.kind == "flat_torus":
        d = pts - x0
        for i, p in enumerate(man.periods):
            if p is not None:
                d[:, i] = np.abs(d[:, i]) % p
                d[:, i] = np.minimum(d[:, i], p - d[:, i])
        return np.linalg.norm(d, axis=1)
    # sphere2 flows run in chart coordinates; measure through the embedding
    e0 = man.embed(x0, 0)
    return np.array([man.distance(e0, man.embed(x, 0)) for x in pts])


def _chart_distance(man, a, b):
    if man.kind == "sphere2":
        return man.distance(man.embed(a, 0), man.embed(b, 0))
    return man.distance(a, b)


def find_returns(field, man, x0, alpha_max, horizon, t_min_filter,
                 rtol=1e-10, atol=1e-10, sample_dt=None):
    """Local minima of t -> dist(x0, phi_t(x0)) below alpha_max, refined to
    1e-10 in t; sorted by return time. Empty list is a valid result."""
    if alpha_max <= 0 or not (0 < t_min_filter < horizon):
        raise ValueError("need alpha_max > 0 and 0 < t_min_filter < horizon")
    x0 = np.asarray(x0, dtype=float)
    traj = integrate(field, man, x0, (0.0, horizon), rtol=rtol, atol=atol)
    dt = sample_dt if sample_dt is not None else min(0.01, t_min_filter / 4.0)
    ts = np.arange(0.0, horizon + dt, dt)
    ts[-1] = min(ts[-1], horizon)
    pts = traj.eval_many(ts)
    ds = _distance_many(man, x0, pts)
    vmax = float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1))) / dt
    thresh = alpha_max + vmax * dt

    flat = man.kind in ("euclidean", "flat_torus")

    def stationarity(t):
        x = traj(t)
        return float((man.align(x0, x) - x0) @ field.value(x, t))

    events = []
    for i in range(1, len(ts) - 1):
        if ds[i] <= ds[i - 1] and ds[i] <= ds[i + 1] and ds[i] < thresh:
            lo, hi = ts[i - 1], ts[i + 1]
            if flat and stationarity(lo) < 0.0 < stationarity(hi):
                t_star = float(brentq(stationarity, lo, hi, xtol=1e-12))
            else:
                res = minimize_scalar(lambda t: _chart_distance(man, x0, traj(t)),
                                      bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-10})
                t_star = float(res.x)
            alpha = float(_chart_distance(man, x0, traj(t_star)))
            if alpha <= alpha_max and t_star >= t_min_filter:
                if events and abs(events[-1].T - t_star) < 2 * dt:
                    if alpha < events[-1].alpha:
                        events[-1] = ReturnEvent(x0=x0, T=t_star,
                                                 x_ret=traj(t_star), alpha=alpha)
                    continue
                events.append(ReturnEvent(x0=x0, T=t_star, x_ret=traj(t_star),
                                          alpha=alpha))
    events.sort(key=lambda e: e.T)
    return events


def synthesize_event(field, man, x0, T_ref, alpha_target, rtol=1e-11,
                     atol=1e-11):
    """Event with a prescribed gap: truncate the (near-)period T_ref until
    dist(x0, phi_T(x0)) == alpha_target, approaching from the early side.

    Used by scenarios on exactly periodic reference orbits, where genuine
    near-returns have alpha ~ 0 and the closing machinery would be idle.
    """
    x0 = np.asarray(x0, dtype=float)
    traj = integrate(field, man, x0, (0.0, T_ref), rtol=rtol, atol=atol)

    def gap(t):
        return _chart_distance(man, x0, traj(t)) - alpha_target

    lo = 0.5 * T_ref
    if gap(lo) < 0:
        raise ValueError("alpha_target not bracketed; reference orbit too close")
    T = brentq(gap, lo, T_ref, xtol=1e-13)
    x_ret = traj(T)
    return ReturnEvent(x0=x0, T=float(T), x_ret=x_ret,
                       alpha=float(_chart_distance(man, x0, x_ret)))


def refine_periodic_orbit(field, man, x0_guess, T_guess, iterations=20,
                          tol=1e-11, rtol=1e-12, atol=1e-12):
    """Damped Newton shooting for an exact periodic point: solve
    phi_T(x) = x with a phase pin along the flow direction. Backtracks when
    a full step does not reduce the residual. Returns (x*, T*, residual)."""
    n = field.dimension

    def shoot(x, T):
        M, x_end = variational_flow(field, man, x, T, rtol=rtol, atol=atol,
                                    return_endpoint=True)
        x_end = man.align(x, x_end)
        return M, x_end, x_end - x

    x = np.asarray(x0_guess, dtype=float).copy()
    T = float(T_guess)
    phase_dir = field.value(x, 0.0)
    phase_dir /= np.linalg.norm(phase_dir)
    x_anchor = x.copy()
    M, x_end, F = shoot(x, T)
    residual = float(np.linalg.norm(F))
    for _ in range(iterations):
        phase = float(phase_dir @ (x - x_anchor))
        if residual < tol and abs(phase) < tol:
            break
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = M - np.eye(n)
        A[:n, n] = field.value(x_end, T)
        A[n, :n] = phase_dir
        rhs = -np.concatenate([F, [phase]])
        try:
            delta = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        improved = False
        for _ in range(7):
            x_try = x + step * delta[:n]
            T_try = T + step * delta[n]
            if T_try <= 0.1 * float(T_guess):
                step *= 0.5
                continue
            try:
                M_try, xe_try, F_try = shoot(x_try, T_try)
            except BlowUp:
                step *= 0.5
                continue
            r_try = float(np.linalg.norm(F_try))
            if r_try < residual or (r_try < 1e-12 and residual < 1e-12):
                x, T, M, x_end, F = x_try, T_try, M_try, xe_try, F_try
                residual = r_try
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return x, T, residual


# --------------------------------------------------------------------------
# Return-jet closeness of almost-periodic points
# --------------------------------------------------------------------------

def default_h_family(dimension, extra=8, seed=0):
    """Chart basis directions plus seeded random unit directions."""
    dirs = [np.eye(dimension)[i] for i in range(dimension)]
    rng = np.random.default_rng(seed)
    for _ in range(extra):
        v = rng.normal(size=dimension)
        dirs.append(v / np.linalg.norm(v))
    return dirs


def _direction_tuples(dirs, n_basis, q):
    """All basis q-tuples plus the repeated-vector tuples of the extras."""
    if q == 0:
        return [()]
    tuples = []

    def rec(prefix, depth):
        if depth == 0:
            tuples.append(tuple(prefix))
            return
        for d in dirs[:n_basis]:
            rec(prefix + [d], depth - 1)

    rec([], q)
    for d in dirs[n_basis:]:
        tuples.append((d,) * q)
    return tuples


@dataclass(frozen=True)
class ReturnJetReport:
    event: ReturnEvent
    order: int
    deviations: tuple          # d_q, q = 0..order
    bound: float               # b * L^r * alpha
    b: float
    L: float
    family_size: int

    @property
    def passed(self):
        return all(d <= self.bound for d in self.deviations)


def check_return_jets(field, man, event, order, h_family=None, region=None,
                      grid=3, lipschitz=None):
    """Transport the field's iterated Lie derivatives from x_ret to x0 along
    the minimal geodesic and report per-order deviations against b L^r alpha."""
    x0, x_ret = event.x0, event.x_ret
    if man.distance(x0, x_ret) > 0.99 * man.uniqueness_radius():
        raise GeodesicAmbiguous("return gap exceeds the geodesic-uniqueness radius")
    if h_family is None:
        h_family = default_h_family(field.dimension)
    n_basis = field.dimension

    if event.alpha > 0:
        seg = man.minimal_geodesic(x_ret, x0)
        transport = lambda v: man.parallel_transport(seg, v)
    else:
        transport = lambda v: v

    t_here = event.t_anchor
    t_there = event.t_anchor + event.T
    deviations = []
    for q in range(order + 1):
        jets_here = field.jet_components(x0, t_here, q) if q else None
        jets_there = field.jet_components(x_ret, t_there, q) if q else None
        worst = 0.0
        for tup in _direction_tuples(h_family, n_basis, q):
            if q == 0:
                v_here = field.value(x0, t_here)
                v_there = field.value(x_ret, t_there)
            else:
                v_here = iterated_directional(jets_here, tup)
                v_there = iterated_directional(jets_there, tup)
            diff = transport(np.asarray(v_there)) - v_here
            worst = max(worst, float(np.linalg.norm(diff)))
        deviations.append(worst)

    if lipschitz is None:
        if region is None:
            margin = max(10.0 * event.alpha, 1e-3)
            region = Box.around([x0, man.align(x0, x_ret)], margin=margin)
        lipschitz = estimate_lipschitz(field, region, order, grid,
                                       time=event.t_anchor)
    b = 3.0 * max(man.basis_norm_sum(x0), man.basis_norm_sum(man.align(x0, x_ret)))
    bound = b * lipschitz.L ** order * event.alpha
    return ReturnJetReport(event=event, order=order, deviations=tuple(deviations),
                           bound=float(bound), b=float(b), L=float(lipschitz.L),
                           family_size=len(h_family))


# --------------------------------------------------------------------------
# Section return time and its differential
# --------------------------------------------------------------------------

def section_coordinate(man, section, x):
    g = man.chart_metric(section.anchor)
    return float((man.align(section.anchor, x) - section.anchor) @ g @ section.normal)


def return_time_map(field, man, section, p, horizon=100.0, rtol=1e-11,
                    atol=1e-11, radius=None, with_gradient=True):
    """First return time T(p) to the section (same crossing direction as the
    flow at the anchor) and its gradient dT(p) by implicit differentiation."""
    p = np.asarray(p, dtype=float)
    anchor = section.anchor
    g = man.chart_metric(anchor)
    n_vec = section.normal
    flow_dir = math.copysign(1.0, float(field.value(anchor, 0.0) @ g @ n_vec))

    traj = integrate(field, man, p, (0.0, horizon), rtol=rtol, atol=atol)
    dt = 1e-3 * horizon
    ts = np.arange(0.0, horizon + dt, dt)
    sig = np.array([section_coordinate(man, section, x)
                    for x in traj.eval_many(ts)]) * flow_dir
    T = None
    for i in range(1, len(ts)):
        if sig[i - 1] < 0.0 <= sig[i] and ts[i] > dt:
            T = brentq(lambda t: section_coordinate(man, section, traj(t)) * flow_dir,
                       ts[i - 1], ts[i], xtol=1e-12)
            x_T = traj(T)
            if radius is not None and man.distance(anchor, x_T) > radius:
                T = None
                continue
            break
    if T is None:
        raise NoCrossing(f"no section crossing within horizon {horizon}")

    x_T = traj(T)
    X_T = field.value(x_T, T)
    denom = float(X_T @ g @ n_vec)
    if abs(denom) < 1e-8:
        raise TangentialCrossing(f"|<X, n>| = {abs(denom):.2e} at the crossing")
    if not with_gradient:
        return float(T), None
    M = variational_flow(field, man, p, T, rtol=rtol, atol=atol)
    dT = -(n_vec @ g @ M) / denom
    return float(T), dT


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------

def export_trajectory_csv(traj, path, ts=None):
    """Write "t,x1,...,xn" rows at 12 significant digits."""
    if ts is None:
        ts = traj.sol.ts
    pts = traj.eval_many(ts)
    n = pts.shape[1]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("t," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
        for t, row in zip(ts, pts):
            fh.write(f"{t:.12g}," + ",".join(f"{v:.12g}" for v in row) + "\n")
