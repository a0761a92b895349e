"""Synthesis of the perturbed field Y inside the tubular flow box.

Three modes share one assembly: project the query point onto the closed
orbit, parallel-transport the target velocity (the orbit's own f') and the
base field value along the normal geodesic to the query point, and blend
with a compactly supported bump of the tube distance.

- nonautonomous: bump argument d + L |t - t_x| (mod-T minimal), overlap-free
  boxes only.
- autonomous: per-branch weights in overlap regions, sum over (at most two)
  projection feet.
- homoclinic: the on-orbit target velocity is throttled by a freeze factor
  chi(s) vanishing quadratically at the slow point, so Y(y_slow) = 0 exactly
  and the reparametrization p(t) has |p^(q)| <= 1 + tau.

Every evaluation path (value, jacobian, jets through order r) runs the same
generic arithmetic on floats, dual numbers, or truncated jets. Outside the
tube Y returns the base field's value bitwise.

Flat manifolds only (euclidean, flat torus): normal-geodesic transport is the
identity there, which the isometry invariant still pins down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closing import OUTSIDE, arclength, interpolation_residual, project
from .errors import (BranchConstructionFailure, NotSlowEnough, OverlapPresent,
                     TooManyBranches)
from .expr import eval_expr
from .field import Box, estimate_lipschitz, iterated_directional
from .flow import _direction_tuples, default_h_family, integrate
from .jets import Dual1, Jet, jabs, jsqrt, polyval


# --------------------------------------------------------------------------
# Bump profile
# --------------------------------------------------------------------------

def _smoothstep_int_coeffs(order):
    """Integer coefficients (low-first) of the degree-(2r+1) smoothstep
    S(0)=0, S(1)=1, flat through ``order`` at both ends."""
    n = order
    coeffs = [0] * (2 * n + 2)
    for k in range(n + 1):
        coeffs[n + 1 + k] = (math.comb(n + k, k) * math.comb(2 * n + 1, n - k)
                             * (-1) ** k)
    return coeffs


def _poly_compose_one_minus(coeffs):
    """Integer coefficients of p(1 - v) given integer coeffs of p(v)."""
    out = [0] * len(coeffs)
    base = [1]                      # (1 - v)^j
    for j, cj in enumerate(coeffs):
        for i, bi in enumerate(base):
            out[i] += cj * bi
        nxt = [0] * (len(base) + 1)
        for i, bi in enumerate(base):
            nxt[i] += bi
            nxt[i + 1] -= bi
        base = nxt
    return out


def _poly_derivative(coeffs):
    return [c * k for k, c in enumerate(coeffs)][1:] or [0.0]


@dataclass(frozen=True)
class BumpProfile:
    """rho: [0, inf) -> [0, amplitude], rho(0)=amplitude, vanishing with all
    derivatives through ``order`` at d >= epsilon."""

    epsilon: float
    amplitude: float
    order: int
    coeffs: tuple            # polynomial in v = d/epsilon, low-first
    rho0: float              # measured max_q sup |rho^(q)| * epsilon^q

    def __call__(self, d):
        return self.eval(d)

    def eval(self, d):
        """Works on floats, Dual1, and Jet arguments (scalar part decides the
        piecewise branch)."""
        d0 = d.value if isinstance(d, Jet) else d.v if isinstance(d, Dual1) else d
        if d0 >= self.epsilon:
            return d * 0.0 if isinstance(d, (Jet, Dual1)) else 0.0
        return polyval(self.coeffs, d / self.epsilon) * self.amplitude

    def derivative(self, d, q):
        """q-th derivative of rho at scalar d."""
        if d >= self.epsilon:
            return 0.0
        c = list(self.coeffs)
        for _ in range(q):
            c = _poly_derivative(c)
        return polyval(c, d / self.epsilon) * self.amplitude / self.epsilon ** q


def make_bump(epsilon, amplitude=1.0, order=2, grid=10_000):
    """Unique degree-(2r+1) polynomial smoothstep in d/epsilon meeting the
    boundary conditions; rho0 is the measured sup of |rho^(q)| eps^q."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ss = _smoothstep_int_coeffs(order)
    coeffs = tuple(float(c) for c in _poly_compose_one_minus(ss))
    # |rho^(q)(d)| eps^q = amplitude * |d^q/dv^q poly(v)|, v = d/eps
    ds = np.linspace(0.0, 1.0, grid, endpoint=False)
    rho0 = 0.0
    c = list(coeffs)
    for q in range(order + 1):
        vals = np.abs(np.polyval(list(reversed(c)), ds))
        rho0 = max(rho0, float(vals.max()))
        c = _poly_derivative(c)
    return BumpProfile(epsilon=float(epsilon), amplitude=float(amplitude),
                       order=order, coeffs=coeffs, rho0=float(rho0 * amplitude))


# --------------------------------------------------------------------------
# Branch weights (two-foot overlap blending)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchWeights:
    """rho_bar_i(d_i, d_j) = rho(d_i) * S(d_j / (d_i + d_j)).

    The mixing smoothstep satisfies S(u) + S(1-u) = 1, so the weights sum to
    at most max_i rho(d_i) <= 1 and the clamp never activates.
    """

    bump: BumpProfile
    mix_coeffs: tuple

    def mix(self, u):
        return polyval(self.mix_coeffs, u)

    def weight(self, d_own, d_other):
        return self.bump.eval(d_own) * self.mix(d_other / (d_own + d_other))

    def weights_sum_bounded(self, d1, d2):
        return self.weight(d1, d2) + self.weight(d2, d1) <= \
            max(self.bump.eval(d1), self.bump.eval(d2)) + 1e-12


def make_branch_weights(bump):
    ss = tuple(float(c) for c in _smoothstep_int_coeffs(bump.order))
    return BranchWeights(bump=bump, mix_coeffs=ss)


# --------------------------------------------------------------------------
# Homoclinic freeze factor
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FreezeProfile:
    """chi(s) = 1 - (1 - ((s - s_star)/w)^2)^(order+1) inside |s-s_star| < w.

    Quadratic contact at the slow point (algebraic 1/t approach of the flow);
    C^order at the window edge.
    """

    s_star: float
    w: float
    order: int
    total: float             # orbit arc length, for wrap-around

    def delta(self, s):
        d = s - self.s_star
        d0 = d.value if isinstance(d, Jet) else d.v if isinstance(d, Dual1) else d
        shift = self.total * round(d0 / self.total)
        return d - shift

    def chi(self, s):
        d = self.delta(s)
        d0 = d.value if isinstance(d, Jet) else d.v if isinstance(d, Dual1) else d
        if abs(d0) >= self.w:
            return d * 0.0 + 1.0 if isinstance(d, (Jet, Dual1)) else 1.0
        v = (d / self.w) ** 2
        return 1.0 - (1.0 - v) ** (self.order + 1)

    def chi_prime(self, s):
        d = float(self.delta(s))
        if abs(d) >= self.w:
            return 0.0
        v = (d / self.w) ** 2
        return (self.order + 1) * (1.0 - v) ** self.order * 2.0 * d / self.w ** 2


# --------------------------------------------------------------------------
# Generic field-evaluation helpers
# --------------------------------------------------------------------------

def _scalar_of(v):
    if isinstance(v, Jet):
        return v.value
    if isinstance(v, Dual1):
        return v.v
    return float(v)


def _zero_like(xs):
    probe = xs[0]
    if isinstance(probe, (Jet, Dual1)):
        return probe * 0.0
    return 0.0


def _series_eval(col_coeffs, delta):
    """Evaluate a univariate Taylor series (coefficients low-first) on a
    jet-like increment with zero scalar part allowed."""
    return polyval(list(col_coeffs), delta)


def _seed_order(xs):
    if isinstance(xs[0], Jet):
        return xs[0].order
    if isinstance(xs[0], Dual1):
        return 1
    return 0


def _foot_expansion(orbit, t_star, xs, order, series=None):
    """t_x(x), foot(x), and d(x) as jet-like quantities around the converged
    scalar foot t_star.

    Newton on F(u, x) = sum_i (x_i - f_i(u)) f_i'(u) = 0 in jet arithmetic;
    the scalar part stays at t_star, higher coefficients converge at
    Newton rate (one iteration suffices for dual numbers).
    """
    n = len(xs)
    f, fp = series if series is not None else \
        orbit.local_series(t_star, order + 2)
    fpp = np.stack([(k + 1) * fp[k + 1] for k in range(len(fp) - 1)])

    delta = _zero_like(xs)           # u - t_star
    if isinstance(xs[0], (Jet, Dual1)):
        iters = 1 if isinstance(xs[0], Dual1) else \
            max(2, math.ceil(math.log2(order + 1)) + 1)
        for _ in range(iters):
            F = _zero_like(xs)
            Fu = _zero_like(xs)
            for i in range(n):
                fi = _series_eval(f[:, i], delta)
                fpi = _series_eval(fp[:, i], delta)
                fppi = _series_eval(fpp[:, i], delta)
                diff = xs[i] - fi
                F = F + diff * fpi
                Fu = Fu + diff * fppi - fpi * fpi
            delta = delta - F / Fu
    foot = [_series_eval(f[:, i], delta) for i in range(n)]
    d2 = _zero_like(xs)
    for i in range(n):
        diff = xs[i] - foot[i]
        d2 = d2 + diff * diff
    return delta, foot, d2


def _sqrt_dist(d2, scalar_d):
    """sqrt(d^2) with the on-orbit case (d=0) handled: there the composite
    rho(d( . )) has vanishing first-order jets, so a constant-zero distance
    jet gives the correct order-1 behavior."""
    if isinstance(d2, (Jet, Dual1)):
        if scalar_d < 1e-12:
            return d2 * 0.0
        return jsqrt(d2)
    return math.sqrt(max(d2, 0.0))


class _FieldEvalMixin:
    """Shared evaluation surface: value / jacobian / jet_components."""

    def value(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        base = self.base.value(x, t)
        corr = self._correction_value(x, t, base)
        return base if corr is None else base + corr

    def jacobian(self, x, t=0.0):
        n = self.dimension
        xs = [Dual1.variable(float(x[i]), i, n) for i in range(n)]
        vals = self._eval_generic(xs, float(t))
        J = np.empty((n, n))
        for i, v in enumerate(vals):
            J[i] = v.g if isinstance(v, Dual1) else 0.0
        return J

    def jet_components(self, x, t, order, include_time=False):
        n = self.dimension
        nv = n + 1 if include_time else n
        xs = [Jet.variable(float(x[i]), i, nv, order) for i in range(n)]
        tj = Jet.variable(float(t), n, nv, order) if include_time else float(t)
        vals = self._eval_generic(xs, tj)
        out = []
        for v in vals:
            out.append(v if isinstance(v, Jet) else Jet.constant(v, nv, order))
        return out

    def correction_jets(self, x, t, order, include_time=False):
        """Jets of Y - X (zero jets outside the tube)."""
        n = self.dimension
        nv = n + 1 if include_time else n
        xs = [Jet.variable(float(x[i]), i, nv, order) for i in range(n)]
        tj = Jet.variable(float(t), n, nv, order) if include_time else float(t)
        corr = self._correction_generic(xs, tj)
        if corr is None:
            return [Jet.constant(0.0, nv, order) for _ in range(n)]
        return [c if isinstance(c, Jet) else Jet.constant(c, nv, order)
                for c in corr]

    def _eval_generic(self, xs, t):
        base = [eval_expr(c, xs, t, self.base.parameters)
                for c in self.base.components]
        corr = self._correction_generic(xs, t)
        if corr is None:
            return base
        return [b + c for b, c in zip(base, corr)]

    def _correction_value(self, x, t, base):
        corr = self._correction_generic([float(v) for v in x], float(t))
        if corr is None:
            return None
        return np.array(corr)


# --------------------------------------------------------------------------
# PerturbedField
# --------------------------------------------------------------------------

class PerturbedField(_FieldEvalMixin):
    """The synthesized field Y wrapping the base X, the closed orbit J, the
    flow box, and the bump machinery. Evaluation is pure; a foot-parameter
    warm start is kept as a performance memo only."""

    def __init__(self, mode, base, orbit, box, bump, weights=None,
                 time_constant=None, freeze=None, clamp=True):
        self.mode = mode
        self.base = base
        self.orbit = orbit
        self.box = box
        self.bump = bump
        self.weights = weights
        self.time_constant = time_constant
        self.freeze = freeze
        self.clamp = clamp
        self.clamp_activations = 0
        self.dimension = base.dimension
        self.r_max = base.r_max
        self.time_dependent = base.time_dependent or mode == "nonautonomous"
        self.arc = arclength(orbit)
        self._hint = None
        self._t_star_slow = None

    # -- target velocity on the orbit ------------------------------------

    def _target_series_factor(self, delta, t_star, fp):
        """chi(s(u)) for homoclinic mode, 1 otherwise (jet-like)."""
        if self.freeze is None:
            return 1.0
        n = self.dimension
        v2 = None
        for i in range(n):
            sq = np.convolve(fp[:, i], fp[:, i])[:len(fp)]
            v2 = sq if v2 is None else v2 + sq
        # Taylor of speed = sqrt(v2), integrated to the arc-length series
        m = len(fp) - 1
        v2jet = Jet(1, m, {(k,): float(v2[k]) for k in range(m + 1)})
        speedjet = jsqrt(v2jet)
        s_coeffs = [float(self.arc.s_of_t(t_star % self.orbit.T))]
        for k in range(m):
            s_coeffs.append(speedjet.coeff((k,)) / (k + 1))
        s_u = _series_eval(np.array(s_coeffs), delta)
        return self.freeze.chi(s_u)

    def _branch_correction(self, xs, t, t_star, delta, foot, fp):
        """target_velocity(foot) - X_bar(foot, t); transport along the normal
        geodesic is the identity on the flat kinds."""
        n = self.dimension
        target = [_series_eval(fp[:, i], delta) for i in range(n)]
        chi = self._target_series_factor(delta, t_star, fp)
        xbar = [eval_expr(c, foot, t, self.base.parameters)
                for c in self.base.components]
        return [chi * target[i] - xbar[i] for i in range(n)]

    def _expand(self, br_t, xs, order):
        series = self.orbit.local_series(br_t, order + 2)
        delta, foot, d2 = _foot_expansion(self.orbit, br_t, xs, order,
                                          series=series)
        return delta, foot, d2, series[1]

    def _correction_generic(self, xs, t):
        x_scalar = np.array([_scalar_of(v) for v in xs])
        proj = project(self.box, x_scalar, t_hint=self._hint)
        if proj is OUTSIDE:
            return None
        self._hint = proj.nearest.t
        order = max(_seed_order(xs), 1)

        if self.mode == "nonautonomous":
            br = proj.nearest
            delta, foot, d2, fp = self._expand(br.t, xs, order)
            d = _sqrt_dist(d2, br.d)
            T = self.orbit.T
            k = round((_scalar_of(t) - br.t) / T)
            dt_jet = t - (br.t + k * T) - delta
            arg = d + jabs(dt_jet) * self.time_constant
            rho = self.bump.eval(arg)
            corr = self._branch_correction(xs, t, br.t, delta, foot, fp)
            return [rho * c for c in corr]

        branches = proj.branches
        if len(branches) > 2:
            raise TooManyBranches(f"{len(branches)} projection feet at "
                                  f"{x_scalar}")
        if self.mode == "homoclinic":
            return self._homoclinic_correction(xs, t, branches, order)

        if len(branches) == 1:
            br = branches[0]
            delta, foot, d2, fp = self._expand(br.t, xs, order)
            d = _sqrt_dist(d2, br.d)
            rho = self.bump.eval(d)
            corr = self._branch_correction(xs, t, br.t, delta, foot, fp)
            return [rho * c for c in corr]

        # two feet: branch weights
        expansions = [self._expand(br.t, xs, order) for br in branches]
        ds = [_sqrt_dist(exp[2], br.d)
              for exp, br in zip(expansions, branches)]
        out = None
        for i, br in enumerate(branches):
            delta, foot, _, fp = expansions[i]
            w = self.weights.weight(ds[i], ds[1 - i])
            corr = self._branch_correction(xs, t, br.t, delta, foot, fp)
            term = [w * c for c in corr]
            out = term if out is None else [a + b for a, b in zip(out, term)]
        return out

    def _homoclinic_correction(self, xs, t, branches, order):
        br = branches[0]
        s_star = self.freeze.s_star
        w = self.freeze.w
        s_f = float(self.arc.s_of_t(br.t % self.orbit.T))
        gap = s_f - s_star
        gap -= self.freeze.total * round(gap / self.freeze.total)

        delta, foot, d2, fp = self._expand(br.t, xs, order)
        d1 = _sqrt_dist(d2, br.d)
        corr1 = self._branch_correction(xs, t, br.t, delta, foot, fp)

        if abs(gap) >= w + 2.0 * self.box.epsilon:
            rho = self.bump.eval(d1)
            return [rho * c for c in corr1]

        # near the freeze point: blend the own-arc correction with the other
        # arc, whose nearest point is the slow point itself
        y_slow = self.orbit.point(self._t_star_slow)
        d2sq = _zero_like(xs)
        for i in range(self.dimension):
            diff = xs[i] - y_slow[i]
            d2sq = d2sq + diff * diff
        d2_scalar = math.sqrt(max(float(_scalar_of(d2sq)), 0.0))
        if br.d < 1e-12 and d2_scalar < 1e-12:
            # exactly the slow point: own-branch weight 1 (Y value = 0 there)
            return corr1
        d_other = _sqrt_dist(d2sq, d2_scalar)
        # the constrained projection onto the other arc is its endpoint, the
        # slow point itself: a constant foot with zero jets
        delta2 = _zero_like(xs)
        foot2 = [float(v) for v in y_slow]
        _, fp2 = self.orbit.local_series(self._t_star_slow, order + 2)
        w1 = self.weights.weight(d1, d_other)
        w2 = self.weights.weight(d_other, d1)
        corr2 = self._branch_correction(xs, t, self._t_star_slow, delta2,
                                        foot2, fp2)
        return [w1 * a + w2 * b for a, b in zip(corr1, corr2)]


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------

def _require_flat(orbit):
    if orbit.manifold.kind not in ("euclidean", "flat_torus"):
        raise ValueError("perturbation synthesis supports flat kinds only")


def perturb_nonautonomous(X, orbit, box, bump, time_constant=None):
    """Y(x,t) = X + rho(d + L|t - t_x|)(Ybar - Xbar); overlap-free boxes."""
    _require_flat(orbit)
    if box.overlaps:
        raise OverlapPresent("nonautonomous mode requires an overlap-free box; "
                             "use the autonomous mode")
    if time_constant is None:
        pts = orbit.points_many(np.linspace(0, orbit.T, 128, endpoint=False))
        region = Box.around(pts, margin=box.epsilon)
        time_constant = estimate_lipschitz(X, region, 0, 4).L
    return PerturbedField("nonautonomous", X, orbit, box, bump,
                          time_constant=float(time_constant))


def perturb_autonomous(X, orbit, box, bump):
    """Y(x) = X + sum_i rho_bar_i(d_1, d_2)(Ybar_i - Xbar_i)."""
    _require_flat(orbit)
    return PerturbedField("autonomous", X, orbit, box, bump,
                          weights=make_branch_weights(bump))


def perturb_homoclinic(X, orbit, y_slow, tau, bump, box=None,
                       freeze_window=None, slow_threshold=0.05,
                       grid=2048):
    """Freeze the orbit at y_slow: Y(y_slow) = 0 exactly, derivative bounds
    |p^(q)(t)| <= 1 + tau verified on a grid."""
    _require_flat(orbit)
    from .closing import build_flowbox

    y_slow = np.asarray(y_slow, dtype=float)
    speed_at = float(np.linalg.norm(X.value(y_slow)))
    if speed_at > slow_threshold * orbit.v_max:
        raise NotSlowEnough(f"|X(y_slow)| = {speed_at:.3g} > "
                            f"{slow_threshold} * v_max = "
                            f"{slow_threshold * orbit.v_max:.3g}")
    if box is None:
        box = build_flowbox(orbit, "auto")
    proj = project(box, y_slow)
    if proj is OUTSIDE or proj.nearest.d > 1e-8 * max(1.0, orbit.v_max):
        raise BranchConstructionFailure("y_slow is not on the orbit")
    t_star = proj.nearest.t
    arc = arclength(orbit)
    s_star = float(arc.s_of_t(t_star))

    if freeze_window is None:
        # |p''| ~ max|chi' chi| * speed / w; pick w from the bound with margin
        freeze_window = 1.3 * 1.1 * max(speed_at, 1e-6) / (1.0 + tau)
    w = float(freeze_window)
    if w >= arc.total / 4:
        raise BranchConstructionFailure("freeze window exceeds a quarter orbit")

    freeze = FreezeProfile(s_star=s_star, w=w, order=orbit.order,
                           total=arc.total)

    # grid verification of the p(t) derivative bounds (p' = chi, chained)
    svals = np.linspace(s_star - w, s_star + w, grid)
    n_checked = min(orbit.order, 3)
    worst = np.zeros(max(n_checked, 1))
    for s in svals:
        chi = float(freeze.chi(s))
        chip = freeze.chi_prime(s)
        tloc = float(arc.t_of_s(s % arc.total))
        speed = orbit.speed(tloc)
        derivs = [chi, abs(chip * speed * chi)]
        if orbit.order >= 3:
            h = 1e-6 * w
            chipp = (freeze.chi_prime(s + h) - freeze.chi_prime(s - h)) / (2 * h)
            derivs.append(abs(chipp * (speed * chi) ** 2
                              + chip * speed * chip * speed * chi))
        for q, v in enumerate(derivs[:len(worst)]):
            worst[q] = max(worst[q], abs(v))
    if np.any(worst > 1.0 + tau + 1e-9):
        raise BranchConstructionFailure(
            f"reparametrization derivative bound violated: max |p^(q)| = "
            f"{worst.max():.3g} > 1 + tau = {1 + tau:.3g}")

    pf = PerturbedField("homoclinic", X, orbit, box, bump,
                        weights=make_branch_weights(bump), freeze=freeze)
    pf._t_star_slow = t_star
    pf.p_derivative_bounds = tuple(float(v) for v in worst)
    pf.tau = float(tau)
    return pf


# --------------------------------------------------------------------------
# C^r distance report
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CrDistanceReport:
    mode: str
    order: int
    alpha: float
    epsilon: float
    rho0: float
    b: float
    L: float
    H: float
    measured: tuple          # m_q
    bounds: tuple            # bound_q
    seed: int
    sample_count: int
    clamp_active: bool = False

    @property
    def verdicts(self):
        return tuple(m <= b for m, b in zip(self.measured, self.bounds))

    @property
    def passed(self):
        return all(self.verdicts)

    def to_json(self):
        return {
            "mode": self.mode,
            "r": self.order,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "rho0": self.rho0,
            "constants": {"b": self.b, "L": self.L, "H": self.H},
            "per_order": [
                {"q": q, "measured": self.measured[q], "bound": self.bounds[q],
                 "pass": bool(self.verdicts[q])}
                for q in range(self.order + 1)
            ],
            "seed": self.seed,
        }


def normal_probe(Y, order, sample_count=600, seed=0):
    """Sup of the pure normal-direction iterated derivatives of Y - X.

    Isolates the bump-factor mechanism: the tube-normal direction sees
    rho^(q)(d), so these sups scale like eps^{-q}. The full h-family sup of
    cr_distance additionally contains an eps-independent tangential floor
    (the along-orbit variation of the correction), which only obeys the
    upper bound.
    """
    box = Y.box
    samples = tube_samples(Y, sample_count, seed=seed)
    out = np.zeros(order + 1)
    for x in samples:
        pr = project(box, x)
        if pr is OUTSIDE:
            continue
        n_dir = x - pr.nearest.foot
        dn = np.linalg.norm(n_dir)
        if dn < 1e-12:
            continue
        n_dir = n_dir / dn
        corr = Y.correction_jets(x, 0.0, order)
        out[0] = max(out[0], float(np.linalg.norm([j.value for j in corr])))
        for q in range(1, order + 1):
            v = iterated_directional(corr, (n_dir,) * q)
            out[q] = max(out[q], float(np.linalg.norm(v)))
    return tuple(float(v) for v in out)


def _normal_frame(tangent):
    n = len(tangent)
    t = tangent / np.linalg.norm(tangent)
    basis = []
    for k in np.argsort(np.abs(t)):
        e = np.zeros(n)
        e[k] = 1.0
        for b in [t] + basis:
            e = e - (e @ b) * b
        nrm = np.linalg.norm(e)
        if nrm > 1e-8:
            basis.append(e / nrm)
        if len(basis) == n - 1:
            break
    return basis


def tube_samples(Y, count, seed=0):
    """Deterministic sample set: blend-window-focused orbit parameters x
    normal shells, plus uniform tube coverage."""
    orbit, box = Y.orbit, Y.box
    rng = np.random.default_rng(seed)
    T, eps = orbit.T, box.epsilon
    t_a = orbit.window[0]
    pts = []
    n_focus = int(0.6 * count)
    shells = np.array([0.05, 0.2, 0.4, 0.6, 0.8, 0.95])
    focus_ok = t_a < T * (1.0 - 1e-12)
    k = 0
    while len(pts) < count:
        if k < n_focus and focus_ok:
            t = rng.uniform(t_a, T)
        else:
            t = rng.uniform(0.0, T)
        x0 = orbit.point(t)
        tangent = orbit.velocity(t)
        frame = _normal_frame(tangent)
        direction = frame[rng.integers(len(frame))]
        if len(frame) > 1:
            mix = rng.normal(size=len(frame))
            direction = sum(m * f for m, f in zip(mix, frame))
            direction /= np.linalg.norm(direction)
        d = shells[k % len(shells)] * eps
        pts.append(x0 + d * direction)
        k += 1
    return np.array(pts)


def cr_distance(X, Y, box, order, h_family=None, sample_count=1000, seed=0,
                lipschitz=None, residual_profile=None):
    """Measured sup norms m_q of the iterated Lie derivatives of X - Y over
    a stratified sample of the tube, against the closing-bound
    (rho0/eps^q) b^2 L^{2r} (L^r + H^r) (eps L^r + 2) alpha."""
    if sample_count < 1000:
        raise ValueError("sample_count must be >= 1000")
    orbit = Y.orbit
    man = orbit.manifold
    if h_family is None:
        h_family = default_h_family(X.dimension, seed=seed)
    samples = tube_samples(Y, sample_count, seed=seed)

    measured = np.zeros(order + 1)
    n_basis = X.dimension
    for x in samples:
        corr = Y.correction_jets(x, 0.0, order)
        if all(not j.c for j in corr):
            continue
        measured[0] = max(measured[0], float(np.linalg.norm(
            [j.value for j in corr])))
        for q in range(1, order + 1):
            for tup in _direction_tuples(h_family, n_basis, q):
                v = iterated_directional(corr, tup)
                measured[q] = max(measured[q], float(np.linalg.norm(v)))

    eps = box.epsilon
    alpha = orbit.event.alpha
    rho0 = Y.bump.rho0
    b = 3.0 * man.basis_norm_sum(orbit.x0)
    if lipschitz is None:
        pts = orbit.points_many(np.linspace(0, orbit.T, 128, endpoint=False))
        region = Box.around(pts, margin=1.5 * eps)
        lipschitz = estimate_lipschitz(X, region, order,
                                       3 if X.dimension > 2 else 5)
    L = lipschitz.L
    if residual_profile is None:
        residual_profile = orbit.residuals if orbit.residuals is not None \
            else interpolation_residual(orbit, X, samples=400,
                                        lipschitz=lipschitz)
    H = residual_profile.H
    bounds = tuple(
        (rho0 / eps ** q) * b ** 2 * L ** (2 * order) *
        (L ** order + H ** order) * (eps * L ** order + 2.0) * alpha
        for q in range(order + 1))
    return CrDistanceReport(mode=Y.mode, order=order, alpha=float(alpha),
                            epsilon=float(eps), rho0=float(rho0), b=float(b),
                            L=float(L), H=float(H),
                            measured=tuple(float(m) for m in measured),
                            bounds=bounds, seed=seed,
                            sample_count=sample_count)


# --------------------------------------------------------------------------
# Closure verification
# --------------------------------------------------------------------------

def generic_flow_derivs(field, x, t0, order):
    """d^q psi/dt^q for a field-like object (uses jets, no expression tree)."""
    n = field.dimension
    fjets = field.jet_components(x, t0, order, include_time=True)
    series = [np.asarray(x, dtype=float)]
    for k in range(order):
        dx = [Jet(1, k, {(m,): series[m][i] for m in range(1, k + 1)})
              for i in range(n)]
        dt = Jet(1, k, {(1,): 1.0} if k >= 1 else {})
        nxt = np.empty(n)
        for i in range(n):
            acc = Jet(1, k, {})
            for alpha, cv in fjets[i].c.items():
                if cv == 0.0:
                    continue
                term = Jet.constant(cv, 1, k)
                for var, p in enumerate(alpha[:n]):
                    for _ in range(p):
                        term = term * dx[var]
                for _ in range(alpha[n]):
                    term = term * dt
                acc = acc + term
            nxt[i] = acc.coeff((k,))
        series.append(nxt / (k + 1))
    fact = 1.0
    out = np.empty((order + 1, n))
    for q in range(order + 1):
        out[q] = series[q] * fact
        fact *= (q + 1)
    return out


@dataclass(frozen=True)
class ClosureReport:
    position_mismatch: float
    per_order_mismatch: tuple
    period: float

    def to_json(self):
        return {"position_mismatch": self.position_mismatch,
                "per_order_mismatch": list(self.per_order_mismatch),
                "period": self.period}


def verify_closure(Y, orbit, order, rtol=1e-10, atol=1e-10):
    """Integrate the perturbed flow from x0 over one period and report the
    reclosing mismatch plus per-order flow-derivative mismatches."""
    man = orbit.manifold
    x0 = orbit.point(0.0)
    traj = integrate(Y, man, x0, (0.0, orbit.T), rtol=rtol, atol=atol)
    x_end = traj(orbit.T)
    pos = man.distance(x0, x_end)
    d0 = generic_flow_derivs(Y, x0, 0.0, order)
    d1 = generic_flow_derivs(Y, man.align(x0, x_end), orbit.T, order)
    per_order = tuple(float(np.linalg.norm(d1[q] - d0[q]))
                      for q in range(1, order + 1))
    return ClosureReport(position_mismatch=float(pos),
                         per_order_mismatch=per_order, period=orbit.T)
