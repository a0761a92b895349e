"""Hermite closing, residuals, arc length, curvature, flow box, projection."""

import math

import numpy as np
import pytest

from orbitclose import parse_field
from orbitclose.closing import (OUTSIDE, arclength, build_flowbox,
                                curvature_radius, hermite_close,
                                interpolation_residual, project)
from orbitclose.errors import RadiusTooLarge, ZeroSpeed
from orbitclose.flow import ReturnEvent, integrate, synthesize_event
from orbitclose.geometry import Euclidean

E2 = Euclidean(2)
ROT = parse_field("[-y, x]", 2, name="rotation2d")


def rotation_orbit(alpha=1e-4, order=2, window=None):
    ev = synthesize_event(ROT, E2, [1.0, 0.0], 2 * math.pi, alpha)
    traj = integrate(ROT, E2, ev.x0, (0.0, ev.T), rtol=1e-11, atol=1e-11)
    return hermite_close(traj, ev, order, window=window)


def exact_orbit(field=ROT, x0=(1.0, 0.0), T=2 * math.pi, order=2, window=None):
    x0 = np.array(x0, dtype=float)
    traj = integrate(field, E2, x0, (0.0, T), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=T, x_ret=traj(T), alpha=0.0)
    return hermite_close(traj, ev, order, window=window)


# time-dependent transport field tracing a fixed closed curve: a lemniscate-
# like loop whose two strand passes sit 0.1 apart near the origin
TRACER = parse_field("[cos(t), 0.8*cos(2.0*t) - 0.05*sin(t)]", 2, name="tracer")
TRACER_X0 = (0.0, 0.05)   # curve (sin t, 0.4 sin 2t + 0.05 cos t)


def tracer_orbit(order=2):
    return exact_orbit(field=TRACER, x0=TRACER_X0, T=2 * math.pi, order=order)


# --------------------------------------------------------------------------
# hermite_close
# --------------------------------------------------------------------------

def test_close_exact_return_identity():
    orbit = exact_orbit()
    ts = np.linspace(0.0, orbit.T, 64, endpoint=False)
    for t in ts:
        np.testing.assert_allclose(orbit.point(t),
                                   [math.cos(t), math.sin(t)], atol=1e-8)
    assert all(r < 1e-7 for r in orbit.endpoint_residuals)


def test_close_bitwise_closure():
    orbit = rotation_orbit()
    assert np.array_equal(orbit.point(0.0), orbit.point(orbit.T))
    assert np.array_equal(orbit.point(0.0), orbit.x0)


def test_close_endpoint_derivative_matching():
    orbit = rotation_orbit(alpha=1e-4, order=2)
    assert all(r <= 1e-8 for r in orbit.endpoint_residuals)
    # seam continuity: left limit at T against the t=0 jets
    left = orbit.jets(orbit.T - 1e-13, 2)
    right = orbit.jets(1e-13, 2)
    np.testing.assert_allclose(left, right, atol=1e-7)


def test_close_residual_linear_in_alpha():
    """log-log slope 1 +- 0.1 with the window held fixed across the family."""
    sups = []
    alphas = [1e-3, 1e-4, 1e-5]
    for a in alphas:
        orbit = rotation_orbit(alpha=a, order=2, window=2 * math.pi / 20)
        prof = interpolation_residual(orbit, ROT, samples=400)
        sups.append(prof.per_order_sup[0])
    slope = np.polyfit(np.log(alphas), np.log(sups), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.1)


def test_close_position_only_r0():
    orbit = rotation_orbit(alpha=1e-4, order=0)
    assert np.array_equal(orbit.point(0.0), orbit.point(orbit.T))
    assert orbit.endpoint_residuals[0] <= 1e-10


# --------------------------------------------------------------------------
# interpolation_residual
# --------------------------------------------------------------------------

def test_residual_zero_for_exact_orbit():
    orbit = exact_orbit(order=3)
    prof = interpolation_residual(orbit, ROT, samples=300)
    assert all(v == 0.0 for v in prof.per_order_sup)


def test_residual_vanishes_outside_window():
    orbit = rotation_orbit(alpha=1e-4)
    prof = interpolation_residual(orbit, ROT, samples=400)
    outside = prof.t_samples < orbit.window[0]
    assert np.all(prof.per_order_values[:, outside] == 0.0)


def test_residual_measured_constant_inequality():
    orbit = rotation_orbit(alpha=1e-4, order=2)
    prof = interpolation_residual(orbit, ROT, samples=600)
    bound = prof.b ** 2 * (prof.L ** 2 + prof.H ** 2) * prof.L ** 2 * prof.alpha
    for q in range(3):
        assert prof.per_order_sup[q] <= bound * (1.0 + 1e-9)


def test_residual_scales_with_measured_constant():
    orbit = rotation_orbit(alpha=1e-4, order=2)
    prof = interpolation_residual(orbit, ROT, samples=400)
    c_measured = prof.per_order_sup[0] / orbit.event.alpha
    assert prof.per_order_sup[0] <= c_measured * 1e-4 * (1 + 1e-12)


# --------------------------------------------------------------------------
# arclength
# --------------------------------------------------------------------------

def test_arclength_unit_circle():
    orbit = exact_orbit()
    arc = arclength(orbit)
    assert arc.total == pytest.approx(2 * math.pi, abs=1e-8)
    for t in np.linspace(0.1, 6.0, 20):
        assert float(arc.s_of_t(t)) == pytest.approx(t, abs=1e-8)


def test_arclength_radius_two_circle():
    # unit angular speed on radius 2: length 4*pi
    orbit = exact_orbit(x0=(2.0, 0.0))
    arc = arclength(orbit)
    assert arc.total == pytest.approx(4 * math.pi, abs=1e-7)


def test_arclength_unit_speed_reparam():
    orbit = rotation_orbit(alpha=1e-4)
    arc = arclength(orbit)
    assert float(arc.s_of_t(0.0)) == 0.0
    # ds/ds of the reparametrized curve == 1 via central differences in s
    for s in np.linspace(0.3, arc.total - 0.3, 100):
        h = 1e-5 * arc.total
        p_plus = orbit.point(float(arc.t_of_s(s + h)))
        p_minus = orbit.point(float(arc.t_of_s(s - h)))
        assert np.linalg.norm(p_plus - p_minus) / (2 * h) == \
            pytest.approx(1.0, abs=1e-8)


def test_arclength_monotone():
    orbit = rotation_orbit(alpha=1e-3)
    arc = arclength(orbit)
    assert np.all(np.diff(arc.s_knots) > 0)


# --------------------------------------------------------------------------
# curvature_radius
# --------------------------------------------------------------------------

def test_curvature_circle():
    for radius in (1.0, 2.0):
        orbit = exact_orbit(x0=(radius, 0.0), order=3, window=2 * math.pi / 40)
        prof = curvature_radius(orbit)
        assert prof.rc_min == pytest.approx(radius, rel=1e-6)


def test_curvature_ellipse():
    # field [-2y, x/2] traces x = 2cos t, y = sin t: Rc_min = b^2/a = 0.5
    ell = parse_field("[-2.0*y, x/2.0]", 2)
    orbit = exact_orbit(field=ell, x0=(2.0, 0.0))
    prof = curvature_radius(orbit)
    assert prof.rc_min == pytest.approx(0.5, abs=1e-4)


def test_curvature_straightish_segments():
    # huge circle: near-zero curvature along straight-ish segments
    orbit = exact_orbit(x0=(1e4, 0.0), order=3, window=2 * math.pi / 40)
    prof = curvature_radius(orbit)
    assert prof.rc_min == pytest.approx(1e4, rel=1e-4)
    assert prof.kappa_max <= 1.01e-4


def test_curvature_cap():
    from orbitclose.closing import _RC_CAP
    assert _RC_CAP == 1e6


# --------------------------------------------------------------------------
# build_flowbox / project
# --------------------------------------------------------------------------

def test_flowbox_circle_no_overlap():
    orbit = exact_orbit()
    box = build_flowbox(orbit, 0.3)
    assert box.overlaps == ()


def test_flowbox_auto_radius_circle():
    orbit = exact_orbit()
    box = build_flowbox(orbit, "auto")
    assert box.epsilon == pytest.approx(0.5, rel=1e-3)


def test_flowbox_radius_too_large():
    orbit = exact_orbit()
    with pytest.raises(RadiusTooLarge):
        build_flowbox(orbit, 1.5)


def test_flowbox_overlap_detected():
    """Loop with two strand passes 0.1 apart near the origin, eps = 0.2."""
    orbit = tracer_orbit()
    box = build_flowbox(orbit, 0.2)
    assert len(box.overlaps) >= 1
    # region pairs are parameter-disjoint after the eps/v_max guard band
    guard = box.epsilon / box.v_max
    for (a0, a1), (b0, b1) in box.overlaps:
        assert min(b0, b1) - max(a0, a1) > guard or \
            min(a0, a1) - max(b0, b1) > guard
    # brute-force all-pairs oracle: exists strand pair closer than 2 eps
    ts = np.linspace(0, orbit.T, 512, endpoint=False)
    pts = orbit.points_many(ts)
    d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    arc = np.abs(ts[:, None] - ts[None, :])
    arc = np.minimum(arc, orbit.T - arc)
    mask = (arc > orbit.T / 4) & (d < 2 * 0.2)
    assert np.any(mask)


def test_project_on_orbit():
    orbit = exact_orbit()
    box = build_flowbox(orbit, 0.3)
    x = orbit.point(1.234)
    proj = project(box, x)
    assert proj is not OUTSIDE
    assert proj.unique
    assert proj.nearest.d <= 1e-9
    np.testing.assert_allclose(proj.nearest.foot, x, atol=1e-9)


def test_project_normal_offset():
    orbit = exact_orbit()
    box = build_flowbox(orbit, 0.3)
    t_star = 0.7
    p = orbit.point(t_star)
    normal = p / np.linalg.norm(p)
    x = p + 0.1 * normal
    proj = project(box, x)
    assert proj.unique
    assert proj.nearest.d == pytest.approx(0.1, abs=1e-9)
    assert proj.nearest.t == pytest.approx(t_star, abs=1e-8)
    # brute-force oracle over a dense grid
    ts = np.linspace(0, orbit.T, 20000, endpoint=False)
    d = np.linalg.norm(orbit.points_many(ts) - x, axis=1)
    assert abs(ts[np.argmin(d)] - proj.nearest.t) < 1e-3


def test_project_outside():
    orbit = exact_orbit()
    box = build_flowbox(orbit, 0.3)
    assert project(box, np.array([3.0, 3.0])) is OUTSIDE
    assert project(box, np.array([0.0, 0.0])) is OUTSIDE


def test_project_idempotent():
    orbit = rotation_orbit(alpha=1e-4)
    box = build_flowbox(orbit, 0.3)
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = rng.uniform(0, orbit.T)
        r = rng.uniform(-0.25, 0.25)
        p = orbit.point(t)
        x = p + r * p / np.linalg.norm(p)
        proj = project(box, x)
        assert proj is not OUTSIDE
        again = project(box, proj.nearest.foot)
        assert again.nearest.d <= 1e-10


def test_project_two_branches_in_overlap():
    orbit = tracer_orbit()
    box = build_flowbox(orbit, 0.2)
    x = np.array([0.0, 0.0])   # between the strands at y = +-0.05
    proj = project(box, x)
    assert proj is not OUTSIDE
    assert len(proj.branches) == 2
    assert all(b.d < box.epsilon for b in proj.branches)
    # brute-force grid confirms two local minima of the distance
    ts = np.linspace(0, orbit.T, 4000, endpoint=False)
    d = np.linalg.norm(orbit.points_many(ts) - x, axis=1)
    local_min = (d < np.roll(d, 1)) & (d < np.roll(d, -1)) & (d < box.epsilon)
    assert local_min.sum() == 2


def test_zero_speed_guard():
    orbit = rotation_orbit(alpha=1e-4)
    orbit.v_min = 0.0
    with pytest.raises(ZeroSpeed):
        arclength(orbit)


def test_orbit_csv(tmp_path):
    from orbitclose.closing import export_orbit_csv
    orbit = exact_orbit()
    path = tmp_path / "orbit.csv"
    export_orbit_csv(orbit, path, samples=50)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,s,x1,x2,kappa"
    assert len(lines) == 51
