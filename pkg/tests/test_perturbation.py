"""Bump profiles, branch weights, perturbation modes, C^r distance, closure."""

import math

import numpy as np
import pytest

from orbitclose import parse_field
from orbitclose.closing import OUTSIDE, build_flowbox, hermite_close, project
from orbitclose.errors import NotSlowEnough, OverlapPresent
from orbitclose.flow import ReturnEvent, integrate, synthesize_event
from orbitclose.geometry import Euclidean, FlatTorus
from orbitclose.perturbation import (cr_distance, make_branch_weights,
                                     make_bump, perturb_autonomous,
                                     perturb_homoclinic,
                                     perturb_nonautonomous, verify_closure)

E2 = Euclidean(2)
ROT = parse_field("[-y, x]", 2, name="rotation2d")


def rotation_setup(alpha=1e-4, order=2, epsilon=0.3, window=None):
    ev = synthesize_event(ROT, E2, [1.0, 0.0], 2 * math.pi, alpha)
    traj = integrate(ROT, E2, ev.x0, (0.0, ev.T), rtol=1e-11, atol=1e-11)
    orbit = hermite_close(traj, ev, order, window=window)
    box = build_flowbox(orbit, epsilon)
    return orbit, box


# --------------------------------------------------------------------------
# make_bump
# --------------------------------------------------------------------------

def test_bump_boundary_conditions():
    for r in (1, 2, 3):
        bump = make_bump(0.7, order=r)
        assert bump.eval(0.0) == 1.0
        assert bump.eval(0.7) == 0.0
        assert bump.eval(1.0) == 0.0
        for q in range(r + 1):
            assert bump.derivative(0.75, q) == 0.0
            # one-sided limit at epsilon from inside: continuous to zero
            assert abs(bump.derivative(0.7 - 1e-9, q)) < \
                1e-6 * bump.rho0 / 0.7 ** q


def test_bump_r1_closed_form():
    bump = make_bump(1.0, order=1)
    # rho(d) = 1 - 3 d^2 + 2 d^3
    for d in np.linspace(0, 1, 11):
        assert bump.eval(d) == pytest.approx(1 - 3 * d**2 + 2 * d**3, abs=1e-14)
    assert bump.eval(0.5) == pytest.approx(0.5)


def test_bump_derivative_bounds_on_grid():
    for r in (1, 2, 3):
        eps = 0.45
        bump = make_bump(eps, order=r)
        ds = np.linspace(0, eps, 10_000, endpoint=False)
        for q in range(r + 1):
            vals = np.array([abs(bump.derivative(d, q)) for d in ds[::25]])
            assert np.all(vals <= bump.rho0 / eps ** q * (1 + 1e-12))
        assert bump.rho0 >= 1.0


def test_bump_amplitude_scales_rho0():
    b1 = make_bump(0.3, amplitude=1.0, order=2)
    b2 = make_bump(0.3, amplitude=2.0, order=2)
    assert b2.rho0 == pytest.approx(2 * b1.rho0)
    assert b2.eval(0.0) == 2.0


# --------------------------------------------------------------------------
# branch weights
# --------------------------------------------------------------------------

def test_branch_weights_constraints():
    bump = make_bump(0.4, order=2)
    bw = make_branch_weights(bump)
    eps = 0.4
    # rho_bar_i = 0 when d_i >= eps or d_j = 0; = 1 when d_i = 0 (d_j > 0)
    assert bw.weight(0.45, 0.1) == 0.0
    assert bw.weight(0.1, 0.0) == 0.0
    assert bw.weight(0.0, 0.2) == pytest.approx(1.0, abs=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(200):
        d1, d2 = rng.uniform(1e-6, eps, size=2)
        s = bw.weight(d1, d2) + bw.weight(d2, d1)
        assert s <= max(bump.eval(d1), bump.eval(d2)) + 1e-12
        assert s <= 1.0 + 1e-12


def test_branch_weight_partial_bounds_on_grid():
    bump = make_bump(0.4, order=2)
    bw = make_branch_weights(bump)
    eps, h = 0.4, 1e-5
    rng = np.random.default_rng(1)
    for _ in range(100):
        d1, d2 = rng.uniform(0.02, eps - 0.02, size=2)
        g1 = (bw.weight(d1 + h, d2) - bw.weight(d1 - h, d2)) / (2 * h)
        g2 = (bw.weight(d1 + h, d2) - 2 * bw.weight(d1, d2)
              + bw.weight(d1 - h, d2)) / h**2
        assert abs(g1) <= 4 * bump.rho0 / eps
        assert abs(g2) <= 40 * bump.rho0 / eps**2


# --------------------------------------------------------------------------
# nonautonomous mode
# --------------------------------------------------------------------------

def test_nonautonomous_on_orbit_at_anchor():
    orbit, box = rotation_setup()
    Y = perturb_nonautonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    for t_par in (0.3, 2.0, orbit.T - 0.1):
        x = orbit.point(t_par)
        v = Y.value(x, t_par)
        np.testing.assert_allclose(v, orbit.velocity(t_par), atol=1e-9)


def test_nonautonomous_outside_bitwise():
    orbit, box = rotation_setup()
    Y = perturb_nonautonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.uniform(-3, 3, size=2)
        if project(box, x) is OUTSIDE:
            assert np.array_equal(Y.value(x, 0.7), ROT.value(x, 0.7))


def test_nonautonomous_alpha_zero_is_base():
    x0 = np.array([1.0, 0.0])
    traj = integrate(ROT, E2, x0, (0.0, 2 * math.pi), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=2 * math.pi, x_ret=traj(2 * math.pi), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    box = build_flowbox(orbit, 0.3)
    Y = perturb_nonautonomous(ROT, orbit, box, make_bump(0.3, order=2))
    rng = np.random.default_rng(3)
    for _ in range(30):
        x = rng.uniform(-1.4, 1.4, size=2)
        np.testing.assert_allclose(Y.value(x, 0.2), ROT.value(x, 0.2),
                                   atol=2e-9)


def test_nonautonomous_rejects_overlap():
    tracer = parse_field("[cos(t), 0.8*cos(2.0*t) - 0.05*sin(t)]", 2)
    x0 = np.array([0.0, 0.05])
    traj = integrate(tracer, E2, x0, (0.0, 2 * math.pi), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=2 * math.pi, x_ret=traj(2 * math.pi), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    box = build_flowbox(orbit, 0.2)
    with pytest.raises(OverlapPresent):
        perturb_nonautonomous(tracer, orbit, box, make_bump(0.2, order=2))


# --------------------------------------------------------------------------
# autonomous mode
# --------------------------------------------------------------------------

def test_autonomous_on_orbit_everywhere():
    orbit, box = rotation_setup()
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    for t_par in np.linspace(0, orbit.T, 17, endpoint=False):
        x = orbit.point(t_par)
        np.testing.assert_allclose(Y.value(x), orbit.velocity(t_par), atol=1e-9)


def test_autonomous_support_bitwise():
    orbit, box = rotation_setup()
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(500):
        x = rng.uniform(-3, 3, size=2)
        if project(box, x) is OUTSIDE:
            assert np.array_equal(Y.value(x), ROT.value(x))
            checked += 1
    assert checked > 100


def test_autonomous_two_branch_blend():
    tracer = parse_field("[cos(t), 0.8*cos(2.0*t) - 0.05*sin(t)]", 2)
    x0 = np.array([0.0, 0.05])
    traj = integrate(tracer, E2, x0, (0.0, 2 * math.pi), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=2 * math.pi, x_ret=traj(2 * math.pi), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    box = build_flowbox(orbit, 0.2)
    Y = perturb_autonomous(tracer, orbit, box, make_bump(0.2, order=2))
    # on strand 1 (d_1 = 0): weight of branch 1 is 1, branch 2 contributes 0
    x = orbit.point(0.0)
    proj = project(box, x)
    assert len(proj.branches) == 2
    np.testing.assert_allclose(Y.value(x, 0.0), orbit.velocity(0.0), atol=1e-9)
    # between strands both corrections vanish for this alpha = 0 curve
    v_mid = Y.value(np.array([0.0, 0.0]), 0.0)
    assert np.all(np.isfinite(v_mid))


def test_jacobian_matches_finite_differences():
    orbit, box = rotation_setup(alpha=1e-3)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(10):
        t_par = rng.uniform(0, orbit.T)
        d = rng.uniform(0.05, 0.25)
        p = orbit.point(t_par)
        nrm = p / np.linalg.norm(p)
        x = p + d * nrm
        J = Y.jacobian(x)
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            fd = (Y.value(x + e) - Y.value(x - e)) / (2 * h)
            np.testing.assert_allclose(J[:, j], fd, atol=1e-5)


def test_jets_match_finite_differences_order2():
    orbit, box = rotation_setup(alpha=1e-3)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    p = orbit.point(1.0)
    x = p + 0.12 * p / np.linalg.norm(p)
    jets = Y.jet_components(x, 0.0, 2)
    h = 1e-4
    e0 = np.array([h, 0.0])
    fd2 = (Y.value(x + e0) - 2 * Y.value(x) + Y.value(x - e0)) / h**2
    got = np.array([j.partial((2, 0)) for j in jets])
    np.testing.assert_allclose(got, fd2, atol=2e-4)


def test_smoothness_across_tube_boundary():
    orbit, box = rotation_setup(alpha=1e-5)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rng = np.random.default_rng(6)
    for _ in range(20):
        t_par = rng.uniform(orbit.window[0], orbit.T)
        p = orbit.point(t_par)
        nrm = p / np.linalg.norm(p)
        inner = p + (box.epsilon - 5e-7) * nrm
        outer = p + (box.epsilon + 5e-7) * nrm
        ci = Y.correction_jets(inner, 0.0, 2)
        co = Y.correction_jets(outer, 0.0, 2)
        for a, b in zip(ci, co):
            assert all(v == 0.0 for v in b.c.values())
            for alpha, v in a.c.items():
                assert abs(v - b.coeff(alpha)) < 1e-7


def test_transport_isometry_inherited():
    """||Ybar(x) - Xbar(x)|| == ||Y(foot) - X(foot)|| (identity transport)."""
    orbit, box = rotation_setup(alpha=1e-4)
    bump = make_bump(box.epsilon, order=2)
    Y = perturb_autonomous(ROT, orbit, box, bump)
    rng = np.random.default_rng(7)
    for _ in range(50):
        t_par = rng.uniform(orbit.window[0], orbit.T)
        p = orbit.point(t_par)
        nrm = p / np.linalg.norm(p)
        x = p + rng.uniform(0.02, 0.28) * nrm
        proj = project(box, x)
        foot_t, foot, d = proj.nearest.t, proj.nearest.foot, proj.nearest.d
        rho = bump.eval(d)
        if rho < 1e-6:
            continue
        transported = (Y.value(x) - ROT.value(x)) / rho
        at_foot = Y.value(foot) - ROT.value(foot)
        assert np.linalg.norm(transported) == pytest.approx(
            np.linalg.norm(at_foot), abs=1e-9)


def test_nonautonomous_time_wraparound():
    """The bump argument takes |t - t_x| mod T with the minimal representative."""
    orbit, box = rotation_setup(alpha=1e-4)
    Y = perturb_nonautonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    t_par = 1.3
    x = orbit.point(t_par) + 0.05 * orbit.point(t_par)
    v0 = Y.value(x, t_par)
    v_shift = Y.value(x, t_par + orbit.T)
    np.testing.assert_allclose(v_shift, v0, atol=1e-12)


# --------------------------------------------------------------------------
# cr_distance
# --------------------------------------------------------------------------

def test_cr_distance_alpha_zero():
    x0 = np.array([1.0, 0.0])
    traj = integrate(ROT, E2, x0, (0.0, 2 * math.pi), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=2 * math.pi, x_ret=traj(2 * math.pi), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    box = build_flowbox(orbit, 0.3)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(0.3, order=2))
    rep = cr_distance(ROT, Y, box, 2, sample_count=1000, seed=0)
    assert all(m <= 1e-8 for m in rep.measured)


def test_cr_distance_bound_holds():
    orbit, box = rotation_setup(alpha=1e-4, order=2)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rep = cr_distance(ROT, Y, box, 2, sample_count=1000, seed=1)
    assert rep.passed
    assert rep.measured[0] > 0


def test_cr_distance_linear_in_amplitude():
    orbit, box = rotation_setup(alpha=1e-4, order=2)
    Y1 = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, 1.0, 2))
    Y2 = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, 2.0, 2))
    r1 = cr_distance(ROT, Y1, box, 0, sample_count=1000, seed=2)
    r2 = cr_distance(ROT, Y2, box, 0, sample_count=1000, seed=2)
    assert r2.measured[0] == pytest.approx(2 * r1.measured[0], rel=0.05)


def test_cr_distance_json_shape():
    orbit, box = rotation_setup(alpha=1e-4)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rep = cr_distance(ROT, Y, box, 1, sample_count=1000, seed=3)
    js = rep.to_json()
    assert set(js) == {"mode", "r", "alpha", "epsilon", "rho0", "constants",
                       "per_order", "seed"}
    assert len(js["per_order"]) == 2


# --------------------------------------------------------------------------
# verify_closure
# --------------------------------------------------------------------------

def test_verify_closure_rotation():
    orbit, box = rotation_setup(alpha=1e-4, order=2)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(box.epsilon, order=2))
    rep = verify_closure(Y, orbit, 2)
    assert rep.position_mismatch <= 1e-6
    assert rep.per_order_mismatch[0] <= 1e-5


def test_verify_closure_alpha_zero():
    x0 = np.array([1.0, 0.0])
    traj = integrate(ROT, E2, x0, (0.0, 2 * math.pi), rtol=1e-11, atol=1e-11)
    ev = ReturnEvent(x0=x0, T=2 * math.pi, x_ret=traj(2 * math.pi), alpha=0.0)
    orbit = hermite_close(traj, ev, 2)
    box = build_flowbox(orbit, 0.3)
    Y = perturb_autonomous(ROT, orbit, box, make_bump(0.3, order=2))
    rep = verify_closure(Y, orbit, 1)
    assert rep.position_mismatch <= 1e-8


# --------------------------------------------------------------------------
# homoclinic mode
# --------------------------------------------------------------------------

PEND = parse_field("[y, -sin(x)]", 2, name="pendulum")
CYL = FlatTorus((2 * math.pi, None))


@pytest.fixture(scope="module")
def pendulum_setup():
    x0 = np.array([0.0, 1.999])
    # libration orbit: exactly periodic; find its period then close exactly
    from orbitclose.flow import find_returns
    events = find_returns(PEND, CYL, x0, alpha_max=1e-6, horizon=40.0,
                          t_min_filter=5.0)
    assert events
    ev = events[0]
    traj = integrate(PEND, CYL, x0, (0.0, ev.T), rtol=1e-11, atol=1e-11)
    ev0 = ReturnEvent(x0=x0, T=ev.T, x_ret=traj(ev.T), alpha=0.0)
    orbit = hermite_close(traj, ev0, 2)
    box = build_flowbox(orbit, "auto")
    # slowest point: near (x_max, 0)
    ts = np.linspace(0, orbit.T, 4096, endpoint=False)
    speeds = np.array([orbit.speed(t) for t in ts])
    t_slow = ts[int(np.argmin(speeds))]
    y_slow = orbit.point(t_slow)
    Y = perturb_homoclinic(PEND, orbit, y_slow, tau=0.5,
                           bump=make_bump(box.epsilon, order=2), box=box)
    return orbit, box, y_slow, Y


def test_homoclinic_zero_exact(pendulum_setup):
    orbit, box, y_slow, Y = pendulum_setup
    v = Y.value(y_slow)
    assert np.all(v == 0.0)


def test_homoclinic_p_bounds(pendulum_setup):
    orbit, box, y_slow, Y = pendulum_setup
    assert all(v <= 1.5 + 1e-9 for v in Y.p_derivative_bounds)


def test_homoclinic_not_slow_enough():
    orbit_box = rotation_setup(alpha=1e-4)
    orbit, box = orbit_box
    with pytest.raises(NotSlowEnough):
        perturb_homoclinic(ROT, orbit, orbit.point(0.3), tau=0.5,
                           bump=make_bump(box.epsilon, order=2), box=box)


def test_homoclinic_forward_convergence(pendulum_setup):
    orbit, box, y_slow, Y = pendulum_setup
    arc = Y.arc
    s_star = Y.freeze.s_star
    # start on the outgoing arc just past the freeze window
    s0 = (s_star + 1.5 * Y.freeze.w) % arc.total
    x_start = orbit.point(float(arc.t_of_s(s0)))
    traj = integrate(Y, CYL, x_start, (0.0, 50.0), rtol=1e-10, atol=1e-10)
    assert CYL.distance(traj(50.0), y_slow) < 1e-3


def test_homoclinic_backward_convergence(pendulum_setup):
    orbit, box, y_slow, Y = pendulum_setup
    arc = Y.arc
    s_star = Y.freeze.s_star
    s0 = (s_star - 1.5 * Y.freeze.w) % arc.total
    x_start = orbit.point(float(arc.t_of_s(s0)))
    traj = integrate(Y, CYL, x_start, (0.0, -50.0), rtol=1e-10, atol=1e-10)
    assert CYL.distance(traj(-50.0), y_slow) < 1e-3


def test_homoclinic_support(pendulum_setup):
    orbit, box, y_slow, Y = pendulum_setup
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(300):
        x = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-2.5, 2.5)])
        if project(box, x) is OUTSIDE:
            assert np.array_equal(Y.value(x), PEND.value(x))
            checked += 1
    assert checked > 50
